//! Closed-form per-round energy model: on-device compute (forward pass at a
//! reduced fixed-point width, backward pass at full width) plus uplink
//! transmission of the quantized model update.
//!
//! Compute energy is anchored on a single multiply-accumulate: scaling a
//! MAC down to `n` of `n_max` bits costs `A * (n / n_max)^alpha`. Buffer
//! (SRAM) and DRAM accesses are expressed as multiples of that MAC cost.
//! Data that no longer fits the on-chip buffer spills to DRAM, which is
//! what the overflow terms charge for.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Accelerator cost constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipSpec {
    /// Energy of one full-width MAC, joules.
    pub mac_energy_j: f64,
    /// Voltage/width scaling exponent for a reduced-width MAC.
    pub scaling_exp: f64,
    /// DRAM access cost as a multiple of the MAC cost.
    pub dram_factor: f64,
    /// MAC array dimension (data reuse factor for buffer traffic).
    pub array_dim: f64,
    /// On-chip buffer capacity, bits.
    pub sram_bits: f64,
}

impl ChipSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mac_energy_j > 0.0
            && self.scaling_exp > 0.0
            && self.dram_factor > 0.0
            && self.array_dim >= 1.0
            && self.sram_bits > 0.0
            && [
                self.mac_energy_j,
                self.scaling_exp,
                self.dram_factor,
                self.array_dim,
                self.sram_bits,
            ]
            .iter()
            .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::config("chip constants must be positive and finite"))
        }
    }
}

/// Workload shape of the trained model, counted per inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArch {
    /// Trainable weights.
    pub weights: f64,
    /// Multiply-accumulates per forward pass.
    pub macs: f64,
    /// Activations produced per forward pass.
    pub activations: f64,
    /// Input values fetched from DRAM per forward pass.
    pub input_dim: f64,
    /// Full word length; training precision `n` ranges over `[2, max_train_bits]`.
    pub max_train_bits: u32,
    /// Cap on the transmission precision `m`.
    pub max_tx_bits: u32,
}

impl ModelArch {
    pub fn validate(&self) -> Result<()> {
        let positive = self.weights > 0.0
            && self.macs > 0.0
            && self.activations > 0.0
            && self.input_dim > 0.0;
        if !positive || !(2..=32).contains(&self.max_train_bits) || !(2..=32).contains(&self.max_tx_bits)
        {
            return Err(Error::config(
                "model architecture needs positive counts and bit caps in 2..=32",
            ));
        }
        Ok(())
    }
}

/// Uplink budget of one device.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkSpec {
    pub bandwidth_hz: f64,
    pub tx_power_w: f64,
    /// Noise spectral density, W/Hz.
    pub noise_w_hz: f64,
    /// Average channel gain (path loss), dimensionless.
    pub avg_gain: f64,
}

impl LinkSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.bandwidth_hz > 0.0
            && self.tx_power_w > 0.0
            && self.noise_w_hz > 0.0
            && self.avg_gain >= 0.0
            && self.avg_gain.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::config("link constants must be positive and finite"))
        }
    }
}

/// Forward-pass energy split, exposed for audits and tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceTerms {
    pub compute: f64,
    pub weight_traffic: f64,
    pub activation_traffic: f64,
    pub dram: f64,
}

impl InferenceTerms {
    pub fn total(&self) -> f64 {
        self.compute + self.weight_traffic + self.activation_traffic + self.dram
    }
}

/// Compute-energy evaluator for one chip/model pair.
#[derive(Debug, Clone, Copy)]
pub struct EnergyModel<'a> {
    pub chip: &'a ChipSpec,
    pub arch: &'a ModelArch,
}

impl<'a> EnergyModel<'a> {
    pub fn new(chip: &'a ChipSpec, arch: &'a ModelArch) -> Self {
        EnergyModel { chip, arch }
    }

    fn check_bits(&self, bits: f64) -> Result<()> {
        let hi = self.arch.max_train_bits as f64;
        if !(1.0..=hi).contains(&bits) || !bits.is_finite() {
            return Err(Error::domain(format!(
                "compute precision {bits} outside [1, {hi}]"
            )));
        }
        Ok(())
    }

    /// One MAC at `bits` of `max_train_bits` width.
    pub fn mac(&self, bits: f64) -> f64 {
        self.chip.mac_energy_j * (bits / self.arch.max_train_bits as f64).powf(self.chip.scaling_exp)
    }

    /// One buffer (SRAM) access at `bits` width: two MAC equivalents.
    pub fn buffer_access(&self, bits: f64) -> f64 {
        2.0 * self.mac(bits)
    }

    /// One DRAM access at `bits` width.
    pub fn dram_access(&self, bits: f64) -> f64 {
        self.chip.dram_factor * self.mac(bits)
    }

    /// Bits the forward pass wants resident on chip at width `bits`.
    fn resident_bits(&self, bits: f64) -> f64 {
        (self.arch.weights + self.arch.activations) * bits
    }

    pub fn inference_terms(&self, bits: f64) -> Result<InferenceTerms> {
        self.check_bits(bits)?;
        let arch = self.arch;
        let full = arch.max_train_bits as f64;
        let mac_n = self.mac(bits);
        let mac_full = self.mac(full);
        let reuse = (bits / (self.chip.array_dim * full)).sqrt();

        let compute = mac_n * arch.macs + 2.0 * arch.activations * mac_full;
        let weight_traffic = self.buffer_access(bits) * arch.weights + mac_n * arch.macs * reuse;
        let activation_traffic =
            2.0 * self.buffer_access(bits) * arch.activations + mac_n * arch.macs * reuse;
        let spill = (self.resident_bits(bits) - self.chip.sram_bits).max(0.0);
        let dram = self.dram_access(full) * arch.input_dim + 2.0 * self.dram_access(bits) * spill;

        Ok(InferenceTerms {
            compute,
            weight_traffic,
            activation_traffic,
            dram,
        })
    }

    /// Forward-pass energy at training width `bits`.
    pub fn inference(&self, bits: f64) -> Result<f64> {
        Ok(self.inference_terms(bits)?.total())
    }

    /// Backward-pass energy; always runs at full width.
    pub fn backprop(&self) -> f64 {
        let arch = self.arch;
        let full = arch.max_train_bits as f64;
        let mac_full = self.mac(full);
        let spill = (self.resident_bits(full) - self.chip.sram_bits).max(0.0);
        2.0 * arch.macs * mac_full
            + 2.0 * self.buffer_access(full) * arch.activations
            + self.buffer_access(full) * arch.weights
            + 2.0 * mac_full * arch.macs * (1.0 / self.chip.array_dim).sqrt()
            + 2.0 * self.dram_access(full) * spill
    }

    /// One local training iteration: forward at `bits`, backward at full width.
    pub fn local_iteration(&self, bits: f64) -> Result<f64> {
        Ok(self.inference(bits)? + self.backprop())
    }
}

/// Achievable uplink rate, bits per second.
pub fn uplink_rate(link: &LinkSpec) -> f64 {
    let snr = link.tx_power_w * link.avg_gain / (link.noise_w_hz * link.bandwidth_hz);
    link.bandwidth_hz * (1.0 + snr).log2()
}

/// Airtime to push `weights * tx_bits` bits through the link, seconds.
pub fn uplink_time(tx_bits: f64, weights: f64, link: &LinkSpec) -> Result<f64> {
    if tx_bits <= 0.0 || !tx_bits.is_finite() {
        return Err(Error::domain(format!("tx precision {tx_bits} must be positive")));
    }
    let rate = uplink_rate(link);
    if rate <= 0.0 {
        return Err(Error::infeasible(
            "uplink rate is zero (vanishing channel gain); transmission impossible",
        ));
    }
    Ok(weights * tx_bits / rate)
}

/// Transmit energy for one model update at `tx_bits` per weight.
pub fn uplink_energy(tx_bits: f64, weights: f64, link: &LinkSpec) -> Result<f64> {
    Ok(link.tx_power_w * uplink_time(tx_bits, weights, link)?)
}
