//! Run configuration: one TOML file covering the chip, the accounting
//! architecture, the cell, the convergence constants, the search box, and
//! the simulator knobs.
//!
//! Units are plain SI throughout the file: joules, watts, hertz, meters,
//! bits. No milli/pico prefixes anywhere; constants quoted in other units
//! get converted before they land here.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::convergence::{optimal_weights, ControlBounds, LearningParams};
use crate::energy::{ChipSpec, LinkSpec, ModelArch};
use crate::error::{Error, Result};
use crate::flsim::task::TaskSpec;
use crate::flsim::{ConstantEstimates, SimOptions};
use crate::network::{Deployment, RadioParams};

/// A constant that is either pinned to a value, listed per device, or
/// deferred to the measurement probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstSpec {
    Directive(String),
    Fixed(f64),
    PerDevice(Vec<f64>),
}

impl ConstSpec {
    pub fn is_estimate(&self) -> bool {
        matches!(self, ConstSpec::Directive(s) if s == "estimate")
    }

    fn validate(&self, key: &str) -> Result<()> {
        match self {
            ConstSpec::Directive(s) if s == "estimate" => Ok(()),
            ConstSpec::Directive(s) => Err(Error::config(format!(
                "{key}: unknown directive {s:?}, expected \"estimate\", a number, or a list"
            ))),
            ConstSpec::Fixed(v) if v.is_finite() && *v >= 0.0 => Ok(()),
            ConstSpec::Fixed(v) => Err(Error::config(format!("{key}: bad value {v}"))),
            ConstSpec::PerDevice(vs) if !vs.is_empty() && vs.iter().all(|v| v.is_finite()) => {
                Ok(())
            }
            ConstSpec::PerDevice(_) => {
                Err(Error::config(format!("{key}: list must be nonempty and finite")))
            }
        }
    }

    /// Resolves to a scalar, drawing on the probe result when deferred.
    fn scalar(&self, key: &str, probe: Option<f64>) -> Result<f64> {
        match self {
            ConstSpec::Fixed(v) => Ok(*v),
            ConstSpec::Directive(_) => probe.ok_or_else(|| {
                Error::config(format!("{key} = \"estimate\" but no probe result available"))
            }),
            ConstSpec::PerDevice(_) => Err(Error::config(format!(
                "{key}: expected a scalar, got a per-device list"
            ))),
        }
    }

    /// Resolves to one value per device.
    fn per_device(&self, key: &str, n: usize, probe: Option<&[f64]>) -> Result<Vec<f64>> {
        match self {
            ConstSpec::Fixed(v) => Ok(vec![*v; n]),
            ConstSpec::PerDevice(vs) if vs.len() == n => Ok(vs.clone()),
            ConstSpec::PerDevice(vs) => Err(Error::config(format!(
                "{key}: {} entries for {n} devices",
                vs.len()
            ))),
            ConstSpec::Directive(_) => probe.map(<[f64]>::to_vec).ok_or_else(|| {
                Error::config(format!("{key} = \"estimate\" but no probe result available"))
            }),
        }
    }
}

/// Per-device sampling-probability policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    Policy(String),
    PerDevice(Vec<f64>),
}

impl WeightSpec {
    fn validate(&self) -> Result<()> {
        match self {
            WeightSpec::Policy(p) if p == "uniform" || p == "optimal" => Ok(()),
            WeightSpec::Policy(p) => Err(Error::config(format!(
                "convergence.weights: unknown policy {p:?}, expected \"uniform\", \"optimal\", or a list"
            ))),
            WeightSpec::PerDevice(vs) => {
                let sum: f64 = vs.iter().sum();
                if vs.iter().all(|v| *v > 0.0) && (sum - 1.0).abs() <= 1e-9 {
                    Ok(())
                } else {
                    Err(Error::config(
                        "convergence.weights: entries must be positive and sum to 1",
                    ))
                }
            }
        }
    }

    fn resolve(&self, n: usize, noise_sd: &[f64]) -> Result<Vec<f64>> {
        match self {
            WeightSpec::Policy(p) if p == "uniform" => Ok(vec![1.0 / n as f64; n]),
            WeightSpec::Policy(_) => optimal_weights(noise_sd),
            WeightSpec::PerDevice(vs) if vs.len() == n => Ok(vs.clone()),
            WeightSpec::PerDevice(vs) => Err(Error::config(format!(
                "convergence.weights: {} entries for {n} devices",
                vs.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub devices: usize,
    pub area_side_m: f64,
    pub bandwidth_hz: f64,
    pub tx_power_w: f64,
    pub noise_w_hz: f64,
    pub pathloss_exp: f64,
    /// Placement seed; part of the system identity, deliberately separate
    /// from the training seed.
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            devices: 50,
            area_side_m: 500.0,
            bandwidth_hz: 1e7,
            tx_power_w: 0.1,
            noise_w_hz: 10f64.powf(-20.3),
            pathloss_exp: 4.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub smoothness: f64,
    pub strong_convexity: f64,
    pub curvature_cap: f64,
    pub step_scale: f64,
    pub step_offset: f64,
    pub target_gap: f64,
    pub grad_norm_bound: ConstSpec,
    pub divergence: ConstSpec,
    pub noise_sd: ConstSpec,
    pub weights: WeightSpec,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            smoothness: 0.097,
            strong_convexity: 0.05,
            curvature_cap: 100.0,
            step_scale: 40.0,
            step_offset: 1.0,
            target_gap: 0.1,
            grad_norm_bound: ConstSpec::Fixed(0.5),
            divergence: ConstSpec::Fixed(0.2),
            noise_sd: ConstSpec::Fixed(0.4),
            weights: WeightSpec::Policy("uniform".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub local_steps_min: f64,
    pub local_steps_max: f64,
    pub cohort_min: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig {
            local_steps_min: 1.0,
            local_steps_max: 30.0,
            cohort_min: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub zeta_steps: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { zeta_steps: 21 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub features: usize,
    pub classes: usize,
    pub samples: usize,
    /// Label-mixture concentration for the shard split.
    pub alpha: f64,
    pub batch: usize,
    pub max_rounds: usize,
    /// Loss-gap target of the simulator's own task; on a different scale
    /// than `convergence.target_gap`, which belongs to the accounting
    /// model.
    pub target_gap: f64,
    /// Step schedule `min(scale / (step + offset), 1 / cap)` of the
    /// simulated task. Same shape as the analyzed schedule, but sized to
    /// the synthetic task's own curvature, not the accounting model's.
    pub step_scale: f64,
    pub step_offset: f64,
    pub step_cap: f64,
    pub with_replacement: bool,
    pub probe_iters: usize,
    pub oracle_iters: usize,
    pub task_seed: u64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            features: 50,
            classes: 10,
            samples: 2000,
            alpha: 0.1,
            batch: 32,
            max_rounds: 500,
            target_gap: 0.01,
            step_scale: 40.0,
            step_offset: 1.0,
            step_cap: 1.0,
            with_replacement: true,
            probe_iters: 20,
            oracle_iters: 300,
            task_seed: 7,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    /// Accuracy targets the model columns are evaluated at.
    pub eps: Vec<f64>,
    /// The frozen reference operating point `(I, K, m, n)`.
    pub reference_ctrl: [f64; 4],
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            eps: vec![0.1],
            reference_ctrl: [2.0, 5.0, 32.0, 32.0],
        }
    }
}

fn default_chip() -> ChipSpec {
    ChipSpec {
        mac_energy_j: 3.7e-12,
        scaling_exp: 1.25,
        dram_factor: 150.0,
        array_dim: 64.0,
        sram_bits: 1.6e7,
    }
}

fn default_arch() -> ModelArch {
    ModelArch {
        weights: 0.41e6,
        macs: 4.05e7,
        activations: 4990.0,
        input_dim: 786.0,
        max_train_bits: 32,
        max_tx_bits: 32,
    }
}

/// The whole run configuration. Every section is optional and falls back
/// to the defaults below; `[chip]` and `[arch]`, once present, must be
/// complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub chip: ChipSpec,
    pub arch: ModelArch,
    pub network: NetworkConfig,
    pub convergence: ConvergenceConfig,
    pub bounds: BoundsConfig,
    pub sweep: SweepConfig,
    pub sim: SimConfig,
    pub compare: CompareConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            chip: default_chip(),
            arch: default_arch(),
            network: NetworkConfig::default(),
            convergence: ConvergenceConfig::default(),
            bounds: BoundsConfig::default(),
            sweep: SweepConfig::default(),
            sim: SimConfig::default(),
            compare: CompareConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config(format!("cannot read {}: {e}", path.display()))
        })?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::config(format!("config serialization failed: {e}")))
    }

    /// Hex SHA-256 of the canonical serialization; stamped into every
    /// output file.
    pub fn hash(&self) -> Result<String> {
        let canonical = self.to_toml_string()?;
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        Ok(format!("{:x}", hasher.finalize()))
    }

    pub fn validate(&self) -> Result<()> {
        self.chip.validate()?;
        self.arch.validate()?;
        let net = &self.network;
        if net.devices == 0 {
            return Err(Error::config("network.devices must be at least 1"));
        }
        if !(net.area_side_m > 0.0)
            || !(net.bandwidth_hz > 0.0)
            || !(net.tx_power_w > 0.0)
            || !(net.noise_w_hz > 0.0)
            || !(net.pathloss_exp > 0.0)
        {
            return Err(Error::config(
                "network: area, bandwidth, power, noise, and pathloss exponent must be positive",
            ));
        }
        let conv = &self.convergence;
        conv.grad_norm_bound.validate("convergence.grad_norm_bound")?;
        conv.divergence.validate("convergence.divergence")?;
        conv.noise_sd.validate("convergence.noise_sd")?;
        conv.weights.validate()?;
        if conv.step_scale * conv.strong_convexity <= 1.0 {
            return Err(Error::config(
                "convergence: step_scale * strong_convexity must exceed 1",
            ));
        }
        if !(conv.target_gap > 0.0) {
            return Err(Error::config("convergence.target_gap must be positive"));
        }
        let b = &self.bounds;
        if !(b.local_steps_min >= 1.0 && b.local_steps_max >= b.local_steps_min) {
            return Err(Error::config("bounds: local step range is empty or below 1"));
        }
        if !(b.cohort_min >= 1.0 && b.cohort_min <= net.devices as f64) {
            return Err(Error::config("bounds.cohort_min outside [1, devices]"));
        }
        if self.sweep.zeta_steps < 2 {
            return Err(Error::config("sweep.zeta_steps must be at least 2"));
        }
        let sim = &self.sim;
        if sim.samples < net.devices {
            return Err(Error::config(
                "sim.samples must cover at least one sample per device",
            ));
        }
        if sim.batch == 0 || sim.max_rounds == 0 || sim.probe_iters == 0 || sim.oracle_iters == 0 {
            return Err(Error::config("sim: batch, rounds, and budgets must be positive"));
        }
        if !(sim.target_gap > 0.0) || !(sim.alpha > 0.0) {
            return Err(Error::config("sim.target_gap and sim.alpha must be positive"));
        }
        if !(sim.step_scale > 0.0) || !(sim.step_offset > 0.0) || !(sim.step_cap > 0.0) {
            return Err(Error::config("sim: step schedule constants must be positive"));
        }
        if self.compare.eps.iter().any(|e| !(*e > 0.0)) || self.compare.eps.is_empty() {
            return Err(Error::config("compare.eps must be a nonempty list of positives"));
        }
        Ok(())
    }

    /// True when any convergence constant defers to the measurement probe.
    pub fn needs_probe(&self) -> bool {
        let c = &self.convergence;
        c.grad_norm_bound.is_estimate() || c.divergence.is_estimate() || c.noise_sd.is_estimate()
    }

    pub fn radio(&self) -> RadioParams {
        RadioParams {
            bandwidth_hz: self.network.bandwidth_hz,
            tx_power_w: self.network.tx_power_w,
            noise_w_hz: self.network.noise_w_hz,
            pathloss_exp: self.network.pathloss_exp,
        }
    }

    pub fn deployment(&self) -> Result<Deployment> {
        Deployment::uniform(
            self.network.devices,
            self.network.area_side_m,
            self.network.seed,
        )
    }

    pub fn links(&self) -> Result<Vec<LinkSpec>> {
        Ok(self.deployment()?.link_specs(&self.radio()))
    }

    /// Convergence constants with any probe results folded in.
    pub fn learning_params(&self, probe: Option<&ConstantEstimates>) -> Result<LearningParams> {
        let n = self.network.devices;
        let c = &self.convergence;
        let noise_sd = c.noise_sd.per_device(
            "convergence.noise_sd",
            n,
            probe.map(|p| p.noise_sd.as_slice()),
        )?;
        let weights = c.weights.resolve(n, &noise_sd)?;
        let params = LearningParams {
            dim: self.arch.weights,
            smoothness: c.smoothness,
            strong_convexity: c.strong_convexity,
            curvature_cap: c.curvature_cap,
            grad_norm_bound: c.grad_norm_bound.scalar(
                "convergence.grad_norm_bound",
                probe.map(|p| p.grad_norm_bound),
            )?,
            divergence: c
                .divergence
                .scalar("convergence.divergence", probe.map(|p| p.divergence))?,
            noise_sd,
            weights,
            step_scale: c.step_scale,
            step_offset: c.step_offset,
            target_gap: c.target_gap,
        };
        params.validate()?;
        Ok(params)
    }

    /// The search box; the training-width floor comes from the constants.
    pub fn control_bounds(&self, learn: &LearningParams) -> Result<ControlBounds> {
        let n_min = learn.min_train_bits(self.arch.max_train_bits)?;
        let bounds = ControlBounds {
            local_steps: (self.bounds.local_steps_min, self.bounds.local_steps_max),
            cohort: (self.bounds.cohort_min, self.network.devices as f64),
            tx_bits: (2.0, self.arch.max_tx_bits as f64),
            train_bits: (n_min as f64, self.arch.max_train_bits as f64),
        };
        bounds.validate()?;
        Ok(bounds)
    }

    pub fn task_spec(&self) -> TaskSpec {
        TaskSpec {
            features: self.sim.features,
            classes: self.sim.classes,
            samples: self.sim.samples,
            centroid_spread: 1.0,
            feature_noise: 1.0,
            l2: self.convergence.strong_convexity,
        }
    }

    pub fn sim_schedule(&self) -> crate::flsim::StepSchedule {
        crate::flsim::StepSchedule {
            scale: self.sim.step_scale,
            offset: self.sim.step_offset,
            cap: self.sim.step_cap,
        }
    }

    pub fn sim_options(&self, seed_override: Option<u64>) -> SimOptions {
        SimOptions {
            max_rounds: self.sim.max_rounds,
            target_gap: self.sim.target_gap,
            batch: self.sim.batch,
            with_replacement: self.sim.with_replacement,
            seed: seed_override.unwrap_or(self.sim.seed),
        }
    }
}
