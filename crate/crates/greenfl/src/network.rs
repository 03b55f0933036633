//! Device placement and uplink channel model.
//!
//! Devices are dropped uniformly at random in a square cell with the base
//! station at the centre. The average channel gain follows a pure pathloss
//! law `max(dist, 1 m)^-exponent`; the 1 m clamp keeps the near-field gain
//! bounded.

use crate::energy::LinkSpec;
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// Cell-wide radio constants; per-device gain comes from the deployment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadioParams {
    pub bandwidth_hz: f64,
    pub tx_power_w: f64,
    /// Noise spectral density, W/Hz.
    pub noise_w_hz: f64,
    pub pathloss_exp: f64,
}

impl RadioParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.bandwidth_hz > 0.0
            && self.tx_power_w > 0.0
            && self.noise_w_hz > 0.0
            && self.pathloss_exp > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config("radio constants must be positive"))
        }
    }
}

/// Fixed device layout for one experiment.
#[derive(Debug, Clone)]
pub struct Deployment {
    pub side_m: f64,
    pub base_station: [f64; 2],
    pub positions: Vec<[f64; 2]>,
}

impl Deployment {
    /// Drop `n` devices uniformly in a `side_m` x `side_m` square; the base
    /// station sits at the centre. Same seed, same layout.
    pub fn uniform(n: usize, side_m: f64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("deployment needs at least one device"));
        }
        if !(side_m > 0.0) || !side_m.is_finite() {
            return Err(Error::config("cell side must be positive and finite"));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let positions = (0..n)
            .map(|_| [rng.gen::<f64>() * side_m, rng.gen::<f64>() * side_m])
            .collect();
        Ok(Deployment {
            side_m,
            base_station: [side_m / 2.0, side_m / 2.0],
            positions,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Device-to-base-station distances, metres.
    pub fn distances(&self) -> Vec<f64> {
        self.positions
            .iter()
            .map(|p| {
                let dx = p[0] - self.base_station[0];
                let dy = p[1] - self.base_station[1];
                (dx * dx + dy * dy).sqrt()
            })
            .collect()
    }

    /// Average channel gains under the given pathloss exponent.
    pub fn gains(&self, pathloss_exp: f64) -> Vec<f64> {
        self.distances()
            .iter()
            .map(|&d| pathloss_gain(d, pathloss_exp))
            .collect()
    }

    /// Per-device uplink budgets.
    pub fn link_specs(&self, radio: &RadioParams) -> Vec<LinkSpec> {
        self.gains(radio.pathloss_exp)
            .into_iter()
            .map(|g| LinkSpec {
                bandwidth_hz: radio.bandwidth_hz,
                tx_power_w: radio.tx_power_w,
                noise_w_hz: radio.noise_w_hz,
                avg_gain: g,
            })
            .collect()
    }
}

/// Pathloss gain with the distance clamped to at least one metre.
pub fn pathloss_gain(dist_m: f64, exponent: f64) -> f64 {
    dist_m.max(1.0).powf(-exponent)
}
