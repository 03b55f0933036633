//! Shared reference fixtures for unit tests: a desk-scale cell with the
//! default chip, model, radio, and task constants used across the crate.

use crate::convergence::{ControlBounds, LearningParams, Objectives};
use crate::energy::{ChipSpec, EnergyModel, LinkSpec, ModelArch};
use crate::network::{Deployment, RadioParams};

pub fn chip() -> ChipSpec {
    ChipSpec {
        mac_energy_j: 3.7e-12,
        scaling_exp: 1.25,
        dram_factor: 150.0,
        array_dim: 64.0,
        sram_bits: 1.6e7,
    }
}

pub fn arch() -> ModelArch {
    ModelArch {
        weights: 0.41e6,
        macs: 4.05e7,
        activations: 4990.0,
        input_dim: 786.0,
        max_train_bits: 32,
        max_tx_bits: 32,
    }
}

pub fn radio() -> RadioParams {
    RadioParams {
        bandwidth_hz: 1e7,
        tx_power_w: 0.1,
        noise_w_hz: 10f64.powf(-20.3),
        pathloss_exp: 4.0,
    }
}

pub fn learn(n_devices: usize) -> LearningParams {
    LearningParams {
        dim: 0.41e6,
        smoothness: 0.097,
        strong_convexity: 0.05,
        curvature_cap: 100.0,
        grad_norm_bound: 0.5,
        divergence: 0.2,
        noise_sd: vec![0.4; n_devices],
        weights: vec![1.0 / n_devices as f64; n_devices],
        step_scale: 2.0 / 0.05,
        step_offset: 1.0,
        target_gap: 0.1,
    }
}

/// Owning bundle; borrow evaluators off it as needed.
pub struct TestSystem {
    pub chip: ChipSpec,
    pub arch: ModelArch,
    pub learn: LearningParams,
    pub links: Vec<LinkSpec>,
    pub max_local_steps: f64,
}

impl TestSystem {
    pub fn energy_model(&self) -> EnergyModel<'_> {
        EnergyModel::new(&self.chip, &self.arch)
    }

    pub fn objectives(&self) -> Objectives<'_> {
        Objectives::new(&self.learn, self.energy_model(), &self.links).unwrap()
    }

    pub fn bounds(&self) -> ControlBounds {
        let n_min = self.learn.min_train_bits(self.arch.max_train_bits).unwrap();
        ControlBounds {
            local_steps: (1.0, self.max_local_steps),
            cohort: (1.0, self.learn.num_devices() as f64),
            tx_bits: (2.0, self.arch.max_tx_bits as f64),
            train_bits: (n_min as f64, self.arch.max_train_bits as f64),
        }
    }
}

pub fn system(n_devices: usize, seed: u64) -> TestSystem {
    let deployment = Deployment::uniform(n_devices, 500.0, seed).unwrap();
    let links = deployment.link_specs(&radio());
    TestSystem {
        chip: chip(),
        arch: arch(),
        learn: learn(n_devices),
        links,
        max_local_steps: 30.0,
    }
}
