//! Closed-form convergence model for quantized federated averaging and the
//! two objectives built on it.
//!
//! A round samples `cohort` devices (with replacement, by the aggregation
//! weights), each runs `local_steps` SGD iterations at forward width
//! `train_bits`, quantizes its normalized update to `tx_bits`, and the
//! server averages. Under smoothness/strong-convexity assumptions the
//! expected optimality gap after `T` rounds obeys
//!
//! `gap(T) <= scale * [ step_scale * psi2 / (T*I + step_offset) + psi1 ]`
//!
//! where `psi1` is the training-quantization error floor (independent of
//! `T`) and `psi2` collects the per-round variance sources. Inverting the
//! bound at the target gap gives the round count `rounds_to_target`; pairing
//! that with the per-round device energy gives the total energy objective.

use crate::energy::{uplink_rate, EnergyModel, LinkSpec};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Smallest usable quantizer width.
pub const MIN_BITS: f64 = 2.0;

/// Free variables of the co-design: `(I, K, m, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control {
    /// Local SGD iterations per round, `I`.
    pub local_steps: f64,
    /// Devices sampled per round, `K`.
    pub cohort: f64,
    /// Update transmission width in bits, `m`.
    pub tx_bits: f64,
    /// On-device training (forward) width in bits, `n`.
    pub train_bits: f64,
}

impl Control {
    pub fn new(local_steps: f64, cohort: f64, tx_bits: f64, train_bits: f64) -> Self {
        Control {
            local_steps,
            cohort,
            tx_bits,
            train_bits,
        }
    }

    /// Nearest integer-valued control.
    pub fn rounded(&self) -> Self {
        Control {
            local_steps: self.local_steps.round(),
            cohort: self.cohort.round(),
            tx_bits: self.tx_bits.round(),
            train_bits: self.train_bits.round(),
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.local_steps, self.cohort, self.tx_bits, self.train_bits]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Control::new(a[0], a[1], a[2], a[3])
    }
}

/// Box constraints on the control variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub local_steps: (f64, f64),
    pub cohort: (f64, f64),
    pub tx_bits: (f64, f64),
    pub train_bits: (f64, f64),
}

impl ControlBounds {
    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in [self.local_steps, self.cohort, self.tx_bits, self.train_bits] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::config(format!("bad control range [{lo}, {hi}]")));
            }
        }
        if self.local_steps.0 < 1.0 || self.cohort.0 < 1.0 {
            return Err(Error::config("iteration and cohort counts start at 1"));
        }
        if self.tx_bits.0 < MIN_BITS || self.train_bits.0 < MIN_BITS {
            return Err(Error::config(format!("bit widths start at {MIN_BITS}")));
        }
        Ok(())
    }

    pub fn clamp(&self, ctrl: Control) -> Control {
        Control {
            local_steps: ctrl.local_steps.clamp(self.local_steps.0, self.local_steps.1),
            cohort: ctrl.cohort.clamp(self.cohort.0, self.cohort.1),
            tx_bits: ctrl.tx_bits.clamp(self.tx_bits.0, self.tx_bits.1),
            train_bits: ctrl.train_bits.clamp(self.train_bits.0, self.train_bits.1),
        }
    }

    pub fn contains(&self, ctrl: &Control) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| (lo..=hi).contains(&v);
        inside(ctrl.local_steps, self.local_steps)
            && inside(ctrl.cohort, self.cohort)
            && inside(ctrl.tx_bits, self.tx_bits)
            && inside(ctrl.train_bits, self.train_bits)
    }
}

/// Task and optimizer constants the convergence bound depends on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearningParams {
    /// Model dimension.
    pub dim: f64,
    /// Gradient Lipschitz constant of the global loss.
    pub smoothness: f64,
    /// Strong-convexity modulus of the global loss.
    pub strong_convexity: f64,
    /// Curvature cap governing how training-quantization error perturbs the
    /// loss; at least `smoothness`.
    pub curvature_cap: f64,
    /// Uniform bound on local stochastic gradient norms.
    pub grad_norm_bound: f64,
    /// Gap between the optimum and the weighted local optima (statistical
    /// heterogeneity).
    pub divergence: f64,
    /// Per-device gradient noise standard deviations.
    pub noise_sd: Vec<f64>,
    /// Aggregation weights, positive, summing to one.
    pub weights: Vec<f64>,
    /// Step-size numerator: the round-`t` learning rate is
    /// `step_scale / (t + step_offset)` (capped elsewhere).
    pub step_scale: f64,
    /// Step-size shift.
    pub step_offset: f64,
    /// Target optimality gap the schedule must reach.
    pub target_gap: f64,
}

const WEIGHT_SUM_TOL: f64 = 1e-9;

impl LearningParams {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("dim", self.dim),
            ("smoothness", self.smoothness),
            ("strong_convexity", self.strong_convexity),
            ("curvature_cap", self.curvature_cap),
            ("step_scale", self.step_scale),
            ("step_offset", self.step_offset),
            ("target_gap", self.target_gap),
        ];
        for (name, v) in pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.grad_norm_bound < 0.0 || self.divergence < 0.0 {
            return Err(Error::config("gradient bound and divergence must be nonnegative"));
        }
        if self.curvature_cap < self.smoothness {
            return Err(Error::config("curvature cap below smoothness constant"));
        }
        if self.curvature_cap <= self.strong_convexity {
            return Err(Error::config("curvature cap must exceed strong convexity"));
        }
        // the inverted bound needs a contractive step schedule
        if self.step_scale * self.strong_convexity <= 1.0 {
            return Err(Error::config(
                "step_scale * strong_convexity must exceed 1 for the bound to close",
            ));
        }
        if self.noise_sd.is_empty() || self.noise_sd.len() != self.weights.len() {
            return Err(Error::config("need one noise level and weight per device"));
        }
        if self.noise_sd.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::config("noise levels must be nonnegative"));
        }
        if self.weights.iter().any(|p| !(*p > 0.0)) {
            return Err(Error::config("aggregation weights must be positive"));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::config(format!("aggregation weights sum to {sum}, not 1")));
        }
        Ok(())
    }

    pub fn num_devices(&self) -> usize {
        self.weights.len()
    }

    /// `step_scale * strong_convexity - 1`, the bound's contraction margin.
    fn margin(&self) -> f64 {
        self.step_scale * self.strong_convexity - 1.0
    }

    /// Weighted squared noise `sum_k p_k^2 sigma_k^2`.
    pub fn noise_sq(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.noise_sd)
            .map(|(p, s)| p * p * s * s)
            .sum()
    }

    /// Error floor induced by training at `train_bits`: quantizing weights on
    /// the unit grid leaves a perturbation the curvature turns into a
    /// permanent loss offset, shrinking by 4x per extra bit.
    pub fn quant_floor(&self, train_bits: f64) -> f64 {
        self.dim * (self.curvature_cap - self.strong_convexity) / 4f64.powf(train_bits)
    }

    /// Per-round variance aggregate: sampling noise, local drift, update
    /// quantization, cohort subsampling, and heterogeneity.
    pub fn round_variance(&self, ctrl: &Control) -> f64 {
        let i = ctrl.local_steps;
        let k = ctrl.cohort;
        let g2 = self.grad_norm_bound * self.grad_norm_bound;
        self.noise_sq()
            + 4.0 * (i - 1.0) * (i - 1.0) * g2
            + 4.0 * self.dim * i * g2 / (k * 4f64.powf(ctrl.tx_bits))
            + 4.0 * i * i * g2 / k
            + 4.0 * self.smoothness * self.divergence
    }

    /// Expected optimality gap after `rounds` rounds under `ctrl`.
    pub fn gap_bound(&self, ctrl: &Control, rounds: f64) -> Result<f64> {
        check_control_domain(ctrl)?;
        if !(rounds >= 0.0) {
            return Err(Error::domain(format!("round count {rounds} must be nonnegative")));
        }
        let scale = self.smoothness * self.step_scale / (2.0 * self.margin());
        let decaying = self.step_scale * self.round_variance(ctrl)
            / (rounds * ctrl.local_steps + self.step_offset);
        Ok(scale * (decaying + self.quant_floor(ctrl.train_bits)))
    }

    /// Gap headroom left for the decaying term once the floor at `train_bits`
    /// is paid. Positive iff the target is reachable at this width.
    pub fn feasibility_margin(&self, train_bits: f64) -> f64 {
        2.0 * self.target_gap / self.smoothness
            - self.step_scale * self.quant_floor(train_bits) / self.margin()
    }

    /// Least integer training width whose error floor still leaves room to
    /// reach the target gap.
    pub fn min_train_bits(&self, max_bits: u32) -> Result<u32> {
        // feasibility_margin(n) > 0  <=>  4^n > threshold
        let threshold = self.smoothness
            * self.step_scale
            * self.dim
            * (self.curvature_cap - self.strong_convexity)
            / (2.0 * self.target_gap * self.margin());
        let mut bits = if threshold <= 1.0 {
            MIN_BITS as u32
        } else {
            (0.5 * threshold.log2()).ceil() as u32
        };
        if bits < MIN_BITS as u32 {
            bits = MIN_BITS as u32;
        }
        // exact-threshold edge: the margin must be strictly positive
        while bits <= max_bits && self.feasibility_margin(bits as f64) <= 0.0 {
            bits += 1;
        }
        if bits > max_bits {
            return Err(Error::infeasible(format!(
                "target gap {} unreachable: even {max_bits}-bit training leaves no headroom",
                self.target_gap
            )));
        }
        Ok(bits)
    }

    /// Rounds needed to push the gap bound down to the target, continuous
    /// relaxation. Errors when the width's floor already exceeds the target.
    pub fn rounds_to_target(&self, ctrl: &Control) -> Result<f64> {
        check_control_domain(ctrl)?;
        let d = self.feasibility_margin(ctrl.train_bits);
        if d <= 0.0 {
            return Err(Error::infeasible(format!(
                "training width {} is below the feasibility floor",
                ctrl.train_bits
            )));
        }
        let c2 = self.step_scale * self.step_scale / (self.margin() * d);
        let rounds = (c2 * self.round_variance(ctrl) - self.step_offset) / ctrl.local_steps;
        // a non-positive count means the initial iterate already qualifies
        Ok(rounds.max(0.0))
    }

    /// Multiplier turning round variance into total local steps:
    /// `rounds * I + step_offset = round_multiplier(n) * psi2`.
    pub fn round_multiplier(&self, train_bits: f64) -> Result<f64> {
        let d = self.feasibility_margin(train_bits);
        if d <= 0.0 {
            return Err(Error::infeasible(format!(
                "training width {train_bits} is below the feasibility floor"
            )));
        }
        Ok(self.step_scale * self.step_scale / (self.margin() * d))
    }
}

fn check_control_domain(ctrl: &Control) -> Result<()> {
    let ok = ctrl.local_steps >= 1.0
        && ctrl.cohort >= 1.0
        && ctrl.tx_bits >= 1.0
        && ctrl.train_bits >= 1.0
        && ctrl.as_array().iter().all(|v| v.is_finite());
    if ok {
        Ok(())
    } else {
        Err(Error::domain(format!("control out of domain: {ctrl:?}")))
    }
}

/// Variance-minimizing aggregation weights, `p_k` proportional to
/// `1 / sigma_k^2`.
pub fn optimal_weights(noise_sd: &[f64]) -> Result<Vec<f64>> {
    if noise_sd.is_empty() {
        return Err(Error::domain("no devices"));
    }
    if noise_sd.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::domain(
            "variance-minimizing weights need strictly positive noise levels",
        ));
    }
    let inv: Vec<f64> = noise_sd.iter().map(|s| 1.0 / (s * s)).collect();
    let total: f64 = inv.iter().sum();
    Ok(inv.into_iter().map(|v| v / total).collect())
}

/// Joint evaluator for the two objectives: total device energy to reach the
/// target gap, and the round count itself.
#[derive(Debug, Clone)]
pub struct Objectives<'a> {
    pub learn: &'a LearningParams,
    pub energy: EnergyModel<'a>,
    /// Expected uplink energy per bit of transmission width,
    /// `sum_k p_k * P * dim / r_k`.
    tx_energy_per_bit: f64,
}

impl<'a> Objectives<'a> {
    pub fn new(
        learn: &'a LearningParams,
        energy: EnergyModel<'a>,
        links: &[LinkSpec],
    ) -> Result<Self> {
        learn.validate()?;
        energy.chip.validate()?;
        energy.arch.validate()?;
        if links.len() != learn.num_devices() {
            return Err(Error::config(format!(
                "{} links for {} devices",
                links.len(),
                learn.num_devices()
            )));
        }
        let mut per_bit = 0.0;
        for (k, (link, p)) in links.iter().zip(&learn.weights).enumerate() {
            link.validate()?;
            let rate = uplink_rate(link);
            if rate <= 0.0 {
                return Err(Error::infeasible(format!(
                    "device {k} has zero uplink rate; it can never report"
                )));
            }
            per_bit += p * link.tx_power_w * energy.arch.weights / rate;
        }
        Ok(Objectives {
            learn,
            energy,
            tx_energy_per_bit: per_bit,
        })
    }

    /// Expected uplink energy per bit of transmission width.
    pub fn tx_energy_per_bit(&self) -> f64 {
        self.tx_energy_per_bit
    }

    /// Energy of one local iteration at `train_bits` (forward reduced,
    /// backward full width).
    pub fn compute_energy(&self, train_bits: f64) -> Result<f64> {
        self.energy.local_iteration(train_bits)
    }

    /// Expected device energy spent in one round under `ctrl`.
    pub fn per_round_energy(&self, ctrl: &Control) -> Result<f64> {
        check_control_domain(ctrl)?;
        let per_device = ctrl.tx_bits * self.tx_energy_per_bit
            + ctrl.local_steps * self.compute_energy(ctrl.train_bits)?;
        Ok(ctrl.cohort * per_device)
    }

    /// Rounds to the target gap (the time/accuracy objective).
    pub fn rounds(&self, ctrl: &Control) -> Result<f64> {
        self.learn.rounds_to_target(ctrl)
    }

    /// Total energy to the target gap (the energy objective).
    pub fn total_energy(&self, ctrl: &Control) -> Result<f64> {
        Ok(self.rounds(ctrl)? * self.per_round_energy(ctrl)?)
    }

    /// Both objectives at once: `(total energy, rounds)`.
    pub fn pair(&self, ctrl: &Control) -> Result<[f64; 2]> {
        let rounds = self.rounds(ctrl)?;
        Ok([rounds * self.per_round_energy(ctrl)?, rounds])
    }
}
