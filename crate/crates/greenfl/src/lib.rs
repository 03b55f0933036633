//! Energy/convergence co-design for quantized federated learning.
//!
//! The crate models a fleet of battery-powered devices jointly training a
//! model over a shared uplink. Four knobs are in play each round: local
//! iteration count, sampled cohort size, transmission precision, and
//! on-device training precision. Closed-form models predict the energy per
//! round and the rounds needed to hit a target optimality gap; the solvers
//! trace the energy-vs-rounds Pareto boundary and pick operating points on
//! it; a small simulator replays the schedule on synthetic data to check
//! the predictions.
//!
//! Layering, bottom up:
//!
//! * [`quantize`]: stochastic fixed-point quantizer and vector helpers.
//! * [`energy`]: per-round compute and uplink energy models.
//! * [`network`]: device deployment and pathloss channel gains.
//! * [`convergence`]: gap bound, its inversion to a round count, and the
//!   two objectives (total energy, rounds).
//! * [`solvers`]: single-objective minimizers and the scalarized
//!   boundary subproblem.
//! * [`pareto`]: boundary sweep and operating-point selection.
//! * [`flsim`]: desk-scale federated simulator for validation.
//! * [`config`], [`output`], [`baselines`]: run configuration, file
//!   emission, and reference schedules.

pub mod baselines;
pub mod config;
pub mod convergence;
pub mod energy;
pub mod error;
pub mod flsim;
pub mod network;
pub mod num;
pub mod output;
pub mod pareto;
pub mod quantize;
pub mod solvers;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};

/// Quantizer grid in single precision; widths up to 25 bits.
pub type Grid32 = quantize::QuantGrid<f32>;
/// Quantizer grid in double precision; all supported widths.
pub type Grid64 = quantize::QuantGrid<f64>;
