//! Stochastic fixed-point quantization of weight vectors.
//!
//! An `n`-bit signed fixed-point format with one integer bit covers
//! `[-1, 1 - kappa]` in steps of `kappa = 2^(1-n)`. Quantization rounds a
//! value to one of its two bracketing multiples of `kappa`, choosing the
//! upper neighbour with probability proportional to the distance from the
//! lower one. That makes the quantizer unbiased, with per-component mean
//! squared error at most `kappa^2 / 4 = 2^(-2n)`.
//!
//! Inputs in `(1 - kappa, 1]` round between `1 - kappa` and `1`; the upper
//! value saturates the nominal format range but keeps the estimator
//! unbiased on all of `[-1, 1]`.

use crate::error::{Error, Result};
use crate::num::Real;
use rand::Rng;

/// Word length of the fixed-point format, in bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PrecisionLevel {
    bits: u32,
}

impl PrecisionLevel {
    pub const MIN_BITS: u32 = 2;
    pub const MAX_BITS: u32 = 32;

    /// One-bit formats have no fractional resolution and are rejected.
    pub fn new(bits: u32) -> Result<Self> {
        if !(Self::MIN_BITS..=Self::MAX_BITS).contains(&bits) {
            return Err(Error::domain(format!(
                "precision must be {}..={} bits, got {bits}",
                Self::MIN_BITS,
                Self::MAX_BITS
            )));
        }
        Ok(PrecisionLevel { bits })
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    /// Step size `kappa = 2^(1-bits)`.
    pub fn resolution(self) -> f64 {
        2f64.powi(1 - self.bits as i32)
    }
}

/// Uniform grid `{-1, -1 + kappa, ..., 1 - kappa}` for one precision level.
#[derive(Debug, Clone, Copy)]
pub struct QuantGrid<F: Real> {
    level: PrecisionLevel,
    kappa: F,
    lo: F,
    hi: F,
}

impl<F: Real> QuantGrid<F> {
    /// Fails if the scalar type cannot represent the grid exactly
    /// (e.g. `f32` below 2^-24 resolution).
    pub fn new(level: PrecisionLevel) -> Result<Self> {
        let kappa64 = level.resolution();
        let hi64 = 1.0 - kappa64;
        let kappa = F::from_f64_lossy(kappa64);
        let hi = F::from_f64_lossy(hi64);
        if kappa.into_f64() != kappa64 || hi.into_f64() != hi64 {
            return Err(Error::domain(format!(
                "{}-bit grid is not exactly representable at this scalar width",
                level.bits()
            )));
        }
        Ok(QuantGrid {
            level,
            kappa,
            lo: F::from_f64_lossy(-1.0),
            hi,
        })
    }

    pub fn level(&self) -> PrecisionLevel {
        self.level
    }
    pub fn resolution(&self) -> F {
        self.kappa
    }
    pub fn lo(&self) -> F {
        self.lo
    }
    pub fn hi(&self) -> F {
        self.hi
    }

    /// Largest grid multiple at or below `w`, anchored so that -1 is a
    /// grid point: `floor((w + 1) / kappa) * kappa - 1`.
    fn floor_point(&self, w: F) -> F {
        let one = F::one();
        ((w + one) / self.kappa).floor() * self.kappa - one
    }
}

/// Stochastically rounds `w` onto the grid. Unbiased: the expectation over
/// the rounding draw equals `w`. Grid points (including both endpoints)
/// return themselves without consuming randomness beyond the single draw.
pub fn quantize_scalar<F: Real, R: Rng + ?Sized>(
    w: F,
    grid: &QuantGrid<F>,
    rng: &mut R,
) -> Result<F> {
    if !w.is_finite() || w < grid.lo || w > F::one() {
        return Err(Error::domain(format!(
            "quantizer input {:?} outside [-1, 1]; clip first",
            w
        )));
    }
    let floor = grid.floor_point(w);
    let p_up = ((w - floor) / grid.kappa).into_f64();
    let u: f64 = rng.gen();
    if u < p_up {
        Ok(floor + grid.kappa)
    } else {
        Ok(floor)
    }
}

/// Component-wise stochastic rounding with independent draws.
pub fn quantize_vector<F: Real, R: Rng + ?Sized>(
    w: &[F],
    grid: &QuantGrid<F>,
    rng: &mut R,
) -> Result<Vec<F>> {
    w.iter().map(|&x| quantize_scalar(x, grid, rng)).collect()
}

/// Clamps every component into `[-1, 1]`.
pub fn clip_unit<F: Real>(w: &mut [F]) {
    let one = F::one();
    for x in w.iter_mut() {
        if *x > one {
            *x = one;
        } else if *x < -one {
            *x = -one;
        }
    }
}

/// Splits an update into a unit direction and its Euclidean norm, so the
/// direction fits the quantizer range and the receiver can rescale.
/// A zero update stays zero and reports zero norm.
pub fn normalize_update<F: Real>(d: &[F]) -> (Vec<F>, F) {
    let norm_sq = d.iter().fold(F::zero(), |acc, &x| acc + x * x);
    let norm = norm_sq.sqrt();
    if norm == F::zero() {
        return (d.to_vec(), norm);
    }
    (d.iter().map(|&x| x / norm).collect(), norm)
}
