//! Scalar abstraction and small numeric helpers.

use num_traits::{Float, FromPrimitive};
use std::fmt::Debug;

/// Floating-point scalar the value-level kernels are generic over.
///
/// Weight vectors and quantizers work in either `f32` or `f64`; the
/// closed-form model stack stays in `f64` because its pinned tolerances
/// (1e-9 .. 1e-12) are only meaningful at double precision.
pub trait Real: Float + FromPrimitive + Debug + Send + Sync + 'static {
    fn from_f64_lossy(v: f64) -> Self {
        Self::from(v).expect("finite f64 converts into every Real")
    }
    fn into_f64(self) -> f64 {
        self.to_f64().expect("Real widens into f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Minimizes `f` on `[lo, hi]`: coarse bracket scan, then golden-section
/// refinement inside the best bracket. Robust to mild multimodality, which
/// the penalty merit functions exhibit; tolerance is on the argument.
pub fn line_minimize(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    debug_assert!(hi >= lo);
    if hi - lo <= tol {
        let x = 0.5 * (lo + hi);
        return (x, f(x));
    }

    const COARSE: usize = 16;
    let step = (hi - lo) / COARSE as f64;
    let mut best_i = 0usize;
    let mut best_v = f64::INFINITY;
    for i in 0..=COARSE {
        let v = f(lo + step * i as f64);
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    let mut a = lo + step * best_i.saturating_sub(1) as f64;
    let mut b = (lo + step * (best_i + 1) as f64).min(hi);

    // golden-section on [a, b]
    const INVPHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = b - INVPHI * (b - a);
    let mut x2 = a + INVPHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INVPHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INVPHI * (b - a);
            f2 = f(x2);
        }
    }
    let xm = 0.5 * (a + b);
    let fm = f(xm);
    if fm <= f1 && fm <= f2 {
        (xm, fm)
    } else if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// `steps` evenly spaced values covering `[0, 1]` inclusive.
pub fn unit_grid(steps: usize) -> Vec<f64> {
    assert!(steps >= 2, "need at least the two endpoints");
    (0..steps)
        .map(|i| i as f64 / (steps - 1) as f64)
        .collect()
}
