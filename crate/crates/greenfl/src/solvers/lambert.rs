//! Real branches of the Lambert W function, `w * e^w = x`.
//!
//! Halley iteration from region-appropriate initial guesses; near the
//! branch point `x = -1/e` the iteration's denominator vanishes, so a
//! series expansion in `sqrt(2(e*x + 1))` takes over there.

use crate::error::{Error, Result};

/// Which real solution of `w * e^w = x` to return.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `w >= -1`; defined for `x >= -1/e`.
    Principal,
    /// `w <= -1`; defined for `-1/e <= x < 0`.
    MinusOne,
}

/// `e^-1`, the branch-point abscissa is `-INV_E`.
const INV_E: f64 = 0.367_879_441_171_442_33;
/// Residual target, relative to `max(1, |x|)`.
const RESIDUAL_TOL: f64 = 1e-13;
/// Within this distance of the branch point the series result is final.
const SERIES_CUTOFF: f64 = 1e-8;
const MAX_ITERS: usize = 80;

/// Branch-point expansion: `w = -1 + p - p^2/3 + 11 p^3/72` with
/// `p = ±sqrt(2(e x + 1))`, sign picking the branch.
fn branch_point_series(x: f64, branch: Branch) -> f64 {
    let p2 = 2.0 * (std::f64::consts::E * x + 1.0).max(0.0);
    let p = match branch {
        Branch::Principal => p2.sqrt(),
        Branch::MinusOne => -p2.sqrt(),
    };
    -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0)))
}

fn initial_guess(x: f64, branch: Branch) -> f64 {
    match branch {
        Branch::Principal => {
            if x < -0.25 {
                branch_point_series(x, branch)
            } else if x < 1.0 {
                // series around 0, adequate to start Halley
                x * (1.0 + x * (-1.0 + x * 1.5))
            } else {
                // asymptotic log - log log
                let l1 = x.ln();
                if l1 > 1.0 {
                    l1 - l1.ln() + l1.ln() / l1
                } else {
                    0.5
                }
            }
        }
        Branch::MinusOne => branch_point_series(x, branch),
    }
}

/// Secondary branch away from the branch point. The residual `w e^w - x`
/// degenerates as `x -> 0-` (both terms underflow long before `w` is
/// accurate), so substitute `y = -w`: the identity becomes
/// `y - ln y = -ln(-x)`, which Newton solves to machine precision for any
/// `y > 1` with no small-number cancellation.
fn wm1_log_newton(x: f64) -> f64 {
    let c = -(-x).ln();
    let mut y = if c > 1.5 { c + c.ln() } else { 1.5 };
    for _ in 0..MAX_ITERS {
        let f = y - y.ln() - c;
        let fp = 1.0 - 1.0 / y;
        let step = f / fp;
        y = (y - step).max(1.0 + 1e-12);
        if step.abs() <= 1e-15 * (1.0 + y) {
            break;
        }
    }
    -y
}

/// Lambert W on the requested real branch.
pub fn lambert_w(x: f64, branch: Branch) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain(format!("lambert W of non-finite {x}")));
    }
    if x < -INV_E {
        // allow fp dust just below the branch point
        if x > -INV_E - 1e-15 {
            return Ok(-1.0);
        }
        return Err(Error::domain(format!(
            "lambert W undefined for {x} < -1/e"
        )));
    }
    if branch == Branch::MinusOne && x >= 0.0 {
        return Err(Error::domain(format!(
            "secondary branch needs x in [-1/e, 0), got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if (x + INV_E).abs() < SERIES_CUTOFF {
        return Ok(branch_point_series(x, branch));
    }
    if branch == Branch::MinusOne && x > -0.27 {
        return Ok(wm1_log_newton(x));
    }

    let mut w = initial_guess(x, branch);
    let tol = RESIDUAL_TOL * x.abs().max(1.0);
    for _ in 0..MAX_ITERS {
        let ew = w.exp();
        let f = w * ew - x;
        if f.abs() <= tol {
            return Ok(w);
        }
        // Halley: f' = e^w (w + 1), f'' = e^w (w + 2)
        let fp = ew * (w + 1.0);
        let step = f / (fp - f * (w + 2.0) / (2.0 * (w + 1.0)));
        let next = w - step;
        // keep the iterate on its branch
        w = match branch {
            Branch::Principal => next.max(-1.0),
            Branch::MinusOne => next.min(-1.0),
        };
    }
    let residual = (w * w.exp() - x).abs();
    if residual <= 1e-9 * x.abs().max(1.0) {
        return Ok(w); // slow tail convergence; still well within need
    }
    Err(Error::solver(format!(
        "lambert W failed to converge at x = {x} (residual {residual:.3e})"
    )))
}

/// Principal branch, `w >= -1`.
pub fn lambert_w0(x: f64) -> Result<f64> {
    lambert_w(x, Branch::Principal)
}

/// Secondary real branch, `w <= -1`, for `x` in `[-1/e, 0)`.
pub fn lambert_wm1(x: f64) -> Result<f64> {
    lambert_w(x, Branch::MinusOne)
}
