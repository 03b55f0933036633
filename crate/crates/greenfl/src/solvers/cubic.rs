//! Real roots of cubics, Cardano style: the trigonometric formula covers
//! the three-real-root case (casus irreducibilis), the hyperbolic/cbrt
//! form the single-root case, and every root gets a Newton polish.
//!
//! The iteration-count stationarity condition reduces to a cubic with no
//! linear term; [`CubicCoeffs`] carries exactly that shape.

use serde::{Deserialize, Serialize};

/// Coefficients of the stationarity cubic `h1 x^3 + h2 x^2 + h3 = 0`.
/// `h1` weighs local-training cost, `h3` transmission cost, `h2` mixes
/// the two; `h1 > 0` whenever the underlying energies are positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicCoeffs {
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
}

impl CubicCoeffs {
    pub fn new(h1: f64, h2: f64, h3: f64) -> Self {
        CubicCoeffs { h1, h2, h3 }
    }

    /// All real roots, ascending, duplicates collapsed.
    pub fn real_roots(&self) -> Vec<f64> {
        cubic_real_roots(self.h1, self.h2, 0.0, self.h3)
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.h1 * x + self.h2) * x * x + self.h3
    }
}

/// Coefficient magnitudes below this fraction of the largest are treated
/// as zero when deciding the polynomial's degree.
const DEGENERACY_EPS: f64 = 1e-14;
/// Two roots closer than this (relative) collapse into one.
const ROOT_MERGE_EPS: f64 = 1e-9;

/// Real roots of `a x^3 + b x^2 + c x + d`, ascending.
///
/// Gracefully degrades to the quadratic/linear cases when leading
/// coefficients vanish; returns an empty vector for a constant.
pub fn cubic_real_roots(a: f64, b: f64, c: f64, d: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs()).max(d.abs());
    if scale == 0.0 || !scale.is_finite() {
        return Vec::new();
    }
    if a.abs() <= DEGENERACY_EPS * scale {
        return quadratic_real_roots(b, c, d);
    }

    // depress: x = t - b/(3a), t^3 + p t + q = 0
    let shift = -b / (3.0 * a);
    let p = (3.0 * a * c - b * b) / (3.0 * a * a);
    let q = (2.0 * b * b * b - 9.0 * a * b * c + 27.0 * a * a * d) / (27.0 * a * a * a);

    let half_q = q / 2.0;
    let third_p = p / 3.0;
    let disc = half_q * half_q + third_p * third_p * third_p;
    let disc_scale = (half_q * half_q).max((third_p * third_p * third_p).abs());

    let mut roots: Vec<f64> = if disc.abs() <= 1e-12 * disc_scale.max(f64::MIN_POSITIVE) {
        // (near-)repeated roots; the discriminant is noise-level here, so it
        // cannot distinguish a true double root from a barely-split or
        // barely-complex pair
        if third_p.abs() <= 1e-12 {
            vec![shift]
        } else {
            // the simple root 3q/p is well conditioned; the explicit double
            // root -3q/(2p) is not (it cancels against the depression shift),
            // so recover the pair by deflating to a quadratic instead. A pair
            // that drifted complex then simply yields no real companions.
            let single = newton_polish(a, b, c, d, 3.0 * q / p + shift);
            let quad_b = b / a + single;
            let quad_c = if single == 0.0 { c / a } else { -d / (a * single) };
            let mut rs = quadratic_real_roots(1.0, quad_b, quad_c);
            rs.push(single);
            rs
        }
    } else if disc < 0.0 {
        // three distinct real roots; p < 0 guaranteed here
        let m = 2.0 * (-third_p).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3)
            .map(|k| shift + m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos())
            .collect()
    } else {
        // one real root; pick the large-magnitude cube-root operand to
        // dodge cancellation, recover the partner from u*v = -p/3
        let s = disc.sqrt();
        let big = -half_q - s.copysign(q);
        let u = big.cbrt();
        let v = if u == 0.0 { 0.0 } else { -third_p / u };
        vec![shift + u + v]
    };

    // Newton-polish against the undepressed cubic. The branch formulas can
    // suffer heavy cancellation (near-double roots, extreme coefficient
    // ratios), so iterate to convergence and keep the best iterate seen.
    for r in roots.iter_mut() {
        *r = newton_polish(a, b, c, d, *r);
    }

    roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    roots.dedup_by(|x, y| (*x - *y).abs() <= ROOT_MERGE_EPS * (1.0 + x.abs().max(y.abs())));
    roots
}

// Newton iteration that never moves off the best-residual iterate seen.
// Near a double root the derivative vanishes and raw steps turn noisy, and a
// badly cancelled starting estimate may sit far outside the convergence
// basin; halving progress per step still reaches the root well inside the
// iteration cap.
fn newton_polish(a: f64, b: f64, c: f64, d: f64, start: f64) -> f64 {
    let eval = |x: f64| ((a * x + b) * x + c) * x + d;
    let mut r = start;
    let mut best = start;
    let mut best_f = eval(start).abs();
    for _ in 0..60 {
        let f = eval(r);
        if f == 0.0 {
            return r;
        }
        if f.abs() < best_f {
            best_f = f.abs();
            best = r;
        }
        let df = (3.0 * a * r + 2.0 * b) * r + c;
        if df.abs() <= f64::MIN_POSITIVE {
            break;
        }
        let step = f / df;
        if !step.is_finite() {
            break;
        }
        r -= step;
        if step.abs() <= 2.0 * f64::EPSILON * r.abs() {
            break;
        }
    }
    if eval(r).abs() < best_f {
        r
    } else {
        best
    }
}

fn quadratic_real_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if a.abs() <= DEGENERACY_EPS * scale {
        if b.abs() <= DEGENERACY_EPS * scale {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let s = disc.sqrt();
    // citardauq pairing avoids subtracting near-equal quantities
    let q = -0.5 * (b + s * b.signum());
    let mut roots = if q == 0.0 {
        vec![0.0, -b / a]
    } else {
        vec![q / a, c / q]
    };
    roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    roots.dedup_by(|x, y| (*x - *y).abs() <= ROOT_MERGE_EPS * (1.0 + x.abs().max(y.abs())));
    roots
}
