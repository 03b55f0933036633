//! Minimizers for the two objectives and the scalarized boundary
//! subproblem.
//!
//! Per-axis energy minimization has closed forms: the local-iteration
//! count is a root of a cubic (no linear term), the transmission width a
//! Lambert-W expression, the training width an exhaustive integer scan,
//! and the cohort size always sits at its lower bound for energy (more
//! devices per round cost more than the variance they remove is worth).
//! Block-coordinate descent over those axis solvers yields the energy
//! anchor; the rounds anchor is fully closed-form. Boundary points in
//! between come from a quadratic-penalty subproblem solved by multi-start
//! coordinate descent with an ascending penalty-weight schedule.

pub mod cubic;
pub mod lambert;

use crate::convergence::{Control, ControlBounds, Objectives};
use crate::error::{Error, Result};
use crate::num::line_minimize;
use cubic::CubicCoeffs;
use lambert::{lambert_w, Branch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// Golden-section x-tolerance used by every coordinate line search.
const COORD_TOL: f64 = 1e-4;
/// Ascending penalty weights for the boundary subproblem.
pub const LAMBDA_SCHEDULE: [f64; 7] = [1.0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6];
/// Boundary points whose final collinearity violation exceeds this get flagged.
pub const VIOLATION_LIMIT: f64 = 1e-3;
/// Default stopping distance for block-coordinate descent iterates.
pub const DEFAULT_STEP_TOL: f64 = 1e-6;
const MAX_BCD_ITERS: usize = 100;
const MULTISTARTS: usize = 8;
const MAX_SWEEPS: usize = 60;

// ---------------------------------------------------------------------------
// per-axis energy minimizers
// ---------------------------------------------------------------------------

/// Stationarity cubic for the local-iteration count at fixed cohort and
/// widths: zeros of `h1 I^3 + h2 I^2 + h3` are the interior candidates.
pub fn iteration_cubic(obj: &Objectives, at: &Control) -> Result<CubicCoeffs> {
    let learn = obj.learn;
    let g2 = learn.grad_norm_bound * learn.grad_norm_bound;
    let k = at.cohort;
    let a = 4.0 * g2 * (1.0 + 1.0 / k);
    let b = 4.0 * learn.dim * g2 / (k * 4f64.powf(at.tx_bits)) - 8.0 * g2;
    let shift = learn.step_offset / learn.round_multiplier(at.train_bits)?;
    let c = learn.noise_sq() + 4.0 * g2 + 4.0 * learn.smoothness * learn.divergence - shift;
    let uplink = at.tx_bits * obj.tx_energy_per_bit();
    let compute = obj.compute_energy(at.train_bits)?;
    Ok(CubicCoeffs::new(
        2.0 * a * compute,
        a * uplink + b * compute,
        -c * uplink,
    ))
}

/// Local-iteration count minimizing total energy at fixed `(K, m, n)`:
/// the best in-range stationary root, or a bound when none beats them.
pub fn optimal_local_steps(obj: &Objectives, bounds: &ControlBounds, at: &Control) -> Result<f64> {
    let (lo, hi) = bounds.local_steps;
    let mut candidates = vec![lo, hi];
    if let Ok(coeffs) = iteration_cubic(obj, at) {
        candidates.extend(coeffs.real_roots().into_iter().filter(|r| *r > lo && *r < hi));
    }
    argmin_axis(obj, at, &candidates, |c, v| c.local_steps = v)
}

/// Coefficients of the transmission-width stationarity equation
/// `m = m_a * 4^m + m_b`; `m_c` is the uplink energy per bit of width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TranscendentalCoeffs {
    pub m_a: f64,
    pub m_b: f64,
    pub m_c: f64,
}

impl TranscendentalCoeffs {
    /// Defect of the stationarity identity at `m`.
    pub fn residual(&self, m: f64) -> f64 {
        m - self.m_a * 4f64.powf(m) - self.m_b
    }

    /// Real solutions of `m = m_a 4^m + m_b` via both Lambert-W branches.
    ///
    /// Substituting `u = (m_b - m) ln4` turns the identity into
    /// `u e^u = -m_a ln4 * 4^(m_b)`; no real branch applies when that
    /// right-hand side falls below `-1/e` (the line misses the
    /// exponential entirely).
    pub fn stationary_points(&self) -> Vec<f64> {
        let ln4 = std::f64::consts::LN_2 * 2.0;
        let z = -self.m_a * ln4 * 4f64.powf(self.m_b);
        let mut out = Vec::new();
        for branch in [Branch::Principal, Branch::MinusOne] {
            if let Ok(w) = lambert_w(z, branch) {
                let m = self.m_b - w / ln4;
                if m.is_finite() && self.residual(m).abs() <= 1e-6 * (1.0 + m.abs()) {
                    out.push(m);
                }
            }
        }
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + a.abs()));
        out
    }
}

/// Transmission-width stationarity coefficients at fixed `(I, K, n)`.
pub fn tx_bits_coeffs(obj: &Objectives, at: &Control) -> Result<TranscendentalCoeffs> {
    let learn = obj.learn;
    let g2 = learn.grad_norm_bound * learn.grad_norm_bound;
    let i = at.local_steps;
    let k = at.cohort;
    let quant_var = 4.0 * learn.dim * i * g2 / k;
    if quant_var <= 0.0 {
        return Err(Error::solver(
            "no quantization-variance term; width stationarity undefined",
        ));
    }
    let shift = learn.step_offset / learn.round_multiplier(at.train_bits)?;
    let flat = learn.noise_sq()
        + 4.0 * (i - 1.0) * (i - 1.0) * g2
        + 4.0 * i * i * g2 / k
        + 4.0 * learn.smoothness * learn.divergence
        - shift;
    let ln4 = std::f64::consts::LN_2 * 2.0;
    let m_c = obj.tx_energy_per_bit();
    Ok(TranscendentalCoeffs {
        m_a: flat / (quant_var * ln4),
        m_b: 1.0 / ln4 - i * obj.compute_energy(at.train_bits)? / m_c,
        m_c,
    })
}

/// Transmission width minimizing total energy at fixed `(I, K, n)`:
/// best in-range Lambert stationary point, bounds as fallback.
pub fn optimal_tx_bits(obj: &Objectives, bounds: &ControlBounds, at: &Control) -> Result<f64> {
    let (lo, hi) = bounds.tx_bits;
    let mut candidates = vec![lo, hi];
    if let Ok(coeffs) = tx_bits_coeffs(obj, at) {
        candidates.extend(
            coeffs
                .stationary_points()
                .into_iter()
                .filter(|m| *m > lo && *m < hi),
        );
    }
    argmin_axis(obj, at, &candidates, |c, v| c.tx_bits = v)
}

/// Training width minimizing total energy at fixed `(I, K, m)`: exact
/// integer scan, at most 31 evaluations.
pub fn optimal_train_bits(obj: &Objectives, bounds: &ControlBounds, at: &Control) -> Result<f64> {
    let lo = bounds.train_bits.0.ceil() as i64;
    let hi = bounds.train_bits.1.floor() as i64;
    if lo > hi {
        return Err(Error::config("no integer training width inside bounds"));
    }
    let candidates: Vec<f64> = (lo..=hi).map(|n| n as f64).collect();
    argmin_axis(obj, at, &candidates, |c, v| c.train_bits = v)
}

fn argmin_axis(
    obj: &Objectives,
    at: &Control,
    candidates: &[f64],
    set: impl Fn(&mut Control, f64),
) -> Result<f64> {
    let mut best = f64::INFINITY;
    let mut arg = None;
    for &v in candidates {
        let mut ctrl = *at;
        set(&mut ctrl, v);
        if let Ok(e) = obj.total_energy(&ctrl) {
            if e < best {
                best = e;
                arg = Some(v);
            }
        }
    }
    arg.ok_or_else(|| Error::infeasible("no feasible candidate along the axis"))
}

// ---------------------------------------------------------------------------
// anchors
// ---------------------------------------------------------------------------

/// A single-objective optimum: the integer operating point, the relaxed
/// iterate it was rounded from, and both objective values at each.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AnchorPoint {
    pub ctrl: Control,
    pub relaxed: Control,
    pub energy: f64,
    pub rounds: f64,
    pub relaxed_energy: f64,
    pub relaxed_rounds: f64,
    /// Primary solution path succeeded (coordinate descent converged,
    /// closed form applicable); `false` marks the documented fallback.
    pub converged: bool,
}

/// Minimize total energy by block-coordinate descent over the axis
/// solvers, cohort pinned at its lower bound, then integer-round.
///
/// Stops when consecutive iterates move less than `step_tol` in the
/// `(I, m, n)` coordinates, or after 100 outer iterations (reported via
/// `converged = false`).
pub fn minimize_energy(
    obj: &Objectives,
    bounds: &ControlBounds,
    step_tol: f64,
) -> Result<AnchorPoint> {
    bounds.validate()?;
    let cohort = bounds.cohort.0;
    let starts = [
        Control::new(bounds.local_steps.0, cohort, bounds.tx_bits.1, bounds.train_bits.1),
        Control::new(bounds.local_steps.1, cohort, bounds.tx_bits.0, bounds.train_bits.0.ceil()),
    ];
    let mut best: Option<(f64, Control, bool)> = None;
    for start in starts {
        let mut cur = start;
        let mut converged = false;
        for _ in 0..MAX_BCD_ITERS {
            let prev = cur;
            cur.local_steps = optimal_local_steps(obj, bounds, &cur)?;
            cur.tx_bits = optimal_tx_bits(obj, bounds, &cur)?;
            cur.train_bits = optimal_train_bits(obj, bounds, &cur)?;
            let dist = ((cur.local_steps - prev.local_steps).powi(2)
                + (cur.tx_bits - prev.tx_bits).powi(2)
                + (cur.train_bits - prev.train_bits).powi(2))
            .sqrt();
            if dist <= step_tol {
                converged = true;
                break;
            }
        }
        let e = obj.total_energy(&cur)?;
        if best.as_ref().map_or(true, |(b, _, _)| e < *b) {
            best = Some((e, cur, converged));
        }
    }
    let (relaxed_energy, relaxed, converged) = best.expect("two starts evaluated");
    let snapped = round_and_repair(bounds, &relaxed, |c| obj.total_energy(c))?;
    let [energy, rounds] = obj.pair(&snapped)?;
    Ok(AnchorPoint {
        ctrl: snapped,
        relaxed,
        energy,
        rounds,
        relaxed_energy,
        relaxed_rounds: obj.rounds(&relaxed)?,
        converged,
    })
}

/// Minimize the round count. Wider words and bigger cohorts only help, so
/// those sit at their upper bounds; the iteration count has a square-root
/// closed form when the variance headroom is positive, otherwise an
/// integer scan takes over (flagged via `converged = false`).
pub fn minimize_rounds(obj: &Objectives, bounds: &ControlBounds) -> Result<AnchorPoint> {
    bounds.validate()?;
    let learn = obj.learn;
    let k = bounds.cohort.1;
    let m = bounds.tx_bits.1;
    let n = bounds.train_bits.1;
    let g2 = learn.grad_norm_bound * learn.grad_norm_bound;
    let slope = 4.0 * g2 * (1.0 + 1.0 / k);
    let headroom = learn.noise_sq() + 4.0 * g2 + 4.0 * learn.smoothness * learn.divergence
        - learn.step_offset / learn.round_multiplier(n)?;
    let (lo, hi) = bounds.local_steps;

    let (i_star, converged) = if slope > 0.0 && headroom > 0.0 {
        ((headroom / slope).sqrt().clamp(lo, hi), true)
    } else {
        // scan fallback: evaluate every integer iteration count
        let mut best = (f64::INFINITY, lo);
        for i in (lo.ceil() as i64)..=(hi.floor() as i64) {
            let ctrl = Control::new(i as f64, k, m, n);
            let t = obj.rounds(&ctrl)?;
            if t < best.0 {
                best = (t, i as f64);
            }
        }
        (best.1, false)
    };

    let relaxed = Control::new(i_star, k, m, n);
    let snapped = round_and_repair(bounds, &relaxed, |c| obj.rounds(c))?;
    let [energy, rounds] = obj.pair(&snapped)?;
    let [relaxed_energy, relaxed_rounds] = obj.pair(&relaxed)?;
    Ok(AnchorPoint {
        ctrl: snapped,
        relaxed,
        energy,
        rounds,
        relaxed_energy,
        relaxed_rounds,
        converged,
    })
}

/// Square-root iterate of the rounds minimizer before clamping, exposed
/// for identity checks: `I^2 * slope = headroom` holds exactly.
pub fn rounds_stationary_iterations(obj: &Objectives, bounds: &ControlBounds) -> Result<f64> {
    let learn = obj.learn;
    let k = bounds.cohort.1;
    let g2 = learn.grad_norm_bound * learn.grad_norm_bound;
    let slope = 4.0 * g2 * (1.0 + 1.0 / k);
    let headroom = learn.noise_sq() + 4.0 * g2 + 4.0 * learn.smoothness * learn.divergence
        - learn.step_offset / learn.round_multiplier(bounds.train_bits.1)?;
    if slope <= 0.0 || headroom <= 0.0 {
        return Err(Error::solver("no interior stationary iteration count"));
    }
    Ok((headroom / slope).sqrt())
}

// ---------------------------------------------------------------------------
// boundary subproblem
// ---------------------------------------------------------------------------

/// Anchor values that translate and scale the objectives so the energy
/// anchor maps to `(0, 1)` and the rounds anchor to `(1, 0)`.
#[derive(Debug, Clone)]
pub struct Normalization {
    pub energy_anchor: AnchorPoint,
    pub rounds_anchor: AnchorPoint,
    /// Componentwise best values `(energy, rounds)`, relaxed.
    pub utopia: [f64; 2],
    /// Cross ranges: energy spread at the rounds anchor and vice versa.
    pub scale: [f64; 2],
}

impl Normalization {
    pub fn compute(obj: &Objectives, bounds: &ControlBounds, step_tol: f64) -> Result<Self> {
        let energy_anchor = minimize_energy(obj, bounds, step_tol)?;
        let rounds_anchor = minimize_rounds(obj, bounds)?;
        let utopia = [energy_anchor.relaxed_energy, rounds_anchor.relaxed_rounds];
        let scale = [
            rounds_anchor.relaxed_energy - utopia[0],
            energy_anchor.relaxed_rounds - utopia[1],
        ];
        if scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::solver(
                "objectives do not conflict; the boundary collapses to a point",
            ));
        }
        Ok(Normalization {
            energy_anchor,
            rounds_anchor,
            utopia,
            scale,
        })
    }

    /// `(energy, rounds)` mapped into anchor-normalized coordinates.
    pub fn normalized(&self, obj: &Objectives, ctrl: &Control) -> Result<[f64; 2]> {
        let [e, t] = obj.pair(ctrl)?;
        Ok([
            (e - self.utopia[0]) / self.scale[0],
            (t - self.utopia[1]) / self.scale[1],
        ])
    }
}

/// Departure of a normalized pair from the quasi-normal line through the
/// convex-combination point indexed by `zeta`.
fn collinearity_defect(pair: [f64; 2], zeta: f64) -> f64 {
    1.0 - 2.0 * zeta + pair[1] - pair[0]
}

/// Distance travelled from the anchor hull toward the utopia point, in
/// normalized units (average of the two component estimates).
pub(crate) fn normal_offset(pair: [f64; 2]) -> f64 {
    (1.0 - pair[0] - pair[1]) / std::f64::consts::SQRT_2
}

/// One boundary subproblem solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NbiSolution {
    pub zeta: f64,
    /// Continuous minimizer of the final penalty stage.
    pub relaxed: Control,
    /// Integer operating point rounded from it.
    pub ctrl: Control,
    /// Total energy at `ctrl`, joules.
    pub energy: f64,
    /// Rounds to target at `ctrl`.
    pub rounds: f64,
    /// Normal-direction offset at `ctrl`, normalized units.
    pub normal_offset: f64,
    /// Absolute collinearity defect of the relaxed solution at the final
    /// penalty weight.
    pub violation: f64,
    /// `violation` exceeded [`VIOLATION_LIMIT`].
    pub flagged: bool,
    /// `(penalty weight, squared defect)` per schedule stage.
    pub trace: Vec<(f64, f64)>,
}

/// Solve the boundary subproblem at `zeta` in `[0, 1]`: slide from the
/// anchor hull toward the utopia point along the quasi-normal, by
/// minimizing the penalized scalarization over the relaxed box for an
/// ascending penalty schedule, warm-starting each stage, then rounding.
pub fn nbi_subproblem(
    obj: &Objectives,
    bounds: &ControlBounds,
    norm: &Normalization,
    zeta: f64,
) -> Result<NbiSolution> {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::domain(format!("zeta {zeta} outside [0, 1]")));
    }
    let penalty = |ctrl: &Control, lambda: f64| -> f64 {
        match norm.normalized(obj, ctrl) {
            Ok(pair) => {
                let v = collinearity_defect(pair, zeta);
                pair[1] - zeta + lambda * v * v
            }
            Err(_) => f64::INFINITY,
        }
    };

    // deterministic multi-starts: both anchors plus seeded box samples
    let mut starts = vec![norm.energy_anchor.relaxed, norm.rounds_anchor.relaxed];
    let mut rng = ChaCha20Rng::seed_from_u64(0x6e62_6931 ^ zeta.to_bits());
    for _ in 0..MULTISTARTS {
        starts.push(Control::new(
            rng.gen_range(bounds.local_steps.0..=bounds.local_steps.1),
            rng.gen_range(bounds.cohort.0..=bounds.cohort.1),
            rng.gen_range(bounds.tx_bits.0..=bounds.tx_bits.1),
            rng.gen_range(bounds.train_bits.0..=bounds.train_bits.1),
        ));
    }

    let mut incumbent: Option<Control> = None;
    let mut trace = Vec::with_capacity(LAMBDA_SCHEDULE.len());
    for &lambda in LAMBDA_SCHEDULE.iter() {
        let stage = |c: &Control| penalty(c, lambda);
        let mut best: Option<(f64, Control)> = None;
        for start in starts.iter().chain(incumbent.iter()) {
            let (value, ctrl) = coordinate_descent(&stage, bounds, *start);
            if best.as_ref().map_or(true, |(b, _)| value < *b) {
                best = Some((value, ctrl));
            }
        }
        let (_, ctrl) = best.expect("at least one start");
        let pair = norm.normalized(obj, &ctrl)?;
        let defect = collinearity_defect(pair, zeta);
        trace.push((lambda, defect * defect));
        incumbent = Some(ctrl);
    }

    let relaxed = incumbent.expect("schedule is nonempty");
    let final_lambda = *LAMBDA_SCHEDULE.last().expect("schedule is nonempty");
    let violation = collinearity_defect(norm.normalized(obj, &relaxed)?, zeta).abs();

    let snapped = round_and_repair(bounds, &relaxed, |c| {
        let v = penalty(c, final_lambda);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::infeasible("penalty undefined at integer neighbor"))
        }
    })?;
    let [energy, rounds] = obj.pair(&snapped)?;
    let offset = normal_offset(norm.normalized(obj, &snapped)?);

    Ok(NbiSolution {
        zeta,
        relaxed,
        ctrl: snapped,
        energy,
        rounds,
        normal_offset: offset,
        violation,
        flagged: violation > VIOLATION_LIMIT,
        trace,
    })
}

/// Cyclic coordinate descent with golden-section line searches; infeasible
/// regions surface as infinite objective values and are skated around by
/// the coarse scan inside each line search.
fn coordinate_descent(
    f: &impl Fn(&Control) -> f64,
    bounds: &ControlBounds,
    start: Control,
) -> (f64, Control) {
    let ranges = [
        bounds.local_steps,
        bounds.cohort,
        bounds.tx_bits,
        bounds.train_bits,
    ];
    let mut x = bounds.clamp(start);
    let mut fx = f(&x);
    for _ in 0..MAX_SWEEPS {
        let before = fx;
        for (axis, &(lo, hi)) in ranges.iter().enumerate() {
            if hi - lo <= COORD_TOL {
                continue;
            }
            let frozen = x;
            let (v, fv) = line_minimize(
                |t| {
                    let mut arr = frozen.as_array();
                    arr[axis] = t;
                    f(&Control::from_array(arr))
                },
                lo,
                hi,
                COORD_TOL,
            );
            if fv < fx {
                let mut arr = x.as_array();
                arr[axis] = v;
                x = Control::from_array(arr);
                fx = fv;
            }
        }
        if !fx.is_finite() || before - fx <= 1e-12 * (1.0 + fx.abs()) {
            break;
        }
    }
    (fx, x)
}

// ---------------------------------------------------------------------------
// integer rounding
// ---------------------------------------------------------------------------

/// Round a relaxed control to the merit-minimal floor/ceil integer
/// neighbor inside the box. If every neighbor fails the merit (training
/// width infeasibility), the training width is lifted to the box floor
/// and the enumeration retried.
pub fn round_and_repair(
    bounds: &ControlBounds,
    relaxed: &Control,
    merit: impl Fn(&Control) -> Result<f64>,
) -> Result<Control> {
    let evaluate = |candidates: &[Control]| -> Option<(f64, Control)> {
        let mut best: Option<(f64, Control)> = None;
        for c in candidates {
            if let Ok(v) = merit(c) {
                if v.is_finite() && best.as_ref().map_or(true, |(b, _)| v < *b) {
                    best = Some((v, *c));
                }
            }
        }
        best
    };

    let candidates = integer_neighbors(bounds, relaxed);
    if let Some((_, ctrl)) = evaluate(&candidates) {
        return Ok(ctrl);
    }
    // repair: walk the training width upward until a neighbor evaluates
    // (the box may extend below the width feasibility floor)
    let mut n = relaxed.train_bits.ceil().max(bounds.train_bits.0.ceil()) + 1.0;
    while n <= bounds.train_bits.1.floor() {
        let mut lifted = *relaxed;
        lifted.train_bits = n;
        if let Some((_, ctrl)) = evaluate(&integer_neighbors(bounds, &lifted)) {
            return Ok(ctrl);
        }
        n += 1.0;
    }
    Err(Error::infeasible(
        "no integer neighbor of the relaxed solution is feasible",
    ))
}

/// Floor/ceil combinations of each coordinate, clamped into the box and
/// deduplicated: at most 16 candidates.
fn integer_neighbors(bounds: &ControlBounds, ctrl: &Control) -> Vec<Control> {
    let ranges = [
        bounds.local_steps,
        bounds.cohort,
        bounds.tx_bits,
        bounds.train_bits,
    ];
    let arr = ctrl.as_array();
    let options: Vec<[f64; 2]> = arr
        .iter()
        .zip(&ranges)
        .map(|(&v, &(lo, hi))| {
            let f = v.floor().clamp(lo.ceil(), hi.floor());
            let c = v.ceil().clamp(lo.ceil(), hi.floor());
            [f, c]
        })
        .collect();
    let mut out = Vec::with_capacity(16);
    for mask in 0..16u32 {
        let pick = |axis: usize| options[axis][((mask >> axis) & 1) as usize];
        let cand = Control::from_array([pick(0), pick(1), pick(2), pick(3)]);
        if !out.contains(&cand) {
            out.push(cand);
        }
    }
    out
}
