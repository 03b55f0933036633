//! Energy-rounds boundary assembly and operating-point selection.
//!
//! The boundary is traced by sliding a quasi-normal probe between the two
//! single-objective anchors (an even grid over the mixing weight), solving
//! each penalized subproblem, and integer-rounding the results. Operating
//! points are then picked off the finite front directly: the bargaining
//! selection maximizes the product of savings relative to a disagreement
//! point, the sum selection minimizes the plain objective total. Discrete
//! argmax/argmin over front members replaces the continuous tangency
//! constructions; with an integer-rounded front an interpolated tangent
//! adds error without adding fidelity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convergence::{Control, ControlBounds, LearningParams, Objectives, MIN_BITS};
use crate::error::{Error, Result};
use crate::num::unit_grid;
use crate::solvers::{nbi_subproblem, normal_offset, NbiSolution, Normalization, DEFAULT_STEP_TOL};

/// One integer operating point on the traded-off boundary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub ctrl: Control,
    /// Total energy at `ctrl`, joules.
    pub g1: f64,
    /// Rounds to the target gap at `ctrl`.
    pub g2: f64,
    /// Mixing weight of the subproblem that produced the point (1 leans
    /// on energy, 0 on rounds).
    pub zeta1: f64,
    /// Normal-direction offset from the anchor hull, normalized units.
    pub s: f64,
    /// Final collinearity violation of the relaxed subproblem solution.
    pub penalty_residual: f64,
    /// Selection-quality marker: a violated subproblem constraint, or a
    /// failed bargaining selection when returned by [`nbs_point`].
    pub flagged: bool,
}

impl From<&NbiSolution> for ParetoPoint {
    fn from(sol: &NbiSolution) -> Self {
        ParetoPoint {
            ctrl: sol.ctrl,
            g1: sol.energy,
            g2: sol.rounds,
            zeta1: sol.zeta,
            s: sol.normal_offset,
            penalty_residual: sol.violation,
            flagged: sol.flagged,
        }
    }
}

/// The assembled boundary with its normalization anchors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParetoFront {
    /// Retained points, ordered by ascending mixing weight.
    pub points: Vec<ParetoPoint>,
    /// Componentwise best objective values `(energy, rounds)`.
    pub utopia: [f64; 2],
    /// Payoff matrix: column `j` is the objective vector of single-objective
    /// optimum `j` relative to the utopia point, so the diagonal is zero.
    pub phi: [[f64; 2]; 2],
    /// Objective values `(energy, rounds)` at the disagreement point.
    pub disagreement: [f64; 2],
    /// The disagreement operating point itself.
    pub disagreement_ctrl: Control,
}

/// Flat record for the boundary CSV artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrontRow {
    pub zeta1: f64,
    #[serde(rename = "I")]
    pub local_steps: i64,
    #[serde(rename = "K")]
    pub cohort: i64,
    #[serde(rename = "m")]
    pub tx_bits: i64,
    #[serde(rename = "n")]
    pub train_bits: i64,
    pub g1_joules: f64,
    pub g2_rounds: f64,
    pub s: f64,
    pub residual: f64,
    pub flagged: bool,
}

impl From<&ParetoPoint> for FrontRow {
    fn from(p: &ParetoPoint) -> Self {
        FrontRow {
            zeta1: p.zeta1,
            local_steps: p.ctrl.local_steps.round() as i64,
            cohort: p.ctrl.cohort.round() as i64,
            tx_bits: p.ctrl.tx_bits.round() as i64,
            train_bits: p.ctrl.train_bits.round() as i64,
            g1_joules: p.g1,
            g2_rounds: p.g2,
            s: p.s,
            residual: p.penalty_residual,
            flagged: p.flagged,
        }
    }
}

impl ParetoFront {
    /// CSV rows in front order.
    pub fn rows(&self) -> Vec<FrontRow> {
        self.points.iter().map(FrontRow::from).collect()
    }
}

/// `a` is at least as good on both objectives and strictly better on one.
fn dominates(a: &ParetoPoint, b: &ParetoPoint) -> bool {
    a.g1 <= b.g1 && a.g2 <= b.g2 && (a.g1 < b.g1 || a.g2 < b.g2)
}

/// Trace the boundary with `zeta_steps` evenly spaced subproblems.
///
/// Both anchors are solved first (they define the normalization), every
/// subproblem then runs independently in parallel. Flagged subproblems are
/// discarded, the anchors themselves are joined in, and dominated
/// duplicates created by integer rounding are filtered out at the end.
pub fn build_front(
    obj: &Objectives,
    bounds: &ControlBounds,
    zeta_steps: usize,
) -> Result<ParetoFront> {
    if zeta_steps < 2 {
        return Err(Error::domain(format!(
            "zeta_steps {zeta_steps} below the two-endpoint minimum"
        )));
    }
    bounds.validate()?;
    let norm = Normalization::compute(obj, bounds, DEFAULT_STEP_TOL)?;

    let solutions: Vec<NbiSolution> = unit_grid(zeta_steps)
        .into_par_iter()
        .map(|zeta| nbi_subproblem(obj, bounds, &norm, zeta))
        .collect::<Result<Vec<_>>>()?;

    let mut points: Vec<ParetoPoint> = solutions
        .iter()
        .filter(|s| !s.flagged)
        .map(ParetoPoint::from)
        .collect();

    // The anchors are boundary members by definition; their relaxed
    // solutions satisfy their own subproblem constraints exactly.
    for (anchor, zeta1) in [(&norm.rounds_anchor, 0.0), (&norm.energy_anchor, 1.0)] {
        if points.iter().any(|p| p.ctrl == anchor.ctrl) {
            continue;
        }
        let pair = norm.normalized(obj, &anchor.ctrl)?;
        points.push(ParetoPoint {
            ctrl: anchor.ctrl,
            g1: anchor.energy,
            g2: anchor.rounds,
            zeta1,
            s: normal_offset(pair),
            penalty_residual: 0.0,
            flagged: false,
        });
    }

    // drop integer-rounding duplicates, keeping the first occurrence
    let mut seen: Vec<Control> = Vec::with_capacity(points.len());
    points.retain(|p| {
        if seen.contains(&p.ctrl) {
            false
        } else {
            seen.push(p.ctrl);
            true
        }
    });

    let kept: Vec<ParetoPoint> = points
        .iter()
        .filter(|p| !points.iter().any(|q| dominates(q, p)))
        .cloned()
        .collect();
    let mut points = kept;
    points.sort_by(|a, b| {
        (a.zeta1, a.g1)
            .partial_cmp(&(b.zeta1, b.g1))
            .expect("finite front coordinates")
    });

    let d_ctrl = disagreement_point(obj.learn, bounds)?;
    let disagreement = obj.pair(&d_ctrl)?;

    Ok(ParetoFront {
        points,
        utopia: norm.utopia,
        phi: [[0.0, norm.scale[0]], [norm.scale[1], 0.0]],
        disagreement,
        disagreement_ctrl: d_ctrl,
    })
}

/// The no-agreement fallback: worst-case iteration count, smallest cohort,
/// narrowest transmittable update, narrowest feasible training width.
pub fn disagreement_point(learn: &LearningParams, bounds: &ControlBounds) -> Result<Control> {
    bounds.validate()?;
    let n_min = learn.min_train_bits(bounds.train_bits.1.floor() as u32)? as f64;
    Ok(Control::new(
        bounds.local_steps.1.floor(),
        bounds.cohort.0.ceil(),
        MIN_BITS.max(bounds.tx_bits.0.ceil()),
        n_min.max(bounds.train_bits.0.ceil()),
    ))
}

/// Bargaining selection: the front point maximizing the product of savings
/// `(g1(D) - g1) * (g2(D) - g2)` over points that improve on the
/// disagreement point in both objectives. When no point does, the
/// disagreement point itself comes back, flagged.
pub fn nbs_point(front: &ParetoFront) -> Result<ParetoPoint> {
    if front.points.is_empty() {
        return Err(Error::domain("selection over an empty front"));
    }
    let [d1, d2] = front.disagreement;
    let mut best: Option<(f64, &ParetoPoint)> = None;
    for p in &front.points {
        let save1 = d1 - p.g1;
        let save2 = d2 - p.g2;
        if save1 > 0.0 && save2 > 0.0 {
            let product = save1 * save2;
            if best.as_ref().map_or(true, |(b, _)| product > *b) {
                best = Some((product, p));
            }
        }
    }
    Ok(match best {
        Some((_, p)) => p.clone(),
        None => ParetoPoint {
            ctrl: front.disagreement_ctrl,
            g1: d1,
            g2: d2,
            zeta1: 0.0,
            s: 0.0,
            penalty_residual: 0.0,
            flagged: true,
        },
    })
}

/// Sum selection: the front point minimizing `g1 + g2` in raw units
/// (joules plus rounds), the discrete stand-in for the tangency of the
/// boundary with a unit-slope line.
pub fn sum_point(front: &ParetoFront) -> Result<ParetoPoint> {
    let mut best: Option<(f64, &ParetoPoint)> = None;
    for p in &front.points {
        let total = p.g1 + p.g2;
        if best.as_ref().map_or(true, |(b, _)| total < *b) {
            best = Some((total, p));
        }
    }
    best.map(|(_, p)| p.clone())
        .ok_or_else(|| Error::domain("selection over an empty front"))
}
