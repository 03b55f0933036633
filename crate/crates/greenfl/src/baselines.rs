//! Training-scheme comparison. Each baseline optimizes a subset of the
//! control variables for total energy and freezes the rest at a reference
//! operating point; the full scheme optimizes all four. Because every
//! baseline searches a subset of the full scheme's feasible set, the full
//! scheme can never come out worse in the modeled objective.

use serde::{Deserialize, Serialize};

use crate::convergence::{Control, ControlBounds, LearningParams, Objectives};
use crate::energy::{ChipSpec, EnergyModel, LinkSpec};
use crate::error::{Error, Result};
use crate::solvers::{minimize_energy, optimal_local_steps, DEFAULT_STEP_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    LocalSteps,
    Cohort,
    TxBits,
    TrainBits,
}

pub const AXES: [Axis; 4] = [Axis::LocalSteps, Axis::Cohort, Axis::TxBits, Axis::TrainBits];

impl Axis {
    fn of(self, ctrl: &Control) -> f64 {
        match self {
            Axis::LocalSteps => ctrl.local_steps,
            Axis::Cohort => ctrl.cohort,
            Axis::TxBits => ctrl.tx_bits,
            Axis::TrainBits => ctrl.train_bits,
        }
    }

    fn range_mut(self, bounds: &mut ControlBounds) -> &mut (f64, f64) {
        match self {
            Axis::LocalSteps => &mut bounds.local_steps,
            Axis::Cohort => &mut bounds.cohort,
            Axis::TxBits => &mut bounds.tx_bits,
            Axis::TrainBits => &mut bounds.train_bits,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    FedAvg,
    FedPaq,
    IFedAvg,
    UnifiedQ,
    MnFedAvg,
    Proposed,
}

pub const ALL_BASELINES: [BaselineKind; 6] = [
    BaselineKind::FedAvg,
    BaselineKind::FedPaq,
    BaselineKind::IFedAvg,
    BaselineKind::UnifiedQ,
    BaselineKind::MnFedAvg,
    BaselineKind::Proposed,
];

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::FedAvg => "fedavg",
            BaselineKind::FedPaq => "fedpaq",
            BaselineKind::IFedAvg => "ifedavg",
            BaselineKind::UnifiedQ => "unifiedq",
            BaselineKind::MnFedAvg => "mnfedavg",
            BaselineKind::Proposed => "proposed",
        }
    }
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which variables a scheme may move and where the rest are pinned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    /// Pinned axes with their values, taken from the reference point.
    pub frozen: Vec<(Axis, f64)>,
    /// Transmission width forced equal to the training width.
    pub tie_tx_to_train: bool,
}

impl BaselineSpec {
    pub fn for_kind(kind: BaselineKind, reference: &Control) -> Self {
        let pin = |axes: &[Axis]| -> Vec<(Axis, f64)> {
            axes.iter().map(|a| (*a, a.of(reference))).collect()
        };
        let (frozen, tie) = match kind {
            BaselineKind::FedAvg => (pin(&AXES), false),
            BaselineKind::FedPaq => (pin(&[Axis::LocalSteps, Axis::Cohort, Axis::TrainBits]), false),
            BaselineKind::IFedAvg => (pin(&[Axis::TxBits, Axis::TrainBits]), false),
            BaselineKind::UnifiedQ => (Vec::new(), true),
            BaselineKind::MnFedAvg => (pin(&[Axis::LocalSteps, Axis::Cohort]), false),
            BaselineKind::Proposed => (Vec::new(), false),
        };
        BaselineSpec { kind, frozen, tie_tx_to_train: tie }
    }

    /// The axes the scheme actually searches over.
    pub fn optimized(&self) -> Vec<Axis> {
        AXES.iter()
            .copied()
            .filter(|a| !self.frozen.iter().any(|(f, _)| f == a))
            .collect()
    }

    /// The search box with the frozen axes collapsed to single points.
    /// Fails when a pinned value falls outside the global box (for
    /// example a reference training width below the feasibility floor).
    pub fn restrict(&self, bounds: &ControlBounds) -> Result<ControlBounds> {
        let mut restricted = *bounds;
        for (axis, value) in &self.frozen {
            let range = axis.range_mut(&mut restricted);
            if *value < range.0 || *value > range.1 {
                return Err(Error::infeasible(format!(
                    "{}: pinned {axis:?} = {value} outside [{}, {}]",
                    self.kind, range.0, range.1
                )));
            }
            *range = (*value, *value);
        }
        restricted.validate()?;
        Ok(restricted)
    }
}

/// Energy-minimize a scheme inside its restricted box. Returns the integer
/// operating point with both objective values.
pub fn optimize_baseline(
    spec: &BaselineSpec,
    obj: &Objectives,
    bounds: &ControlBounds,
) -> Result<(Control, f64, f64)> {
    let restricted = spec.restrict(bounds)?;
    if spec.tie_tx_to_train {
        return optimize_tied(obj, &restricted);
    }
    let anchor = minimize_energy(obj, &restricted, DEFAULT_STEP_TOL)?;
    Ok((anchor.ctrl, anchor.energy, anchor.rounds))
}

/// Energy minimization with the two bit widths locked together: integer
/// scan over the shared width, per-width closed-form iteration count,
/// cohort at its energy-optimal lower bound.
fn optimize_tied(obj: &Objectives, bounds: &ControlBounds) -> Result<(Control, f64, f64)> {
    let cohort = bounds.cohort.0;
    let lo = bounds.tx_bits.0.max(bounds.train_bits.0).ceil() as i64;
    let hi = bounds.tx_bits.1.min(bounds.train_bits.1).floor() as i64;
    if lo > hi {
        return Err(Error::infeasible("tied-width ranges do not overlap"));
    }
    let mut best: Option<(f64, Control)> = None;
    for width in lo..=hi {
        let width = width as f64;
        let probe = Control::new(bounds.local_steps.0, cohort, width, width);
        let relaxed_steps = match optimal_local_steps(obj, bounds, &probe) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let mut candidates = vec![
            relaxed_steps.floor(),
            relaxed_steps.ceil(),
            bounds.local_steps.0.ceil(),
            bounds.local_steps.1.floor(),
        ];
        candidates.retain(|i| *i >= bounds.local_steps.0 && *i <= bounds.local_steps.1);
        candidates.dedup();
        for steps in candidates {
            let ctrl = Control::new(steps, cohort, width, width);
            if let Ok(e) = obj.total_energy(&ctrl) {
                if best.as_ref().map_or(true, |(b, _)| e < *b) {
                    best = Some((e, ctrl));
                }
            }
        }
    }
    let (energy, ctrl) = best
        .ok_or_else(|| Error::infeasible("no feasible tied-width operating point"))?;
    Ok((ctrl, energy, obj.rounds(&ctrl)?))
}

/// One row of the model-side comparison table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelComparison {
    pub baseline: String,
    pub target_gap: f64,
    pub local_steps: Option<i64>,
    pub cohort: Option<i64>,
    pub tx_bits: Option<i64>,
    pub train_bits: Option<i64>,
    pub energy_j: Option<f64>,
    pub rounds: Option<f64>,
    /// Why the scheme has no entry at this target, when it does not.
    pub note: Option<String>,
}

impl ModelComparison {
    pub fn ctrl(&self) -> Option<Control> {
        Some(Control::new(
            self.local_steps? as f64,
            self.cohort? as f64,
            self.tx_bits? as f64,
            self.train_bits? as f64,
        ))
    }
}

/// Optimize every scheme at every accuracy target. An infeasible scheme
/// gets a note instead of aborting the table.
pub fn compare_model(
    learn: &LearningParams,
    chip: &ChipSpec,
    arch: &crate::energy::ModelArch,
    links: &[LinkSpec],
    bounds: &ControlBounds,
    targets: &[f64],
    reference: &Control,
) -> Result<Vec<ModelComparison>> {
    let mut rows = Vec::with_capacity(targets.len() * ALL_BASELINES.len());
    for &gap in targets {
        if !(gap > 0.0) {
            return Err(Error::config(format!("accuracy target {gap} must be positive")));
        }
        let mut learn_at = learn.clone();
        learn_at.target_gap = gap;
        let obj = Objectives::new(&learn_at, EnergyModel::new(chip, arch), links)?;
        for kind in ALL_BASELINES {
            let spec = BaselineSpec::for_kind(kind, reference);
            let row = match optimize_baseline(&spec, &obj, bounds) {
                Ok((ctrl, energy, rounds)) => ModelComparison {
                    baseline: kind.name().into(),
                    target_gap: gap,
                    local_steps: Some(ctrl.local_steps as i64),
                    cohort: Some(ctrl.cohort as i64),
                    tx_bits: Some(ctrl.tx_bits as i64),
                    train_bits: Some(ctrl.train_bits as i64),
                    energy_j: Some(energy),
                    rounds: Some(rounds),
                    note: None,
                },
                Err(e) => ModelComparison {
                    baseline: kind.name().into(),
                    target_gap: gap,
                    local_steps: None,
                    cohort: None,
                    tx_bits: None,
                    train_bits: None,
                    energy_j: None,
                    rounds: None,
                    note: Some(e.to_string()),
                },
            };
            rows.push(row);
        }
    }
    Ok(rows)
}
