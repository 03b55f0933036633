//! Command-line front end. Subcommands map one-to-one onto the library
//! stages: `boundary` sweeps the energy/rounds trade-off, `points` solves
//! the named operating points, `simulate` validates one point in the
//! training simulator, `compare` tabulates the reference schemes, and
//! `estimate` measures convergence constants from a probe run.
//!
//! Exit codes: 0 success, 2 configuration error, 3 infeasible target,
//! 4 simulated divergence, 1 anything else. Errors print one JSON line on
//! stderr.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::collections::HashMap;
use std::path::PathBuf;

use greenfl::baselines::compare_model;
use greenfl::config::RunConfig;
use greenfl::convergence::{optimal_weights, Control, ControlBounds, LearningParams, Objectives};
use greenfl::energy::{EnergyModel, LinkSpec};
use greenfl::error::{Error, Result};
use greenfl::flsim::task::{generate, partition_dirichlet, Sample, SoftmaxModel};
use greenfl::flsim::{
    build_devices, estimate_constants, reference_optimum, run_federated, ConstantEstimates,
    Device, SimOracle, SimTrace, StepSchedule,
};
use greenfl::output::{write_csv, write_json, Meta};
use greenfl::pareto::{build_front, nbs_point, sum_point, ParetoPoint};
use greenfl::solvers::{minimize_energy, minimize_rounds, DEFAULT_STEP_TOL};

#[derive(Parser)]
#[command(
    name = "greenfl",
    version,
    about = "Energy/convergence co-design for quantized federated training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override of the training seed; recorded in every artifact.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory the artifacts are written into.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the energy-vs-rounds boundary and write it as CSV and JSON.
    Boundary {
        #[command(flatten)]
        common: Common,
        /// Number of mixing-weight samples across the boundary.
        #[arg(long)]
        zeta_steps: Option<usize>,
    },
    /// Solve the four named operating points and tabulate them.
    Points {
        #[command(flatten)]
        common: Common,
    },
    /// Run the training simulator at a named or explicit operating point.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Named operating point to simulate.
        #[arg(long, value_enum, default_value_t = NamedPoint::Nbs, conflicts_with = "ctrl")]
        point: NamedPoint,
        /// Explicit operating point as `I,K,m,n` (integers).
        #[arg(long, value_parser = parse_ctrl)]
        ctrl: Option<Control>,
    },
    /// Optimize each reference scheme, evaluate the model, and simulate.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Accuracy targets, comma separated; defaults to the config list.
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
    },
    /// Measure convergence constants from a short probe run.
    Estimate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NamedPoint {
    /// Bargaining selection on the boundary.
    Nbs,
    /// Minimizer of the plain objective sum.
    Sum,
    /// Energy anchor.
    Emin,
    /// Rounds anchor.
    Tmin,
}

impl NamedPoint {
    fn label(self) -> &'static str {
        match self {
            NamedPoint::Nbs => "nbs",
            NamedPoint::Sum => "sum",
            NamedPoint::Emin => "emin",
            NamedPoint::Tmin => "tmin",
        }
    }
}

fn parse_ctrl(text: &str) -> std::result::Result<Control, String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 4 {
        return Err(format!("expected I,K,m,n with four fields, got {}", parts.len()));
    }
    let mut vals = [0f64; 4];
    for (slot, part) in vals.iter_mut().zip(&parts) {
        let v: i64 = part
            .trim()
            .parse()
            .map_err(|_| format!("`{part}` is not an integer"))?;
        if v < 1 {
            return Err(format!("`{part}` must be at least 1"));
        }
        *slot = v as f64;
    }
    Ok(Control::from_array(vals))
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        let kind = match &err {
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::Infeasible(_) => "infeasible",
            Error::Solver(_) => "solver",
            Error::Diverged(_) => "diverged",
            Error::Io(_) => "io",
        };
        eprintln!(
            "{}",
            serde_json::json!({ "kind": kind, "error": err.to_string() })
        );
        let code = match &err {
            Error::Config(_) => 2,
            Error::Infeasible(_) => 3,
            Error::Diverged(_) => 4,
            _ => 1,
        };
        std::process::exit(code);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Boundary { common, zeta_steps } => cmd_boundary(&common, zeta_steps),
        Command::Points { common } => cmd_points(&common),
        Command::Simulate { common, point, ctrl } => cmd_simulate(&common, point, ctrl),
        Command::Compare { common, eps } => cmd_compare(&common, &eps),
        Command::Estimate { common } => cmd_estimate(&common),
    }
}

// ---------------------------------------------------------------------------
// shared assembly
// ---------------------------------------------------------------------------

/// Everything the closed-form side needs, with probe-measured constants
/// already folded in.
struct Stack {
    cfg: RunConfig,
    learn: LearningParams,
    links: Vec<LinkSpec>,
    bounds: ControlBounds,
    seed: u64,
}

impl Stack {
    fn objectives(&self) -> Result<Objectives<'_>> {
        Objectives::new(
            &self.learn,
            EnergyModel::new(&self.cfg.chip, &self.cfg.arch),
            &self.links,
        )
    }

    fn meta(&self) -> Result<Meta> {
        Ok(Meta {
            config_sha256: self.cfg.hash()?,
            seed: self.seed,
        })
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    match &common.config {
        Some(path) => RunConfig::load(path),
        None => {
            let cfg = RunConfig::default();
            cfg.validate()?;
            Ok(cfg)
        }
    }
}

fn resolve_stack(common: &Common) -> Result<Stack> {
    let cfg = load_config(common)?;
    let seed = common.seed.unwrap_or(cfg.sim.seed);
    let probe = if cfg.needs_probe() {
        Some(probe_constants(&cfg, seed)?)
    } else {
        None
    };
    let learn = cfg.learning_params(probe.as_ref())?;
    let links = cfg.links()?;
    let bounds = cfg.control_bounds(&learn)?;
    Ok(Stack { cfg, learn, links, bounds, seed })
}

fn sim_parts(cfg: &RunConfig) -> Result<(SoftmaxModel, Vec<Vec<Sample>>, Vec<LinkSpec>)> {
    let (model, samples) = generate(&cfg.task_spec(), cfg.sim.task_seed)?;
    let shards = partition_dirichlet(
        &samples,
        cfg.network.devices,
        cfg.sim.alpha,
        cfg.sim.task_seed.wrapping_add(1),
    )?;
    let links = cfg.links()?;
    Ok((model, shards, links))
}

/// Probe run under uniform sampling weights; the measured constants then
/// feed the weight policy, so the order is probe first, weights second.
fn probe_constants(cfg: &RunConfig, seed: u64) -> Result<ConstantEstimates> {
    let (model, shards, links) = sim_parts(cfg)?;
    let uniform = vec![1.0 / cfg.network.devices as f64; cfg.network.devices];
    let devices = build_devices(shards, &links, &uniform)?;
    estimate_constants(
        &devices,
        &model,
        &cfg.sim_schedule(),
        cfg.sim.probe_iters,
        cfg.sim.batch,
        seed,
    )
}

struct SimWorld {
    devices: Vec<Device>,
    model: SoftmaxModel,
    schedule: StepSchedule,
    oracle: SimOracle,
}

fn build_sim_world(cfg: &RunConfig, learn: &LearningParams) -> Result<SimWorld> {
    let (model, shards, links) = sim_parts(cfg)?;
    let devices = build_devices(shards, &links, &learn.weights)?;
    let schedule = cfg.sim_schedule();
    let oracle = reference_optimum(&devices, &model, cfg.sim.oracle_iters, cfg.sim.task_seed)?;
    Ok(SimWorld { devices, model, schedule, oracle })
}

fn run_sim(stack: &Stack, world: &SimWorld, ctrl: &Control) -> Result<SimTrace> {
    let energy = EnergyModel::new(&stack.cfg.chip, &stack.cfg.arch);
    let opts = stack.cfg.sim_options(Some(stack.seed));
    run_federated(
        ctrl,
        &world.devices,
        &world.model,
        &energy,
        &world.schedule,
        &world.oracle,
        &opts,
    )
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

fn cmd_boundary(common: &Common, zeta_steps: Option<usize>) -> Result<()> {
    let stack = resolve_stack(common)?;
    let steps = zeta_steps.unwrap_or(stack.cfg.sweep.zeta_steps);
    if steps < 2 {
        return Err(Error::config("zeta-steps must be at least 2"));
    }
    let obj = stack.objectives()?;
    let front = build_front(&obj, &stack.bounds, steps)?;
    let meta = stack.meta()?;
    let csv = common.out.join("front.csv");
    write_csv(&csv, &front.rows(), &meta)?;
    write_json(&common.out.join("front.json"), &front, &meta)?;
    println!(
        "boundary: {} nondominated points ({} mixing weights) -> {}",
        front.points.len(),
        steps,
        csv.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct PointRow {
    point: String,
    local_steps: i64,
    cohort: i64,
    tx_bits: i64,
    train_bits: i64,
    energy_j: f64,
    rounds: f64,
    /// Fallback or violated-constraint marker from the producing solver.
    flagged: bool,
}

impl PointRow {
    fn new(label: &str, ctrl: &Control, energy: f64, rounds: f64, flagged: bool) -> Self {
        PointRow {
            point: label.into(),
            local_steps: ctrl.local_steps as i64,
            cohort: ctrl.cohort as i64,
            tx_bits: ctrl.tx_bits as i64,
            train_bits: ctrl.train_bits as i64,
            energy_j: energy,
            rounds,
            flagged,
        }
    }

    fn from_pareto(label: &str, p: &ParetoPoint) -> Self {
        PointRow::new(label, &p.ctrl, p.g1, p.g2, p.flagged)
    }
}

#[derive(Debug, Clone, Serialize)]
struct PointsReport {
    rows: Vec<PointRow>,
    utopia: [f64; 2],
    disagreement: [f64; 2],
}

fn solve_points(stack: &Stack) -> Result<PointsReport> {
    let obj = stack.objectives()?;
    let emin = minimize_energy(&obj, &stack.bounds, DEFAULT_STEP_TOL)?;
    let tmin = minimize_rounds(&obj, &stack.bounds)?;
    let front = build_front(&obj, &stack.bounds, stack.cfg.sweep.zeta_steps)?;
    let nbs = nbs_point(&front)?;
    let sum = sum_point(&front)?;
    let rows = vec![
        PointRow::new("emin", &emin.ctrl, emin.energy, emin.rounds, !emin.converged),
        PointRow::new("tmin", &tmin.ctrl, tmin.energy, tmin.rounds, !tmin.converged),
        PointRow::from_pareto("nbs", &nbs),
        PointRow::from_pareto("sum", &sum),
    ];
    Ok(PointsReport {
        rows,
        utopia: front.utopia,
        disagreement: front.disagreement,
    })
}

fn cmd_points(common: &Common) -> Result<()> {
    let stack = resolve_stack(common)?;
    let report = solve_points(&stack)?;
    let meta = stack.meta()?;
    write_csv(&common.out.join("operating_points.csv"), &report.rows, &meta)?;
    write_json(&common.out.join("operating_points.json"), &report, &meta)?;
    println!("point   I   K   m   n       energy_j        rounds");
    for r in &report.rows {
        println!(
            "{:<6} {:>2} {:>3} {:>3} {:>3}  {:>13.6e}  {:>12.3}{}",
            r.point,
            r.local_steps,
            r.cohort,
            r.tx_bits,
            r.train_bits,
            r.energy_j,
            r.rounds,
            if r.flagged { "  (flagged)" } else { "" }
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct SimSummary {
    point: String,
    local_steps: i64,
    cohort: i64,
    tx_bits: i64,
    train_bits: i64,
    rounds_run: usize,
    rounds_to_target: Option<usize>,
    total_energy_j: f64,
    diverged: bool,
    initial_loss: f64,
    final_loss: f64,
    final_gap: f64,
    oracle_loss: f64,
}

fn check_sim_ctrl(ctrl: &Control, bounds: &ControlBounds) -> Result<()> {
    let a = ctrl.as_array();
    if a.iter().any(|v| v.fract() != 0.0) {
        return Err(Error::config(format!(
            "operating point must be integer valued, got {a:?}"
        )));
    }
    if !bounds.contains(ctrl) {
        return Err(Error::config(format!(
            "operating point {a:?} outside the search box {bounds:?}"
        )));
    }
    Ok(())
}

fn cmd_simulate(common: &Common, point: NamedPoint, ctrl: Option<Control>) -> Result<()> {
    let stack = resolve_stack(common)?;
    let (label, ctrl) = match ctrl {
        Some(c) => {
            check_sim_ctrl(&c, &stack.bounds)?;
            ("custom".to_string(), c)
        }
        None => {
            let report = solve_points(&stack)?;
            let row = report
                .rows
                .into_iter()
                .find(|r| r.point == point.label())
                .expect("all four named points are solved");
            let c = Control::new(
                row.local_steps as f64,
                row.cohort as f64,
                row.tx_bits as f64,
                row.train_bits as f64,
            );
            (row.point, c)
        }
    };
    let world = build_sim_world(&stack.cfg, &stack.learn)?;
    let trace = run_sim(&stack, &world, &ctrl)?;
    let meta = stack.meta()?;
    let summary = SimSummary {
        point: label.clone(),
        local_steps: ctrl.local_steps as i64,
        cohort: ctrl.cohort as i64,
        tx_bits: ctrl.tx_bits as i64,
        train_bits: ctrl.train_bits as i64,
        rounds_run: trace.records.len(),
        rounds_to_target: trace.rounds_to_target,
        total_energy_j: trace.total_energy_j,
        diverged: trace.diverged,
        initial_loss: trace.final_state.loss_history[0],
        final_loss: *trace.final_state.loss_history.last().expect("nonempty history"),
        final_gap: trace.records.last().map_or(f64::INFINITY, |r| r.gap),
        oracle_loss: world.oracle.f_star,
    };
    write_csv(&common.out.join("trace.csv"), &trace.rows(), &meta)?;
    write_json(&common.out.join("summary.json"), &summary, &meta)?;
    match trace.rounds_to_target {
        Some(r) => println!(
            "simulate {label}: reached target in {r} rounds, {:.4e} J",
            trace.total_energy_j
        ),
        None => println!(
            "simulate {label}: target not reached in {} rounds (final gap {:.4})",
            summary.rounds_run, summary.final_gap
        ),
    }
    if trace.diverged {
        return Err(Error::Diverged(format!(
            "loss exploded at operating point {label}; trace kept in {}",
            common.out.display()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct CompareRow {
    baseline: String,
    target_gap: f64,
    local_steps: Option<i64>,
    cohort: Option<i64>,
    tx_bits: Option<i64>,
    train_bits: Option<i64>,
    energy_j: Option<f64>,
    rounds: Option<f64>,
    sim_rounds_to_target: Option<usize>,
    sim_total_energy_j: Option<f64>,
    sim_diverged: Option<bool>,
    note: Option<String>,
}

fn cmd_compare(common: &Common, eps: &[f64]) -> Result<()> {
    let stack = resolve_stack(common)?;
    let targets: Vec<f64> = if eps.is_empty() {
        stack.cfg.compare.eps.clone()
    } else {
        eps.to_vec()
    };
    let reference = Control::from_array(stack.cfg.compare.reference_ctrl);
    let model_rows = compare_model(
        &stack.learn,
        &stack.cfg.chip,
        &stack.cfg.arch,
        &stack.links,
        &stack.bounds,
        &targets,
        &reference,
    )?;

    let world = build_sim_world(&stack.cfg, &stack.learn)?;
    // identical operating points reappear across targets; simulate once
    let mut cache: HashMap<[i64; 4], (Option<usize>, f64, bool)> = HashMap::new();
    let mut rows = Vec::with_capacity(model_rows.len());
    for m in model_rows {
        let sim = m.ctrl().map(|ctrl| {
            let key = ctrl.as_array().map(|v| v as i64);
            if let Some(hit) = cache.get(&key) {
                Ok(*hit)
            } else {
                run_sim(&stack, &world, &ctrl).map(|t| {
                    let entry = (t.rounds_to_target, t.total_energy_j, t.diverged);
                    cache.insert(key, entry);
                    entry
                })
            }
        });
        let (sim_vals, sim_err) = match sim {
            Some(Ok(v)) => (Some(v), None),
            Some(Err(e)) => (None, Some(e.to_string())),
            None => (None, None),
        };
        rows.push(CompareRow {
            baseline: m.baseline.clone(),
            target_gap: m.target_gap,
            local_steps: m.local_steps,
            cohort: m.cohort,
            tx_bits: m.tx_bits,
            train_bits: m.train_bits,
            energy_j: m.energy_j,
            rounds: m.rounds,
            sim_rounds_to_target: sim_vals.and_then(|v| v.0),
            sim_total_energy_j: sim_vals.map(|v| v.1),
            sim_diverged: sim_vals.map(|v| v.2),
            note: m.note.or(sim_err),
        });
    }

    let meta = stack.meta()?;
    write_csv(&common.out.join("comparison.csv"), &rows, &meta)?;
    write_json(&common.out.join("comparison.json"), &rows, &meta)?;
    println!(
        "compare: {} rows ({} schemes x {} targets) -> {}",
        rows.len(),
        rows.len() / targets.len(),
        targets.len(),
        common.out.join("comparison.csv").display()
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct ConstantsReport {
    grad_norm_bound: f64,
    noise_sd: Vec<f64>,
    divergence: f64,
    degenerate: bool,
    /// Inverse-variance sampling weights implied by the noise estimates;
    /// absent when the probe saw no gradient signal.
    suggested_weights: Option<Vec<f64>>,
}

fn cmd_estimate(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let seed = common.seed.unwrap_or(cfg.sim.seed);
    let est = probe_constants(&cfg, seed)?;
    let suggested_weights = if est.degenerate {
        None
    } else {
        optimal_weights(&est.noise_sd).ok()
    };
    let report = ConstantsReport {
        grad_norm_bound: est.grad_norm_bound,
        noise_sd: est.noise_sd,
        divergence: est.divergence,
        degenerate: est.degenerate,
        suggested_weights,
    };
    let meta = Meta { config_sha256: cfg.hash()?, seed };
    write_json(&common.out.join("constants.json"), &report, &meta)?;
    println!(
        "estimate: G = {:.4}, Gamma = {:.4}, sigma in [{:.4}, {:.4}]{}",
        report.grad_norm_bound,
        report.divergence,
        report.noise_sd.iter().cloned().fold(f64::INFINITY, f64::min),
        report.noise_sd.iter().cloned().fold(0.0, f64::max),
        if report.degenerate { "  (degenerate probe)" } else { "" }
    );
    Ok(())
}
