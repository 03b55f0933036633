//! Acceptance suite: ten criteria, run by a custom harness that prints
//! exactly one `ACCEPTANCE <nn> <name>: PASS/FAIL ...` verdict line per
//! criterion, keeps going after a failure, and exits nonzero if any
//! criterion failed.
//!
//! Criterion 07 contains two deliberate failures: the energy-minimal
//! training width and the sum-point cohort land away from the calibration
//! targets because the coded model disagrees with them there (see README,
//! "Known deviations"). The tolerances are kept as stated rather than
//! widened to force a green run.
//!
//! Run a subset by passing a substring: `cargo test --test acceptance --
//! quantizer`.

use std::sync::OnceLock;

use rand::prelude::*;

fn main() {
    let criteria: &[(&str, fn())] = &[
        ("01 quantizer moments", criterion_01_quantizer_moments),
        ("02 min train bits", criterion_02_min_train_bits),
        ("03 solver identities", criterion_03_solver_identities_and_oracles),
        ("04 monotonicity/affinity/inversion", criterion_04_monotonicity_affinity_inversion),
        ("05 front vs oracle", criterion_05_front_matches_exhaustive_oracle),
        ("06 penalty convergence", criterion_06_penalty_convergence),
        ("07 operating points", criterion_07_operating_points),
        ("08 simulator consistency", criterion_08_sim_energy_and_sampling_consistency),
        ("09 energy savings", criterion_09_energy_savings_over_reference),
        ("10 determinism", criterion_10_subcommand_determinism),
    ];
    // flag-looking args come from the libtest calling convention; a bare
    // word filters criteria by substring
    let filter = std::env::args().nth(1).filter(|a| !a.starts_with('-'));
    // verdicts carry the failure detail already; the default hook would
    // only add noise between them
    std::panic::set_hook(Box::new(|_| {}));
    let mut failures = 0usize;
    let mut ran = 0usize;
    for (name, criterion) in criteria {
        if let Some(f) = &filter {
            if !name.contains(f.as_str()) {
                continue;
            }
        }
        ran += 1;
        match std::panic::catch_unwind(criterion) {
            Ok(()) => {}
            Err(payload) => {
                failures += 1;
                let msg = payload
                    .downcast_ref::<String>()
                    .map(String::as_str)
                    .or_else(|| payload.downcast_ref::<&str>().copied())
                    .unwrap_or("unexpected panic");
                if msg.starts_with("ACCEPTANCE") {
                    println!("{msg}");
                } else {
                    println!("ACCEPTANCE {name}: FAIL {msg}");
                }
            }
        }
    }
    println!("acceptance: {}/{ran} criteria passed", ran - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use greenfl::config::{ConstSpec, RunConfig, WeightSpec};
use greenfl::convergence::{Control, ControlBounds, LearningParams, Objectives};
use greenfl::energy::{EnergyModel, LinkSpec};
use greenfl::flsim::task::{generate, partition_dirichlet, SoftmaxModel};
use greenfl::flsim::{
    build_devices, reference_optimum, run_federated, Device, SimOptions, SimOracle, SimTrace,
};
use greenfl::num::{line_minimize, unit_grid};
use greenfl::pareto::{build_front, nbs_point, sum_point, ParetoPoint};
use greenfl::quantize::{quantize_scalar, PrecisionLevel, QuantGrid};
use greenfl::solvers::{
    iteration_cubic, minimize_energy, minimize_rounds, nbi_subproblem,
    rounds_stationary_iterations, tx_bits_coeffs, AnchorPoint, Normalization,
    DEFAULT_STEP_TOL, VIOLATION_LIMIT,
};

// ---------------------------------------------------------------------------
// shared fixtures
// ---------------------------------------------------------------------------

fn default_system() -> (RunConfig, LearningParams, Vec<LinkSpec>, ControlBounds) {
    let cfg = RunConfig::default();
    let learn = cfg.learning_params(None).expect("default constants are valid");
    let links = cfg.links().expect("default deployment");
    let bounds = cfg.control_bounds(&learn).expect("default box");
    (cfg, learn, links, bounds)
}

struct NamedPoints {
    emin: AnchorPoint,
    tmin: AnchorPoint,
    nbs: ParetoPoint,
    sum: ParetoPoint,
}

/// The four named operating points at the default configuration; solved
/// once and shared between criteria 07 and 09.
fn named_points() -> &'static NamedPoints {
    static POINTS: OnceLock<NamedPoints> = OnceLock::new();
    POINTS.get_or_init(|| {
        let (cfg, learn, links, bounds) = default_system();
        let obj = Objectives::new(&learn, EnergyModel::new(&cfg.chip, &cfg.arch), &links)
            .expect("default objectives");
        let emin = minimize_energy(&obj, &bounds, DEFAULT_STEP_TOL).expect("energy anchor");
        let tmin = minimize_rounds(&obj, &bounds).expect("rounds anchor");
        let front = build_front(&obj, &bounds, cfg.sweep.zeta_steps).expect("front");
        let nbs = nbs_point(&front).expect("bargaining point");
        let sum = sum_point(&front).expect("sum point");
        NamedPoints { emin, tmin, nbs, sum }
    })
}

// ---------------------------------------------------------------------------
// 01: quantizer moments
// ---------------------------------------------------------------------------


fn criterion_01_quantizer_moments() {
    const DRAWS: usize = 1_000_000;
    const WORDS: u64 = 64;
    let mut worst_bias_sigma = 0f64;
    let mut worst_mse_ratio = 0f64;
    for bits in [2u32, 4, 8] {
        let grid = QuantGrid::<f64>::new(PrecisionLevel::new(bits).unwrap()).unwrap();
        let kappa = (2f64).powi(1 - bits as i32);
        let mse_cap = (2f64).powi(-2 * bits as i32);
        let results: Vec<(f64, f64, f64)> = (0..WORDS)
            .into_par_iter()
            .map(|idx| {
                let mut rng = ChaCha20Rng::seed_from_u64(0xacc1_0000 + idx);
                rng.set_stream(bits as u64);
                // stay inside the representable range so saturation does
                // not enter the moment bounds
                let w = rng.gen_range(-1.0..(1.0 - kappa));
                let mut sum = 0f64;
                let mut sum_sq = 0f64;
                let mut sum_e2 = 0f64;
                let mut sum_e4 = 0f64;
                for _ in 0..DRAWS {
                    let q = quantize_scalar(w, &grid, &mut rng).unwrap();
                    sum += q;
                    sum_sq += q * q;
                    let e2 = (q - w) * (q - w);
                    sum_e2 += e2;
                    sum_e4 += e2 * e2;
                }
                let n = DRAWS as f64;
                let mean = sum / n;
                let var = (sum_sq / n - mean * mean).max(0.0);
                let se = (var / n).sqrt();
                let bias_sigma = if se > 0.0 { (mean - w).abs() / se } else { 0.0 };
                let mse = sum_e2 / n;
                // the bound is tight at cell midpoints, so the comparison
                // carries the same 4-standard-error measurement allowance
                // as the bias clause
                let mse_se = ((sum_e4 / n - mse * mse).max(0.0) / n).sqrt();
                (bias_sigma, mse / mse_cap, (mse_cap + 4.0 * mse_se) / mse_cap)
            })
            .collect();
        for (bias_sigma, mse_ratio, allowed_ratio) in results {
            worst_bias_sigma = worst_bias_sigma.max(bias_sigma);
            worst_mse_ratio = worst_mse_ratio.max(mse_ratio);
            assert!(
                bias_sigma <= 4.0,
                "ACCEPTANCE 01 quantizer moments: FAIL bias {bias_sigma:.2} standard errors at {bits} bits"
            );
            assert!(
                mse_ratio <= allowed_ratio,
                "ACCEPTANCE 01 quantizer moments: FAIL mse {mse_ratio:.6}x the cap at {bits} bits (allowance {allowed_ratio:.6}x)"
            );
        }
    }
    println!(
        "ACCEPTANCE 01 quantizer moments: PASS (worst bias {worst_bias_sigma:.2} SE, worst mse {worst_mse_ratio:.3}x cap)"
    );
}

// ---------------------------------------------------------------------------
// 02: minimal training width
// ---------------------------------------------------------------------------


fn criterion_02_min_train_bits() {
    for devices in [10usize, 50, 200] {
        let mut cfg = RunConfig::default();
        cfg.network.devices = devices;
        let learn = cfg.learning_params(None).unwrap();
        let bits = learn.min_train_bits(cfg.arch.max_train_bits).unwrap();
        assert_eq!(
            bits, 15,
            "ACCEPTANCE 02 min train bits: FAIL got {bits} at N = {devices}, expected 15"
        );
    }
    println!("ACCEPTANCE 02 min train bits: PASS (15 at N = 10, 50, 200)");
}

// ---------------------------------------------------------------------------
// 03: analytic solver identities vs numeric oracles
// ---------------------------------------------------------------------------


fn criterion_03_solver_identities_and_oracles() {
    const VALID_DRAWS: usize = 1000;
    const REL_IDENTITY: f64 = 1e-6;
    const REL_OBJECTIVE: f64 = 1e-3;

    let mut cfg = RunConfig::default();
    cfg.network.devices = 5;
    let base = cfg.learning_params(None).unwrap();
    let links = cfg.links().unwrap();
    let model = EnergyModel::new(&cfg.chip, &cfg.arch);

    let mut rng = ChaCha20Rng::seed_from_u64(0xacc1_0003);
    let mut valid = 0usize;
    let mut attempts = 0usize;
    let mut worst_cubic = 0f64;
    let mut worst_trans = 0f64;
    let mut worst_square = 0f64;
    let mut worst_obj_gap = 0f64;

    while valid < VALID_DRAWS {
        attempts += 1;
        assert!(
            attempts < 20 * VALID_DRAWS,
            "ACCEPTANCE 03 solver identities: FAIL too few feasible draws ({valid}/{VALID_DRAWS})"
        );
        let mut learn = base.clone();
        learn.grad_norm_bound = rng.gen_range(0.1..1.0);
        learn.divergence = rng.gen_range(0.05..0.5);
        let sigma = rng.gen_range(0.1..0.8);
        learn.noise_sd = vec![sigma; 5];
        learn.target_gap = rng.gen_range(0.05..0.3);

        let n_floor = match learn.min_train_bits(cfg.arch.max_train_bits) {
            Ok(b) => b as f64,
            Err(_) => continue,
        };
        let bounds = ControlBounds {
            local_steps: (1.0, 30.0),
            cohort: (1.0, 5.0),
            tx_bits: (2.0, 32.0),
            train_bits: (n_floor, 32.0),
        };
        let obj = Objectives::new(&learn, model.clone(), &links).unwrap();
        let at = Control::new(
            rng.gen_range(1..=30) as f64,
            rng.gen_range(1..=5) as f64,
            rng.gen_range(8..=32) as f64,
            rng.gen_range(n_floor as i64..=32) as f64,
        );
        if obj.total_energy(&at).is_err() {
            continue;
        }

        // iteration-count stationarity cubic: residual at every real root
        let coeffs = iteration_cubic(&obj, &at).unwrap();
        for r in coeffs.real_roots() {
            if r <= 0.0 {
                continue;
            }
            let scale = (coeffs.h1 * r * r * r).abs()
                + (coeffs.h2 * r * r).abs()
                + coeffs.h3.abs();
            let rel = coeffs.eval(r).abs() / scale.max(f64::MIN_POSITIVE);
            worst_cubic = worst_cubic.max(rel);
            assert!(
                rel <= REL_IDENTITY,
                "ACCEPTANCE 03 solver identities: FAIL cubic residual {rel:.2e} at root {r}"
            );
        }

        // transmission-width stationarity: residual at every Lambert point
        if let Ok(tc) = tx_bits_coeffs(&obj, &at) {
            for m in tc.stationary_points() {
                let scale = m.abs() + (tc.m_a * 4f64.powf(m)).abs() + tc.m_b.abs();
                let rel = tc.residual(m).abs() / scale.max(f64::MIN_POSITIVE);
                worst_trans = worst_trans.max(rel);
                assert!(
                    rel <= REL_IDENTITY,
                    "ACCEPTANCE 03 solver identities: FAIL width residual {rel:.2e} at m = {m}"
                );
            }
        }

        // rounds-minimizing iteration count: square identity recomputed
        // term by term from the public constant accessors
        if let Ok(i2) = rounds_stationary_iterations(&obj, &bounds) {
            let g2 = learn.grad_norm_bound * learn.grad_norm_bound;
            let slope = 4.0 * g2 * (1.0 + 1.0 / bounds.cohort.1);
            let headroom = learn.noise_sq()
                + 4.0 * g2
                + 4.0 * learn.smoothness * learn.divergence
                - learn.step_offset / learn.round_multiplier(bounds.train_bits.1).unwrap();
            let rel = (i2 * i2 * slope - headroom).abs() / headroom.abs().max(f64::MIN_POSITIVE);
            worst_square = worst_square.max(rel);
            assert!(
                rel <= REL_IDENTITY,
                "ACCEPTANCE 03 solver identities: FAIL iteration-square identity {rel:.2e}"
            );
        }

        // numeric-oracle argmin agreement, objective values
        let oracle_gap = |analytic: f64, oracle: f64| (analytic - oracle).abs() / oracle.abs();

        let i_star =
            greenfl::solvers::optimal_local_steps(&obj, &bounds, &at).unwrap();
        let energy_at_i = |i: f64| {
            let mut c = at;
            c.local_steps = i;
            obj.total_energy(&c).unwrap_or(f64::INFINITY)
        };
        let (_, e_oracle) =
            line_minimize(energy_at_i, bounds.local_steps.0, bounds.local_steps.1, 1e-8);
        let gap = oracle_gap(energy_at_i(i_star), e_oracle);
        worst_obj_gap = worst_obj_gap.max(gap);
        assert!(
            gap <= REL_OBJECTIVE,
            "ACCEPTANCE 03 solver identities: FAIL iteration argmin off oracle by {gap:.2e}"
        );

        let m_star = greenfl::solvers::optimal_tx_bits(&obj, &bounds, &at).unwrap();
        let energy_at_m = |m: f64| {
            let mut c = at;
            c.tx_bits = m;
            obj.total_energy(&c).unwrap_or(f64::INFINITY)
        };
        let (_, e_oracle) = line_minimize(energy_at_m, bounds.tx_bits.0, bounds.tx_bits.1, 1e-8);
        let gap = oracle_gap(energy_at_m(m_star), e_oracle);
        worst_obj_gap = worst_obj_gap.max(gap);
        assert!(
            gap <= REL_OBJECTIVE,
            "ACCEPTANCE 03 solver identities: FAIL width argmin off oracle by {gap:.2e}"
        );

        if let Ok(i2) = rounds_stationary_iterations(&obj, &bounds) {
            let rounds_at_i = |i: f64| {
                let c = Control::new(i, bounds.cohort.1, bounds.tx_bits.1, bounds.train_bits.1);
                obj.rounds(&c).unwrap_or(f64::INFINITY)
            };
            let clamped = i2.clamp(bounds.local_steps.0, bounds.local_steps.1);
            let (_, r_oracle) =
                line_minimize(rounds_at_i, bounds.local_steps.0, bounds.local_steps.1, 1e-8);
            let gap = oracle_gap(rounds_at_i(clamped), r_oracle);
            worst_obj_gap = worst_obj_gap.max(gap);
            assert!(
                gap <= REL_OBJECTIVE,
                "ACCEPTANCE 03 solver identities: FAIL round-minimizer off oracle by {gap:.2e}"
            );
        }
        valid += 1;
    }
    println!(
        "ACCEPTANCE 03 solver identities: PASS ({VALID_DRAWS} draws; residuals cubic {worst_cubic:.1e} / width {worst_trans:.1e} / square {worst_square:.1e}; oracle gap {worst_obj_gap:.1e})"
    );
}

// ---------------------------------------------------------------------------
// 04: monotonicity, affinity, inversion
// ---------------------------------------------------------------------------


fn criterion_04_monotonicity_affinity_inversion() {
    let (cfg, learn, links, _) = default_system();
    let obj = Objectives::new(&learn, EnergyModel::new(&cfg.chip, &cfg.arch), &links).unwrap();

    let ks: Vec<f64> = (0..10).map(|i| 1.0 + 5.0 * i as f64).collect(); // 1..46
    let ms: Vec<f64> = (0..8).map(|i| 4.0 + 4.0 * i as f64).collect(); // 4..32
    let ns: Vec<f64> = (0..8).map(|i| 15.0 + 2.0 * i as f64).collect(); // 15..29
    let steps = 2.0;

    // rounds strictly decreasing along each axis of the grid
    let mut checked = 0usize;
    for &k in &ks {
        for &m in &ms {
            for &n in &ns {
                let here = obj.rounds(&Control::new(steps, k, m, n)).unwrap();
                for (dk, dm, dn) in [(5.0, 0.0, 0.0), (0.0, 4.0, 0.0), (0.0, 0.0, 2.0)] {
                    let next = Control::new(steps, k + dk, m + dm, n + dn);
                    if next.cohort > 46.0 || next.tx_bits > 32.0 || next.train_bits > 29.0 {
                        continue;
                    }
                    let there = obj.rounds(&next).unwrap();
                    assert!(
                        there < here,
                        "ACCEPTANCE 04 monotonicity: FAIL rounds not decreasing from {:?} to {:?} ({here} -> {there})",
                        (k, m, n),
                        (next.cohort, next.tx_bits, next.train_bits)
                    );
                    checked += 1;
                }
            }
        }
    }

    // per-round energy exactly affine in the cohort size (zero second
    // difference up to a few ulps)
    for &m in &ms {
        for &n in &ns {
            for k in 1..=8 {
                let e = |k: f64| obj.per_round_energy(&Control::new(steps, k, m, n)).unwrap();
                let (a, b, c) = (e(k as f64), e(k as f64 + 1.0), e(k as f64 + 2.0));
                let second = (a + c - 2.0 * b).abs();
                assert!(
                    second <= 8.0 * f64::EPSILON * b.abs(),
                    "ACCEPTANCE 04 monotonicity: FAIL energy not affine in cohort at (m={m}, n={n}, K={k}): second difference {second:e}"
                );
            }
        }
    }

    // plugging the solved round count back into the gap bound returns the
    // target exactly
    let eps = learn.target_gap;
    for &k in &ks {
        for &m in &ms {
            for &n in &ns {
                let ctrl = Control::new(steps, k, m, n);
                let rounds = learn.rounds_to_target(&ctrl).unwrap();
                let gap = learn.gap_bound(&ctrl, rounds).unwrap();
                assert!(
                    (gap - eps).abs() <= 1e-9,
                    "ACCEPTANCE 04 monotonicity: FAIL inversion defect {:e} at {:?}",
                    (gap - eps).abs(),
                    (k, m, n)
                );
            }
        }
    }
    println!(
        "ACCEPTANCE 04 monotonicity/affinity/inversion: PASS ({checked} axis steps, 640 affinity and inversion probes)"
    );
}

// ---------------------------------------------------------------------------
// 05: boundary sweep vs exhaustive oracle
// ---------------------------------------------------------------------------


fn criterion_05_front_matches_exhaustive_oracle() {
    let mut cfg = RunConfig::default();
    cfg.network.devices = 10;
    let learn = cfg.learning_params(None).unwrap();
    let links = cfg.links().unwrap();
    let obj = Objectives::new(&learn, EnergyModel::new(&cfg.chip, &cfg.arch), &links).unwrap();
    let n_floor = learn.min_train_bits(32).unwrap() as f64;
    let bounds = ControlBounds {
        local_steps: (1.0, 10.0),
        cohort: (1.0, 10.0),
        tx_bits: (8.0, 32.0),
        train_bits: (n_floor.max(8.0), 32.0),
    };

    // oracle: every integer point of the reduced box (finer than needed,
    // so the reference set can only be stronger)
    let mut all: Vec<(f64, f64)> = Vec::new();
    for i in 1..=10 {
        for k in 1..=10 {
            for m in 8..=32 {
                for n in (bounds.train_bits.0 as i64)..=32 {
                    let ctrl = Control::new(i as f64, k as f64, m as f64, n as f64);
                    if let Ok([e, r]) = obj.pair(&ctrl) {
                        all.push((e, r));
                    }
                }
            }
        }
    }
    // nondominated extraction by sweep: ascending energy, keep points
    // that strictly improve the best round count seen so far
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut oracle: Vec<(f64, f64)> = Vec::new();
    let mut best_rounds = f64::INFINITY;
    for (e, r) in all {
        if r < best_rounds {
            oracle.push((e, r));
            best_rounds = r;
        }
    }
    assert!(!oracle.is_empty());

    let front = build_front(&obj, &bounds, 21).unwrap();
    let mut worst_near = 0f64;
    for p in &front.points {
        // (a) close to some oracle point on both axes
        let near = oracle
            .iter()
            .map(|&(e, r)| {
                let de = (p.g1 - e).abs() / e;
                let dr = (p.g2 - r).abs() / r;
                de.max(dr)
            })
            .fold(f64::INFINITY, f64::min);
        worst_near = worst_near.max(near);
        assert!(
            near <= 0.05,
            "ACCEPTANCE 05 front vs oracle: FAIL point ({:.4}, {:.2}) is {:.1}% from the oracle set",
            p.g1,
            p.g2,
            near * 100.0
        );
        // (b) not dominated by more than 5% on both axes
        for &(e, r) in &oracle {
            assert!(
                !(e < p.g1 * 0.95 && r < p.g2 * 0.95),
                "ACCEPTANCE 05 front vs oracle: FAIL oracle ({e:.4}, {r:.2}) dominates ({:.4}, {:.2}) by >5%",
                p.g1,
                p.g2
            );
        }
    }
    println!(
        "ACCEPTANCE 05 front vs oracle: PASS ({} front points, {} oracle points, worst offset {:.2}%)",
        front.points.len(),
        oracle.len(),
        worst_near * 100.0
    );
}

// ---------------------------------------------------------------------------
// 06: penalty-stage convergence
// ---------------------------------------------------------------------------


fn criterion_06_penalty_convergence() {
    let (cfg, learn, links, bounds) = default_system();
    let obj = Objectives::new(&learn, EnergyModel::new(&cfg.chip, &cfg.arch), &links).unwrap();
    let norm = Normalization::compute(&obj, &bounds, DEFAULT_STEP_TOL).unwrap();
    let zetas = unit_grid(cfg.sweep.zeta_steps);
    let solutions: Vec<_> = zetas
        .par_iter()
        .map(|&z| nbi_subproblem(&obj, &bounds, &norm, z).unwrap())
        .collect();

    let flagged = solutions.iter().filter(|s| s.flagged).count();
    let mut qualifying = 0usize;
    let mut considered = 0usize;
    for sol in &solutions {
        if sol.flagged {
            continue;
        }
        considered += 1;
        let violations: Vec<f64> = sol.trace.iter().map(|(_, v2)| v2.sqrt()).collect();
        let monotone = violations
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-9 * (1.0 + w[0]));
        let converged = violations.last().copied().unwrap_or(f64::INFINITY) < VIOLATION_LIMIT;
        if monotone && converged {
            qualifying += 1;
        }
    }
    let needed = (0.9 * considered as f64).ceil() as usize;
    assert!(
        qualifying >= needed,
        "ACCEPTANCE 06 penalty convergence: FAIL {qualifying}/{considered} mixing weights qualify, need {needed} (flagged: {flagged})"
    );
    println!(
        "ACCEPTANCE 06 penalty convergence: PASS ({qualifying}/{considered} qualify, {flagged} flagged)"
    );
}

// ---------------------------------------------------------------------------
// 07: operating-point reproduction (contains two expected failures)
// ---------------------------------------------------------------------------


fn criterion_07_operating_points() {
    let pts = named_points();
    let found = [
        ("emin", pts.emin.ctrl),
        ("tmin", pts.tmin.ctrl),
        ("nbs", pts.nbs.ctrl),
        ("sum", pts.sum.ctrl),
    ];
    // (target, per-coordinate tolerance); the rounds anchor is exact
    let targets: [(&str, [f64; 4], [f64; 4]); 4] = [
        ("emin", [1.0, 1.0, 11.0, 15.0], [1.0, 1.0, 1.0, 1.0]),
        ("tmin", [1.0, 50.0, 32.0, 32.0], [0.0, 0.0, 0.0, 0.0]),
        ("nbs", [1.0, 5.0, 12.0, 19.0], [1.0, 2.0, 1.0, 1.0]),
        ("sum", [1.0, 7.0, 12.0, 20.0], [1.0, 2.0, 1.0, 1.0]),
    ];
    let mut failures = Vec::new();
    for ((name, ctrl), (_, target, tol)) in found.iter().zip(&targets) {
        let got = ctrl.as_array();
        let ok = got
            .iter()
            .zip(target.iter().zip(tol))
            .all(|(g, (t, tl))| (g - t).abs() <= *tl);
        let verdict = if ok { "ok" } else { "DEVIATION" };
        println!(
            "ACCEPTANCE 07 operating points: {name} found {got:?} target {target:?} +-{tol:?} -> {verdict}"
        );
        if !ok {
            failures.push(format!("{name}: found {got:?}, target {target:?} +-{tol:?}"));
        }
    }
    assert!(
        failures.is_empty(),
        "ACCEPTANCE 07 operating points: FAIL {}",
        failures.join("; ")
    );
    println!("ACCEPTANCE 07 operating points: PASS");
}

// ---------------------------------------------------------------------------
// 08: simulator consistency with the energy accounting and sampling law
// ---------------------------------------------------------------------------

struct SimWorld {
    devices: Vec<Device>,
    model: SoftmaxModel,
    oracle: SimOracle,
}

fn build_world(cfg: &RunConfig, learn: &LearningParams) -> SimWorld {
    let (model, samples) = generate(&cfg.task_spec(), cfg.sim.task_seed).unwrap();
    let shards = partition_dirichlet(
        &samples,
        cfg.network.devices,
        cfg.sim.alpha,
        cfg.sim.task_seed.wrapping_add(1),
    )
    .unwrap();
    let links = cfg.links().unwrap();
    let devices = build_devices(shards, &links, &learn.weights).unwrap();
    let oracle =
        reference_optimum(&devices, &model, cfg.sim.oracle_iters, cfg.sim.task_seed).unwrap();
    SimWorld { devices, model, oracle }
}

fn run_once(cfg: &RunConfig, world: &SimWorld, ctrl: &Control, opts: &SimOptions) -> SimTrace {
    let energy = EnergyModel::new(&cfg.chip, &cfg.arch);
    run_federated(
        ctrl,
        &world.devices,
        &world.model,
        &energy,
        &cfg.sim_schedule(),
        &world.oracle,
        opts,
    )
    .unwrap()
}


fn criterion_08_sim_energy_and_sampling_consistency() {
    let mut cfg = RunConfig::default();
    cfg.network.devices = 20;
    cfg.sim.samples = 800;
    // deliberately nonuniform sampling law via inverse-variance weights
    let sigmas: Vec<f64> = (0..20).map(|k| 0.2 + 0.02 * k as f64).collect();
    cfg.convergence.noise_sd = ConstSpec::PerDevice(sigmas);
    cfg.convergence.weights = WeightSpec::Policy("optimal".into());
    let learn = cfg.learning_params(None).unwrap();
    let links = cfg.links().unwrap();
    let obj = Objectives::new(&learn, EnergyModel::new(&cfg.chip, &cfg.arch), &links).unwrap();

    let ctrl = Control::new(2.0, 5.0, 8.0, 16.0);
    let expected_round = obj.per_round_energy(&ctrl).unwrap();

    let world = build_world(&cfg, &learn);
    let mut energies = Vec::new();
    let mut counts = vec![0usize; 20];
    let mut draws = 0usize;
    for seed in 0..5u64 {
        let opts = SimOptions {
            max_rounds: 200,
            target_gap: 1e-12, // never reached: always 200 full rounds
            batch: cfg.sim.batch,
            with_replacement: true,
            seed,
        };
        let trace = run_once(&cfg, &world, &ctrl, &opts);
        assert_eq!(trace.records.len(), 200);
        for rec in &trace.records {
            energies.push(rec.round_energy_j);
            for &id in &rec.selected {
                counts[id] += 1;
                draws += 1;
            }
        }
    }
    let mean = energies.iter().sum::<f64>() / energies.len() as f64;
    let rel = (mean - expected_round).abs() / expected_round;
    assert!(
        rel <= 0.05,
        "ACCEPTANCE 08 simulator consistency: FAIL per-round energy off by {:.1}% (sim {mean:.4e}, model {expected_round:.4e})",
        rel * 100.0
    );

    let mut worst_sigma = 0f64;
    for (k, &c) in counts.iter().enumerate() {
        let p = learn.weights[k];
        let freq = c as f64 / draws as f64;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        let dev = (freq - p).abs() / se;
        worst_sigma = worst_sigma.max(dev);
        assert!(
            dev <= 3.0,
            "ACCEPTANCE 08 simulator consistency: FAIL device {k} drawn at {freq:.4} vs p = {p:.4} ({dev:.2} SE)"
        );
    }
    println!(
        "ACCEPTANCE 08 simulator consistency: PASS (energy off {:.2}%, worst selection deviation {worst_sigma:.2} SE over {draws} draws)",
        rel * 100.0
    );
}

// ---------------------------------------------------------------------------
// 09: energy savings against the fixed reference configuration
// ---------------------------------------------------------------------------

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}


fn criterion_09_energy_savings_over_reference() {
    let (cfg, learn, _, _) = default_system();
    let proposed = named_points().nbs.ctrl;
    let reference = Control::new(2.0, 5.0, 32.0, 32.0);
    let world = build_world(&cfg, &learn);

    let mut energy_ratios = Vec::new();
    let mut round_ratios = Vec::new();
    for seed in 0..5u64 {
        let opts = SimOptions { seed, ..cfg.sim_options(None) };
        let ours = run_once(&cfg, &world, &proposed, &opts);
        let theirs = run_once(&cfg, &world, &reference, &opts);
        let (our_rounds, their_rounds) = match (ours.rounds_to_target, theirs.rounds_to_target) {
            (Some(a), Some(b)) => (a as f64, b as f64),
            _ => panic!(
                "ACCEPTANCE 09 energy savings: FAIL a run missed the target (proposed {:?}, reference {:?})",
                ours.rounds_to_target, theirs.rounds_to_target
            ),
        };
        energy_ratios.push(ours.total_energy_j / theirs.total_energy_j);
        round_ratios.push(our_rounds / their_rounds);
    }
    let e_ratio = median(energy_ratios);
    let r_ratio = median(round_ratios);
    assert!(
        e_ratio <= 0.6,
        "ACCEPTANCE 09 energy savings: FAIL median energy ratio {e_ratio:.3} (> 0.6)"
    );
    assert!(
        r_ratio <= 1.5,
        "ACCEPTANCE 09 energy savings: FAIL median round ratio {r_ratio:.3} (> 1.5)"
    );
    println!(
        "ACCEPTANCE 09 energy savings: PASS (median savings {:.1}%, round ratio {r_ratio:.2})",
        (1.0 - e_ratio) * 100.0
    );
}

// ---------------------------------------------------------------------------
// 10: byte-identical reruns of every subcommand
// ---------------------------------------------------------------------------


fn criterion_10_subcommand_determinism() {
    let bin = env!("CARGO_BIN_EXE_greenfl");
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("small.toml");
    std::fs::write(
        &cfg_path,
        "[network]\ndevices = 10\n\n[bounds]\nlocal_steps_max = 10.0\n\n[sweep]\nzeta_steps = 5\n\n\
         [sim]\nsamples = 500\nmax_rounds = 60\ntarget_gap = 0.05\noracle_iters = 100\nprobe_iters = 10\n",
    )
    .unwrap();

    let cases: [(&str, Vec<&str>); 5] = [
        ("boundary", vec!["boundary", "--zeta-steps", "5"]),
        ("points", vec!["points"]),
        ("simulate", vec!["simulate", "--ctrl", "2,5,16,16"]),
        ("compare", vec!["compare", "--eps", "0.1"]),
        ("estimate", vec!["estimate"]),
    ];
    for (name, args) in &cases {
        let mut outputs: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
        for run in 0..2 {
            let out_dir = dir.path().join(format!("{name}_{run}"));
            let output = std::process::Command::new(bin)
                .args(args.as_slice())
                .args(["--config", cfg_path.to_str().unwrap()])
                .args(["--seed", "3"])
                .args(["--out", out_dir.to_str().unwrap()])
                .output()
                .unwrap();
            assert!(
                output.status.success(),
                "ACCEPTANCE 10 determinism: FAIL `{name}` exited with {}: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr)
            );
            let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out_dir)
                .unwrap()
                .map(|e| {
                    let e = e.unwrap();
                    (
                        e.file_name().to_string_lossy().into_owned(),
                        std::fs::read(e.path()).unwrap(),
                    )
                })
                .collect();
            files.sort_by(|a, b| a.0.cmp(&b.0));
            assert!(!files.is_empty(), "`{name}` wrote no artifacts");
            outputs.push(files);
        }
        let names_a: Vec<&String> = outputs[0].iter().map(|(n, _)| n).collect();
        let names_b: Vec<&String> = outputs[1].iter().map(|(n, _)| n).collect();
        assert_eq!(names_a, names_b, "`{name}` artifact sets differ across runs");
        for ((file, a), (_, b)) in outputs[0].iter().zip(&outputs[1]) {
            assert!(
                a == b,
                "ACCEPTANCE 10 determinism: FAIL `{name}` artifact {file} differs between identical runs"
            );
        }
    }
    println!("ACCEPTANCE 10 determinism: PASS (5 subcommands, byte-identical reruns)");
}
