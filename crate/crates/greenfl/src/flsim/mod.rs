//! Desk-scale federated training loop with quantized forwards and quantized
//! uplinks, used to check the closed-form energy/rounds models against an
//! executable system.
//!
//! Two dimensionalities coexist on purpose: the trainable model is small
//! (hundreds of weights) so runs finish in seconds, while the energy tally
//! uses the accounting architecture's full-size counts. Energy numbers are
//! therefore on the accounting scale and directly comparable to the model
//! stack; training dynamics are on the desk scale.

pub mod task;

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convergence::{Control, LearningParams};
use crate::energy::{uplink_energy, EnergyModel, LinkSpec};
use crate::error::{Error, Result};
use crate::network::{Deployment, RadioParams};
use crate::quantize::{clip_unit, normalize_update, quantize_vector, PrecisionLevel, QuantGrid};
use task::{Sample, SoftmaxModel};

/// Rounds averaged when deciding the stopping gap.
pub const SMOOTH_WINDOW: usize = 5;
/// Loss blow-up factor over the initial loss that aborts a run.
const DIVERGENCE_FACTOR: f64 = 1e3;
/// Stream-id stride separating rounds in the counter-mode generator; the
/// cohort of one round must fit under it.
const STREAM_STRIDE: u64 = 1 << 16;

/// One participant: its shard, sampling probability, noise estimate, link.
#[derive(Debug, Clone)]
pub struct Device {
    pub id: usize,
    pub data: Vec<Sample>,
    pub p_k: f64,
    pub sigma_k: f64,
    pub link: LinkSpec,
}

/// Checks the cross-device invariants: nonempty shards, probabilities on
/// the simplex.
pub fn validate_devices(devices: &[Device]) -> Result<()> {
    if devices.is_empty() {
        return Err(Error::config("no devices"));
    }
    if devices.iter().any(|d| d.data.is_empty()) {
        return Err(Error::config("every device needs at least one sample"));
    }
    let total: f64 = devices.iter().map(|d| d.p_k).sum();
    if devices.iter().any(|d| !(d.p_k > 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!(
            "sampling probabilities must be positive and sum to 1, got {total}"
        )));
    }
    Ok(())
}

/// Assembles devices from shards, links, and sampling probabilities.
pub fn build_devices(
    shards: Vec<Vec<Sample>>,
    links: &[LinkSpec],
    weights: &[f64],
) -> Result<Vec<Device>> {
    if shards.len() != links.len() || shards.len() != weights.len() {
        return Err(Error::config(format!(
            "{} shards, {} links, {} weights must all agree",
            shards.len(),
            links.len(),
            weights.len()
        )));
    }
    let devices: Vec<Device> = shards
        .into_iter()
        .zip(links)
        .zip(weights)
        .enumerate()
        .map(|(id, ((data, link), &p_k))| Device {
            id,
            data,
            p_k,
            sigma_k: 0.0,
            link: link.clone(),
        })
        .collect();
    validate_devices(&devices)?;
    Ok(devices)
}

/// Mutable global training state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlobalState {
    pub weights: Vec<f64>,
    pub round: usize,
    pub cumulative_energy: f64,
    /// Global loss per round; index 0 is the initial model.
    pub loss_history: Vec<f64>,
}

/// Reference optimum the gap is measured against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimOracle {
    pub f_star: f64,
    pub w_star: Vec<f64>,
}

/// Step-size schedule `eta_t = min(scale / (t + offset), 1 / cap)`, indexed
/// by the global local-step count.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepSchedule {
    pub scale: f64,
    pub offset: f64,
    pub cap: f64,
}

impl StepSchedule {
    pub fn from_params(p: &LearningParams) -> Self {
        StepSchedule {
            scale: p.step_scale,
            offset: p.step_offset,
            cap: p.curvature_cap,
        }
    }

    pub fn eta(&self, step: usize) -> f64 {
        (self.scale / (step as f64 + self.offset)).min(1.0 / self.cap)
    }
}

/// Run controls orthogonal to the operating point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimOptions {
    pub max_rounds: usize,
    pub target_gap: f64,
    pub batch: usize,
    /// Cohort sampling with replacement (the analyzed scheme); `false`
    /// draws distinct devices.
    pub with_replacement: bool,
    pub seed: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            max_rounds: 500,
            target_gap: 0.1,
            batch: 32,
            with_replacement: true,
            seed: 0,
        }
    }
}

/// One aggregated round of the trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub loss: f64,
    pub gap: f64,
    pub round_energy_j: f64,
    pub cumulative_energy_j: f64,
    pub selected: Vec<usize>,
}

/// Full run result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimTrace {
    pub records: Vec<RoundRecord>,
    /// First round whose smoothed gap reached the target, if any.
    pub rounds_to_target: Option<usize>,
    pub total_energy_j: f64,
    pub diverged: bool,
    pub final_state: GlobalState,
}

/// Flat per-round record for the trace CSV; selections are joined with
/// `;` into one column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: usize,
    pub loss: f64,
    pub gap: f64,
    pub round_energy_j: f64,
    pub cumulative_energy_j: f64,
    pub selected_ids: String,
}

impl SimTrace {
    pub fn rows(&self) -> Vec<TraceRow> {
        self.records
            .iter()
            .map(|r| TraceRow {
                round: r.round,
                loss: r.loss,
                gap: r.gap,
                round_energy_j: r.round_energy_j,
                cumulative_energy_j: r.cumulative_energy_j,
                selected_ids: r
                    .selected
                    .iter()
                    .map(|id| id.to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
            })
            .collect()
    }
}

/// Uniformly deploys `n` devices in a square cell with the base station at
/// the center and returns their link budgets.
pub fn deploy_network(
    n: usize,
    area_side_m: f64,
    radio: &RadioParams,
    seed: u64,
) -> Result<Vec<LinkSpec>> {
    let deployment = Deployment::uniform(n, area_side_m, seed)?;
    Ok(deployment.link_specs(radio))
}

/// A counter-mode generator on its own stream, so parallel per-draw work
/// is reproducible regardless of scheduling. Stream 0 of each round is the
/// cohort draw; streams 1.. belong to the sampled devices in draw order.
fn stream_rng(seed: u64, round: usize, lane: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream((round as u64) * STREAM_STRIDE + lane);
    rng
}

fn sample_cohort(
    probs: &[f64],
    draws: usize,
    with_replacement: bool,
    seed: u64,
    round: usize,
) -> Result<Vec<usize>> {
    let mut rng = stream_rng(seed, round, 0);
    if with_replacement {
        let dist = WeightedIndex::new(probs)
            .map_err(|e| Error::domain(format!("cohort weights: {e}")))?;
        return Ok((0..draws).map(|_| dist.sample(&mut rng)).collect());
    }
    if draws > probs.len() {
        return Err(Error::domain(format!(
            "cannot draw {draws} distinct devices from {}",
            probs.len()
        )));
    }
    let mut pool = probs.to_vec();
    let mut out = Vec::with_capacity(draws);
    for _ in 0..draws {
        let dist = WeightedIndex::new(&pool)
            .map_err(|e| Error::domain(format!("cohort weights: {e}")))?;
        let i = dist.sample(&mut rng);
        out.push(i);
        pool[i] = 0.0;
    }
    Ok(out)
}

/// The uplink pipeline for one update: split off the norm, stochastically
/// round the unit direction, rescale at the receiver. The norm itself is
/// sent at full precision alongside.
pub fn transmit_update(
    update: &[f64],
    grid: &QuantGrid<f64>,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let (dir, norm) = normalize_update(update);
    if norm == 0.0 {
        return Ok(dir);
    }
    let q = quantize_vector(&dir, grid, rng)?;
    Ok(q.into_iter().map(|v| v * norm).collect())
}

/// Global objective: sampling-probability-weighted mean of per-device
/// losses. Device order fixes the summation order.
pub fn global_loss(model: &SoftmaxModel, devices: &[Device], w: &[f64]) -> f64 {
    let parts: Vec<f64> = devices
        .par_iter()
        .map(|d| d.p_k * model.loss(w, &d.data))
        .collect();
    parts.into_iter().sum()
}

fn quant_grids(ctrl: &Control) -> Result<(QuantGrid<f64>, QuantGrid<f64>, usize, usize)> {
    let i_steps = ctrl.local_steps.round();
    let k_draws = ctrl.cohort.round();
    if i_steps < 1.0 || k_draws < 1.0 {
        return Err(Error::domain(format!(
            "need at least one local step and one device per round, got ({i_steps}, {k_draws})"
        )));
    }
    if k_draws as u64 >= STREAM_STRIDE - 1 {
        return Err(Error::domain("cohort exceeds the per-round stream budget"));
    }
    let m_grid = QuantGrid::new(PrecisionLevel::new(ctrl.tx_bits.round() as u32)?)?;
    let n_grid = QuantGrid::new(PrecisionLevel::new(ctrl.train_bits.round() as u32)?)?;
    Ok((m_grid, n_grid, i_steps as usize, k_draws as usize))
}

/// Executes the quantized federated loop at the given operating point.
///
/// Per round: draw the cohort by `p_k`, run `I` local SGD steps on each
/// draw (gradients evaluated at the stochastically rounded forward weights,
/// updates applied at full precision, then clipped), normalize and
/// quantize each update for the uplink, aggregate the rescaled updates by
/// uniform average, and charge the round's transmit plus compute energy.
/// Stops at the smoothed target gap, on round exhaustion, or on loss
/// blow-up (`diverged`).
pub fn run_federated(
    ctrl: &Control,
    devices: &[Device],
    model: &SoftmaxModel,
    energy: &EnergyModel,
    schedule: &StepSchedule,
    oracle: &SimOracle,
    opts: &SimOptions,
) -> Result<SimTrace> {
    validate_devices(devices)?;
    if opts.batch == 0 {
        return Err(Error::config("batch size must be at least 1"));
    }
    let (m_grid, n_grid, i_steps, k_draws) = quant_grids(ctrl)?;
    let probs: Vec<f64> = devices.iter().map(|d| d.p_k).collect();

    let dim = model.dim();
    let mut state = GlobalState {
        weights: vec![0.0; dim],
        round: 0,
        cumulative_energy: 0.0,
        loss_history: Vec::with_capacity(opts.max_rounds + 1),
    };
    let initial = global_loss(model, devices, &state.weights);
    state.loss_history.push(initial);

    let mut records: Vec<RoundRecord> = Vec::new();
    let mut rounds_to_target = None;
    let mut diverged = false;

    for t in 0..opts.max_rounds {
        let selected = sample_cohort(&probs, k_draws, opts.with_replacement, opts.seed, t)?;

        let global = &state.weights;
        let contributions: Vec<(Vec<f64>, f64)> = selected
            .par_iter()
            .enumerate()
            .map(|(j, &k)| -> Result<(Vec<f64>, f64)> {
                let mut rng = stream_rng(opts.seed, t, j as u64 + 1);
                let dev = &devices[k];
                let mut w_loc = global.clone();
                for i in 0..i_steps {
                    let forward = quantize_vector(&w_loc, &n_grid, &mut rng)?;
                    let batch: Vec<usize> = (0..opts.batch)
                        .map(|_| rng.gen_range(0..dev.data.len()))
                        .collect();
                    let g = model.minibatch_grad(&forward, &dev.data, &batch);
                    let eta = schedule.eta(t * i_steps + i);
                    for (wi, gi) in w_loc.iter_mut().zip(&g) {
                        *wi -= eta * gi;
                    }
                    clip_unit(&mut w_loc);
                }
                let update: Vec<f64> = w_loc.iter().zip(global).map(|(a, b)| a - b).collect();
                let tx = transmit_update(&update, &m_grid, &mut rng)?;
                let e = uplink_energy(ctrl.tx_bits.round(), energy.arch.weights, &dev.link)?
                    + i_steps as f64 * energy.local_iteration(ctrl.train_bits.round())?;
                Ok((tx, e))
            })
            .collect::<Result<Vec<_>>>()?;

        // ordered reduction in draw order keeps the aggregate bit-stable
        let scale = 1.0 / k_draws as f64;
        let mut round_energy = 0.0;
        for (tx, e) in &contributions {
            for (wi, di) in state.weights.iter_mut().zip(tx) {
                *wi += scale * di;
            }
            round_energy += e;
        }
        clip_unit(&mut state.weights);

        state.round = t + 1;
        state.cumulative_energy += round_energy;
        let loss = global_loss(model, devices, &state.weights);
        state.loss_history.push(loss);
        records.push(RoundRecord {
            round: t + 1,
            loss,
            gap: loss - oracle.f_star,
            round_energy_j: round_energy,
            cumulative_energy_j: state.cumulative_energy,
            selected,
        });

        if !loss.is_finite() || loss > DIVERGENCE_FACTOR * initial.max(f64::MIN_POSITIVE) {
            diverged = true;
            break;
        }
        if records.len() >= SMOOTH_WINDOW {
            let tail = &records[records.len() - SMOOTH_WINDOW..];
            let smoothed = tail.iter().map(|r| r.gap).sum::<f64>() / SMOOTH_WINDOW as f64;
            if smoothed <= opts.target_gap {
                rounds_to_target = Some(t + 1);
                break;
            }
        }
    }

    Ok(SimTrace {
        records,
        rounds_to_target,
        total_energy_j: state.cumulative_energy,
        diverged,
        final_state: state,
    })
}

/// Probe-run estimates of the constants the closed-form models need.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantEstimates {
    /// Largest stochastic-gradient norm seen on any device, `G`.
    pub grad_norm_bound: f64,
    /// Per-device standard deviation of the probe gradients around their
    /// own mean.
    pub noise_sd: Vec<f64>,
    /// Probability-weighted local loss at the probe-end averaged model,
    /// bounding the heterogeneity term.
    pub divergence: f64,
    /// All probe gradients vanished; the estimates carry no information.
    pub degenerate: bool,
}

/// Runs `probe_iters` plain local SGD steps per device from a common zero
/// initialization and distills `(G, sigma_k, Gamma)` from the observed
/// gradients.
pub fn estimate_constants(
    devices: &[Device],
    model: &SoftmaxModel,
    schedule: &StepSchedule,
    probe_iters: usize,
    batch: usize,
    seed: u64,
) -> Result<ConstantEstimates> {
    validate_devices(devices)?;
    if probe_iters == 0 || batch == 0 {
        return Err(Error::config("probe_iters and batch must be at least 1"));
    }
    let dim = model.dim();

    struct Probe {
        g_max: f64,
        sigma: f64,
        w_end: Vec<f64>,
    }
    let probes: Vec<Probe> = devices
        .par_iter()
        .enumerate()
        .map(|(k, dev)| {
            let mut rng = stream_rng(seed, 0, k as u64 + 1);
            let mut w = vec![0.0; dim];
            let mut grads: Vec<Vec<f64>> = Vec::with_capacity(probe_iters);
            let mut g_max = 0.0f64;
            for i in 0..probe_iters {
                let batch_idx: Vec<usize> = (0..batch)
                    .map(|_| rng.gen_range(0..dev.data.len()))
                    .collect();
                let g = model.minibatch_grad(&w, &dev.data, &batch_idx);
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                g_max = g_max.max(norm);
                let eta = schedule.eta(i);
                for (wi, gi) in w.iter_mut().zip(&g) {
                    *wi -= eta * gi;
                }
                clip_unit(&mut w);
                grads.push(g);
            }
            let mut mean = vec![0.0; dim];
            for g in &grads {
                for (mi, gi) in mean.iter_mut().zip(g) {
                    *mi += gi / probe_iters as f64;
                }
            }
            let var = grads
                .iter()
                .map(|g| {
                    g.iter()
                        .zip(&mean)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .sum::<f64>()
                / probe_iters as f64;
            Probe {
                g_max,
                sigma: var.sqrt(),
                w_end: w,
            }
        })
        .collect();

    let mut w_end = vec![0.0; dim];
    for (dev, probe) in devices.iter().zip(&probes) {
        for (wi, pi) in w_end.iter_mut().zip(&probe.w_end) {
            *wi += dev.p_k * pi;
        }
    }
    let divergence = devices
        .iter()
        .map(|d| d.p_k * model.loss(&w_end, &d.data))
        .sum();

    let grad_norm_bound = probes.iter().map(|p| p.g_max).fold(0.0, f64::max);
    Ok(ConstantEstimates {
        grad_norm_bound,
        noise_sd: probes.iter().map(|p| p.sigma).collect(),
        divergence,
        degenerate: grad_norm_bound < 1e-9,
    })
}

/// Centralized full-precision baseline: projected gradient descent with
/// backtracking on the probability-weighted objective, keeping the best
/// iterate seen. The budget counts full-batch iterations.
pub fn reference_optimum(
    devices: &[Device],
    model: &SoftmaxModel,
    budget: usize,
    seed: u64,
) -> Result<SimOracle> {
    validate_devices(devices)?;
    let dim = model.dim();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1e-3..1e-3)).collect();

    let eval = |w: &[f64]| -> (f64, Vec<f64>) {
        let parts: Vec<(f64, Vec<f64>)> = devices
            .par_iter()
            .map(|d| model.loss_and_grad(w, &d.data))
            .collect();
        let mut grad = vec![0.0; dim];
        let mut loss = 0.0;
        for (dev, (l, g)) in devices.iter().zip(&parts) {
            loss += dev.p_k * l;
            for (acc, v) in grad.iter_mut().zip(g) {
                *acc += dev.p_k * v;
            }
        }
        (loss, grad)
    };

    let (mut f, mut g) = eval(&w);
    let mut best_f = f;
    let mut best_w = w.clone();
    let mut eta = 1.0;
    for _ in 0..budget {
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - eta * gi).collect();
            clip_unit(&mut trial);
            let (f_trial, g_trial) = eval(&trial);
            if f_trial < f {
                w = trial;
                f = f_trial;
                g = g_trial;
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            break;
        }
        if f < best_f {
            best_f = f;
            best_w = w.clone();
        }
        eta = (eta * 2.0).min(1e3);
    }

    Ok(SimOracle {
        f_star: best_f,
        w_star: best_w,
    })
}
