//! Synthetic classification task for the desk-scale trainer.
//!
//! A linear softmax model with an L2 term: the regularizer makes the
//! objective strongly convex, so the closed-form convergence machinery is
//! actually testable against training runs. Feature vectors are scaled so
//! typical stochastic gradient norms land well inside the unit box the
//! quantizer covers.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Dirichlet, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One labelled observation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: usize,
}

/// Generation parameters for the synthetic mixture task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSpec {
    pub features: usize,
    pub classes: usize,
    pub samples: usize,
    /// Per-component spread of the class centroids.
    pub centroid_spread: f64,
    /// Per-component noise around the centroid; overlap between classes
    /// (and thus the attainable loss) grows with this.
    pub feature_noise: f64,
    /// L2 coefficient; doubles as the strong-convexity constant.
    pub l2: f64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec {
            features: 50,
            classes: 10,
            samples: 2000,
            centroid_spread: 1.0,
            feature_noise: 1.0,
            l2: 0.05,
        }
    }
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.features == 0 || self.classes < 2 || self.samples < self.classes {
            return Err(Error::config(format!(
                "degenerate task shape: {} features, {} classes, {} samples",
                self.features, self.classes, self.samples
            )));
        }
        if !(self.centroid_spread > 0.0) || !(self.feature_noise >= 0.0) || !(self.l2 > 0.0) {
            return Err(Error::config(
                "centroid_spread and l2 must be positive, feature_noise non-negative",
            ));
        }
        Ok(())
    }
}

/// Draws the task: centroids and samples, balanced labels, components
/// scaled by `1/sqrt(features)` so `||x||` is O(1).
pub fn generate(spec: &TaskSpec, seed: u64) -> Result<(SoftmaxModel, Vec<Sample>)> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let scale = 1.0 / (spec.features as f64).sqrt();

    let centroids: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            (0..spec.features)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * spec.centroid_spread * scale
                })
                .collect()
        })
        .collect();

    let mut samples = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let y = i % spec.classes;
        let x = centroids[y]
            .iter()
            .map(|&c| {
                let z: f64 = StandardNormal.sample(&mut rng);
                c + z * spec.feature_noise * scale
            })
            .collect();
        samples.push(Sample { x, y });
    }
    samples.shuffle(&mut rng);

    let model = SoftmaxModel {
        features: spec.features,
        classes: spec.classes,
        l2: spec.l2,
    };
    Ok((model, samples))
}

/// Linear softmax classifier with an L2 term. Weights are stored row-major
/// by class: `w[c * features + j]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SoftmaxModel {
    pub features: usize,
    pub classes: usize,
    pub l2: f64,
}

/// Chunk width for deterministic data-parallel reductions: chunk results
/// are combined in chunk order, so totals are bit-identical regardless of
/// the thread schedule.
const CHUNK: usize = 256;

impl SoftmaxModel {
    pub fn dim(&self) -> usize {
        self.features * self.classes
    }

    /// Cross-entropy of one sample plus, optionally, its gradient
    /// contribution accumulated into `grad` (no L2 in either).
    fn sample_loss(&self, w: &[f64], s: &Sample, mut grad: Option<&mut [f64]>) -> f64 {
        let f = self.features;
        let mut scores = vec![0.0; self.classes];
        for (c, score) in scores.iter_mut().enumerate() {
            let row = &w[c * f..(c + 1) * f];
            *score = row.iter().zip(&s.x).map(|(a, b)| a * b).sum();
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for score in scores.iter_mut() {
            *score = (*score - max).exp();
            total += *score;
        }
        if let Some(g) = grad.as_deref_mut() {
            for c in 0..self.classes {
                let p = scores[c] / total - if c == s.y { 1.0 } else { 0.0 };
                for (gj, xj) in g[c * f..(c + 1) * f].iter_mut().zip(&s.x) {
                    *gj += p * xj;
                }
            }
        }
        // -ln softmax(y) with scores already exponentiated and max-shifted
        total.ln() - scores[s.y].ln()
    }

    /// Mean cross-entropy over `data` plus the L2 term.
    pub fn loss(&self, w: &[f64], data: &[Sample]) -> f64 {
        assert!(!data.is_empty(), "loss over an empty dataset");
        let sum: f64 = data
            .par_chunks(CHUNK)
            .map(|chunk| {
                chunk
                    .iter()
                    .map(|s| self.sample_loss(w, s, None))
                    .sum::<f64>()
            })
            .collect::<Vec<f64>>()
            .into_iter()
            .sum();
        sum / data.len() as f64 + 0.5 * self.l2 * w.iter().map(|v| v * v).sum::<f64>()
    }

    /// Full-batch loss and gradient, both including the L2 term.
    pub fn loss_and_grad(&self, w: &[f64], data: &[Sample]) -> (f64, Vec<f64>) {
        assert!(!data.is_empty(), "gradient over an empty dataset");
        let parts: Vec<(f64, Vec<f64>)> = data
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut g = vec![0.0; self.dim()];
                let mut l = 0.0;
                for s in chunk {
                    l += self.sample_loss(w, s, Some(&mut g));
                }
                (l, g)
            })
            .collect();
        let inv = 1.0 / data.len() as f64;
        let mut grad = vec![0.0; self.dim()];
        let mut loss = 0.0;
        for (l, g) in parts {
            loss += l;
            for (acc, v) in grad.iter_mut().zip(&g) {
                *acc += v;
            }
        }
        for (gi, wi) in grad.iter_mut().zip(w) {
            *gi = *gi * inv + self.l2 * wi;
        }
        (
            loss * inv + 0.5 * self.l2 * w.iter().map(|v| v * v).sum::<f64>(),
            grad,
        )
    }

    /// Minibatch stochastic gradient over the given sample indices,
    /// including the L2 term.
    pub fn minibatch_grad(&self, w: &[f64], data: &[Sample], batch: &[usize]) -> Vec<f64> {
        assert!(!batch.is_empty(), "empty minibatch");
        let mut g = vec![0.0; self.dim()];
        for &i in batch {
            self.sample_loss(w, &data[i], Some(&mut g));
        }
        let inv = 1.0 / batch.len() as f64;
        for (gi, wi) in g.iter_mut().zip(w) {
            *gi = *gi * inv + self.l2 * wi;
        }
        g
    }
}

/// Splits `samples` into `n_devices` shards with label mixtures drawn from
/// a symmetric Dirichlet. Shard sizes are fixed (as equal as division
/// allows, so every device gets at least one sample); each device fills its
/// quota by drawing classes from its own mixture, restricted to classes
/// with samples left. The shards are disjoint and exhaust the input.
pub fn partition_dirichlet(
    samples: &[Sample],
    n_devices: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<Vec<Sample>>> {
    if n_devices == 0 || n_devices > samples.len() {
        return Err(Error::config(format!(
            "cannot split {} samples across {n_devices} devices",
            samples.len()
        )));
    }
    if !(alpha > 0.0) {
        return Err(Error::config("dirichlet alpha must be positive"));
    }
    let classes = samples.iter().map(|s| s.y).max().unwrap_or(0) + 1;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    // shuffled per-class index pools, popped from the back
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, s) in samples.iter().enumerate() {
        pools[s.y].push(i);
    }
    for pool in pools.iter_mut() {
        pool.shuffle(&mut rng);
    }

    let base = samples.len() / n_devices;
    let extra = samples.len() % n_devices;
    let dirichlet = if classes >= 2 {
        Some(Dirichlet::new(&vec![alpha; classes]).map_err(|e| {
            Error::config(format!("dirichlet parameter rejected: {e}"))
        })?)
    } else {
        None
    };

    let mut shards = Vec::with_capacity(n_devices);
    for dev in 0..n_devices {
        let quota = base + usize::from(dev < extra);
        let mixture: Vec<f64> = match &dirichlet {
            Some(d) => d.sample(&mut rng),
            None => vec![1.0],
        };
        let mut shard = Vec::with_capacity(quota);
        for _ in 0..quota {
            // categorical draw over classes that still have samples
            let live: f64 = pools
                .iter()
                .zip(&mixture)
                .filter(|(p, _)| !p.is_empty())
                .map(|(_, m)| m)
                .sum();
            let mut u: f64 = rng.gen::<f64>() * live;
            let mut chosen = None;
            for (c, pool) in pools.iter().enumerate() {
                if pool.is_empty() {
                    continue;
                }
                u -= mixture[c];
                chosen = Some(c);
                if u <= 0.0 {
                    break;
                }
            }
            let c = chosen.expect("quotas sum to the sample count");
            let idx = pools[c].pop().expect("chosen pool is nonempty");
            shard.push(samples[idx].clone());
        }
        shards.push(shard);
    }
    debug_assert!(pools.iter().all(|p| p.is_empty()));
    Ok(shards)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_task() -> (SoftmaxModel, Vec<Sample>) {
        let spec = TaskSpec {
            features: 8,
            classes: 4,
            samples: 200,
            ..TaskSpec::default()
        };
        generate(&spec, 42).unwrap()
    }

    #[test]
    fn generation_shape_and_determinism() {
        let (model, data) = small_task();
        assert_eq!(model.dim(), 32);
        assert_eq!(data.len(), 200);
        assert!(data.iter().all(|s| s.x.len() == 8 && s.y < 4));
        // balanced labels up to the shuffle
        for c in 0..4 {
            assert_eq!(data.iter().filter(|s| s.y == c).count(), 50);
        }
        let (_, again) = small_task();
        assert_eq!(data[0].x, again[0].x);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (model, data) = small_task();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let w: Vec<f64> = (0..model.dim()).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let subset = &data[..40];
        let (loss, grad) = model.loss_and_grad(&w, subset);
        assert!((loss - model.loss(&w, subset)).abs() < 1e-12);

        let h = 1e-6;
        for i in [0, 5, 17, model.dim() - 1] {
            let mut wp = w.clone();
            wp[i] += h;
            let mut wm = w.clone();
            wm[i] -= h;
            let fd = (model.loss(&wp, subset) - model.loss(&wm, subset)) / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() <= 1e-5 * (1.0 + fd.abs()),
                "component {i}: fd {fd} vs grad {}",
                grad[i]
            );
        }
    }

    #[test]
    fn minibatch_of_everything_is_full_batch() {
        let (model, data) = small_task();
        let w = vec![0.01; model.dim()];
        let subset = &data[..CHUNK.min(data.len())];
        let all: Vec<usize> = (0..subset.len()).collect();
        let (_, full) = model.loss_and_grad(&w, subset);
        let mini = model.minibatch_grad(&w, subset, &all);
        for (a, b) in full.iter().zip(&mini) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn partition_is_disjoint_and_exhaustive() {
        let (_, data) = small_task();
        let shards = partition_dirichlet(&data, 7, 0.5, 3).unwrap();
        assert_eq!(shards.len(), 7);
        assert!(shards.iter().all(|s| !s.is_empty()));
        assert_eq!(shards.iter().map(Vec::len).sum::<usize>(), data.len());

        // multiset of (rounded feature hash, label) matches the input
        let key = |s: &Sample| {
            (
                s.y,
                s.x.iter()
                    .map(|v| (v * 1e9).round() as i64)
                    .fold(0i64, |acc, b| acc.wrapping_mul(31).wrapping_add(b)),
            )
        };
        let mut want: Vec<_> = data.iter().map(key).collect();
        let mut got: Vec<_> = shards.iter().flatten().map(key).collect();
        want.sort_unstable();
        got.sort_unstable();
        assert_eq!(want, got);
    }

    #[test]
    fn low_alpha_skews_high_alpha_balances() {
        let spec = TaskSpec {
            samples: 4000,
            ..TaskSpec::default()
        };
        let (_, data) = generate(&spec, 9).unwrap();

        let skewed = partition_dirichlet(&data, 40, 0.1, 17).unwrap();
        let mut dominant: Vec<f64> = skewed
            .iter()
            .map(|shard| {
                let mut counts = vec![0usize; 10];
                for s in shard {
                    counts[s.y] += 1;
                }
                *counts.iter().max().unwrap() as f64 / shard.len() as f64
            })
            .collect();
        dominant.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(
            dominant[dominant.len() / 2] > 0.5,
            "median dominant share {}",
            dominant[dominant.len() / 2]
        );

        // near-uniform mixtures: chi-squared against uniform with 9 dof,
        // 1% critical value 21.67; nearly all devices should clear it
        let uniform = partition_dirichlet(&data, 40, 1e6, 17).unwrap();
        let ok = uniform
            .iter()
            .filter(|shard| {
                let expected = shard.len() as f64 / 10.0;
                let chi2: f64 = {
                    let mut counts = vec![0usize; 10];
                    for s in *shard {
                        counts[s.y] += 1;
                    }
                    counts
                        .iter()
                        .map(|&c| {
                            let d = c as f64 - expected;
                            d * d / expected
                        })
                        .sum()
                };
                chi2 <= 21.67
            })
            .count();
        assert!(ok >= 36, "{ok}/40 devices uniform");
    }

    #[test]
    fn partition_rejects_bad_shapes() {
        let (_, data) = small_task();
        assert!(matches!(
            partition_dirichlet(&data, 600, 0.1, 1),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            partition_dirichlet(&data, 5, 0.0, 1),
            Err(Error::Config(_))
        ));
    }
}
