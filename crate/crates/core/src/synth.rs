//! Reproducible long-tail task-sequence generation.
//!
//! Every task is a linear-regression problem: a frozen random MLP maps
//! Gaussian latents to inputs, and targets are `y = w_tau · x + noise`.
//! Task sizes follow a clamped Pareto distribution; the `same` /
//! `perturb` / `shift` regimes control how the target weights relate
//! across tasks.

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Pareto};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use crate::error::{invalid_argument, Error, Result};
use crate::linear::Example;
use crate::mlp::MlpGenerator;
use crate::rng::{sample_gaussian_vector, streams, RngStream};

/// How target weights relate across the sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Every task shares the first task's weights.
    Same,
    /// Each task perturbs `perturb_dims` random dimensions of the first
    /// task's weights.
    Perturb,
    /// Each task perturbs `perturb_dims` random dimensions of its
    /// predecessor's weights.
    Shift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskOrdering {
    /// Largest tasks first; ties keep generation order.
    BySizeDesc,
    /// Sampling without replacement with probability proportional to the
    /// remaining tasks' sizes.
    WeightedNoReplacement,
}

/// Clamped-Pareto task-size distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeDistribution {
    pub pareto_shape: f64,
    pub s_min: u64,
    pub s_max: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    /// Input (and model) dimension.
    #[serde(rename = "d")]
    pub input_dim: usize,
    /// Latent dimension fed to the per-task generator MLP.
    #[serde(rename = "l", default = "default_latent_dim")]
    pub latent_dim: usize,
    pub num_tasks: usize,
    pub regime: Regime,
    /// Number of weight dimensions resampled per task in the perturb and
    /// shift regimes.
    #[serde(default = "default_perturb_dims")]
    pub perturb_dims: usize,
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
    #[serde(default = "default_size_dist")]
    pub size_dist: SizeDistribution,
    #[serde(default = "default_ordering")]
    pub ordering: TaskOrdering,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    pub seed: u64,
    /// Hidden widths of the generator MLP; `None` means one hidden layer
    /// of width `2 * latent_dim`.
    #[serde(default)]
    pub hidden_dims: Option<Vec<usize>>,
}

fn default_latent_dim() -> usize {
    16
}
fn default_perturb_dims() -> usize {
    8
}
fn default_noise_std() -> f64 {
    0.1
}
fn default_size_dist() -> SizeDistribution {
    SizeDistribution {
        pareto_shape: 1.2,
        s_min: 64,
        s_max: 10_000,
    }
}
fn default_ordering() -> TaskOrdering {
    TaskOrdering::BySizeDesc
}
fn default_test_fraction() -> f64 {
    0.1
}

impl Default for SynthConfig {
    /// The long-tail benchmark defaults: 1000 tasks in dimension 128.
    fn default() -> Self {
        Self {
            input_dim: 128,
            latent_dim: 16,
            num_tasks: 1000,
            regime: Regime::Same,
            perturb_dims: 8,
            noise_std: 0.1,
            size_dist: default_size_dist(),
            ordering: TaskOrdering::BySizeDesc,
            test_fraction: 0.1,
            seed: 0,
            hidden_dims: None,
        }
    }
}

impl SynthConfig {
    /// A small configuration for tests and smoke runs.
    pub fn default_small() -> Self {
        Self {
            input_dim: 6,
            latent_dim: 4,
            num_tasks: 8,
            regime: Regime::Same,
            perturb_dims: 2,
            noise_std: 0.1,
            size_dist: SizeDistribution {
                pareto_shape: 1.5,
                s_min: 2,
                s_max: 40,
            },
            ordering: TaskOrdering::BySizeDesc,
            test_fraction: 0.2,
            seed: 1,
            hidden_dims: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.latent_dim == 0 || self.num_tasks == 0 {
            return Err(invalid_argument(
                "input_dim, latent_dim and num_tasks must be positive",
            ));
        }
        if self.perturb_dims > self.input_dim {
            return Err(invalid_argument(format!(
                "perturb_dims {} exceeds input_dim {}",
                self.perturb_dims, self.input_dim
            )));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(invalid_argument("noise_std must be non-negative"));
        }
        if !(self.size_dist.pareto_shape.is_finite() && self.size_dist.pareto_shape > 0.0) {
            return Err(invalid_argument("pareto_shape must be positive"));
        }
        if self.size_dist.s_min == 0 || self.size_dist.s_min > self.size_dist.s_max {
            return Err(invalid_argument(
                "size distribution needs 1 <= s_min <= s_max",
            ));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(invalid_argument("test_fraction must lie in (0, 1)"));
        }
        if let Some(hidden) = &self.hidden_dims {
            if hidden.is_empty() || hidden.iter().any(|&h| h == 0) {
                return Err(invalid_argument("hidden_dims must be positive"));
            }
        }
        Ok(())
    }

    fn hidden_dims(&self) -> Vec<usize> {
        self.hidden_dims
            .clone()
            .unwrap_or_else(|| vec![2 * self.latent_dim])
    }
}

/// One task of the sequence. `task_id` is the generation index, stable
/// under reordering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Task {
    pub task_id: usize,
    /// Ground-truth weights the task's targets were generated from.
    #[serde(rename = "w_tau")]
    pub target_weights: Vec<f64>,
    pub generator: MlpGenerator,
    pub train: Vec<Example>,
    pub test: Vec<Example>,
    pub size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSequence {
    pub config: SynthConfig,
    pub tasks: Vec<Task>,
}

impl TaskSequence {
    /// Serialize the full sequence (config, weights, examples) as
    /// self-describing JSON; floats round-trip exactly.
    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let seq: TaskSequence =
            serde_json::from_reader(reader).map_err(|e| Error::Config(e.to_string()))?;
        seq.config.validate()?;
        Ok(seq)
    }
}

/// Draw all task sizes: `clamp(round(Pareto(shape, s_min)), s_min, s_max)`.
pub fn sample_task_sizes(cfg: &SynthConfig, rng: &mut RngStream) -> Vec<u64> {
    let dist = Pareto::new(cfg.size_dist.s_min as f64, cfg.size_dist.pareto_shape)
        .expect("validated size distribution");
    (0..cfg.num_tasks)
        .map(|_| {
            let raw: f64 = dist.sample(rng);
            (raw.round() as u64).clamp(cfg.size_dist.s_min, cfg.size_dist.s_max)
        })
        .collect()
}

/// Generate the per-task target weights under the configured regime.
pub fn make_weight_sequence(cfg: &SynthConfig, rng: &mut RngStream) -> Vec<Vec<f64>> {
    let d = cfg.input_dim;
    let first = sample_gaussian_vector(rng, d, 0.0, 1.0).expect("validated dims");
    let mut weights = Vec::with_capacity(cfg.num_tasks);
    weights.push(first);
    for tau in 1..cfg.num_tasks {
        let base = match cfg.regime {
            Regime::Same => weights[0].clone(),
            Regime::Perturb => weights[0].clone(),
            Regime::Shift => weights[tau - 1].clone(),
        };
        let mut w = base;
        if cfg.regime != Regime::Same && cfg.perturb_dims > 0 {
            let dims = index::sample(rng, d, cfg.perturb_dims);
            for dim in dims {
                w[dim] = sample_gaussian_vector(rng, 1, 0.0, 1.0).expect("validated dims")[0];
            }
        }
        weights.push(w);
    }
    weights
}

fn split_examples(
    mut examples: Vec<Example>,
    test_fraction: f64,
    rng: &mut RngStream,
) -> (Vec<Example>, Vec<Example>) {
    let size = examples.len();
    // Tasks too small to split are pure test tasks (zero-shot).
    if size < 2 {
        return (Vec::new(), examples);
    }
    let test_count = ((test_fraction * size as f64).round() as usize).max(1);
    let mut idx: Vec<usize> = (0..size).collect();
    idx.shuffle(rng);
    let mut take_test = vec![false; size];
    for &i in &idx[..test_count.min(size)] {
        take_test[i] = true;
    }
    let mut train = Vec::with_capacity(size - test_count);
    let mut test = Vec::with_capacity(test_count);
    for (i, ex) in examples.drain(..).enumerate() {
        if take_test[i] {
            test.push(ex);
        } else {
            train.push(ex);
        }
    }
    (train, test)
}

/// Build the full ordered task sequence for a configuration.
pub fn generate_sequence(cfg: &SynthConfig) -> Result<TaskSequence> {
    cfg.validate()?;
    let mut size_rng = RngStream::new(cfg.seed, streams::SIZES);
    let sizes = sample_task_sizes(cfg, &mut size_rng);
    let mut weight_rng = RngStream::new(cfg.seed, streams::WEIGHTS);
    let weights = make_weight_sequence(cfg, &mut weight_rng);
    let hidden = cfg.hidden_dims();

    let mut tasks = Vec::with_capacity(cfg.num_tasks);
    for (task_id, (&size, w)) in sizes.iter().zip(&weights).enumerate() {
        let mut task_rng = RngStream::new(cfg.seed, streams::TASK_BASE + task_id as u64);
        let generator =
            MlpGenerator::random(&mut task_rng, cfg.latent_dim, &hidden, cfg.input_dim)?;
        let mut examples = Vec::with_capacity(size as usize);
        for _ in 0..size {
            let z = sample_gaussian_vector(&mut task_rng, cfg.latent_dim, 0.0, 1.0)?;
            let x = generator.forward(&z)?;
            let noise = sample_gaussian_vector(&mut task_rng, 1, 0.0, cfg.noise_std)?[0];
            let y = w.iter().zip(&x).map(|(wi, xi)| wi * xi).sum::<f64>() + noise;
            examples.push(Example::new(x, y));
        }
        let (train, test) = split_examples(examples, cfg.test_fraction, &mut task_rng);
        tasks.push(Task {
            task_id,
            target_weights: w.clone(),
            generator,
            train,
            test,
            size: size as usize,
        });
    }

    match cfg.ordering {
        TaskOrdering::BySizeDesc => {
            tasks.sort_by(|a, b| b.size.cmp(&a.size).then(a.task_id.cmp(&b.task_id)));
        }
        TaskOrdering::WeightedNoReplacement => {
            let mut order_rng = RngStream::new(cfg.seed, streams::ORDERING);
            let mut remaining = tasks;
            let mut ordered = Vec::with_capacity(remaining.len());
            while !remaining.is_empty() {
                let total: f64 = remaining.iter().map(|t| t.size as f64).sum();
                let mut pick = order_rng.random_range(0.0..total);
                let mut chosen = remaining.len() - 1;
                for (i, task) in remaining.iter().enumerate() {
                    pick -= task.size as f64;
                    if pick < 0.0 {
                        chosen = i;
                        break;
                    }
                }
                ordered.push(remaining.swap_remove(chosen));
            }
            tasks = ordered;
        }
    }

    Ok(TaskSequence {
        config: cfg.clone(),
        tasks,
    })
}
