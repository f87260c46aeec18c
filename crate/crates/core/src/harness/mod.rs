//! Config-driven experiments: single runs, the moment-policy ablation
//! grid, and the task-count sweep.
//!
//! Seeds run in parallel workers; everything within a seed is sequential
//! because continual learning is ordered. All artifacts embed the
//! resolved config and seed list and contain nothing host- or
//! time-dependent, so identical configs reproduce identical bytes.

pub mod artifacts;
pub mod stats;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use crate::error::{invalid_argument, invalid_state, Error, Result};
use crate::linear::LinearModel;
use crate::methods::{mtl_train, train_task, MethodConfig, MethodKind, MethodState};
use crate::metrics::ScoreMatrix;
use crate::optim::{ContinualOptConfig, ContinualOptimizer, MomentMode};
use crate::rng::{streams, RngStream};
use crate::synth::{generate_sequence, Regime, SynthConfig};

pub use artifacts::{
    config_fingerprint, render_scores_csv, write_grid_artifacts, write_lr_search_artifacts,
    write_run_artifacts, write_sweep_artifacts,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    pub optimizer: ContinualOptConfig,
    pub method: MethodConfig,
    #[serde(default = "default_epochs")]
    pub epochs_per_task: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Evaluate after every `eval_interval` tasks (the final task is
    /// always evaluated).
    #[serde(default = "default_eval_interval")]
    pub eval_interval: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Reuse `synth.seed` for every per-seed sequence instead of
    /// re-sampling a fresh sequence per seed.
    #[serde(default)]
    pub fixed_sequence: bool,
    /// Give the learned model a bias parameter.
    #[serde(default)]
    pub model_bias: bool,
    /// Epoch count for the pooled multi-task reference; defaults to
    /// `epochs_per_task`. The reference is only meaningful near the
    /// pooled optimum, which can need more passes than the per-task runs.
    #[serde(default)]
    pub mtl_epochs: Option<usize>,
    /// Linearly decay the step scale over the pooled reference run so it
    /// settles at the pooled optimum instead of oscillating around it.
    #[serde(default = "default_true")]
    pub mtl_lr_decay: bool,
}

fn default_true() -> bool {
    true
}

fn default_epochs() -> usize {
    1
}
fn default_batch_size() -> usize {
    16
}
fn default_eval_interval() -> usize {
    100
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("clab-out")
}

impl ExperimentConfig {
    pub fn from_json_str(json: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(json).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.optimizer.validate()?;
        self.method.validate()?;
        if self.epochs_per_task == 0 {
            return Err(invalid_argument("epochs_per_task must be positive"));
        }
        if self.batch_size == 0 {
            return Err(invalid_argument("batch_size must be positive"));
        }
        if self.eval_interval == 0 {
            return Err(invalid_argument("eval_interval must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(invalid_argument("seeds must be non-empty"));
        }
        Ok(())
    }
}

/// One seed's metrics. `lp`/`bwt`/`fgt` are `None` where undefined
/// (pooled multi-task runs, single-task sequences).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub rp: f64,
    pub lp: Option<f64>,
    pub bwt: Option<f64>,
    pub fgt: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: Option<SeedMetrics>,
    /// Retained performance over seen tasks at every recorded checkpoint.
    pub checkpoint_rps: Vec<(usize, f64)>,
    pub error: Option<String>,
}

/// Means or standard errors across successful seeds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricAggregate {
    pub rp: Option<f64>,
    pub lp: Option<f64>,
    pub bwt: Option<f64>,
    pub fgt: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointAggregate {
    pub checkpoint: usize,
    pub rp_mean: f64,
    pub rp_se: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub config_fingerprint: String,
    pub config: ExperimentConfig,
    pub per_seed: Vec<SeedRun>,
    pub mean: MetricAggregate,
    pub std_error: MetricAggregate,
    pub trajectory: Vec<CheckpointAggregate>,
    /// Not serialized: artifacts must not depend on the host's speed.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl RunResult {
    pub fn ok_seeds(&self) -> usize {
        self.per_seed.iter().filter(|s| s.metrics.is_some()).count()
    }

    /// Per-seed RP values in seed order (successful seeds only).
    pub fn seed_rps(&self) -> Vec<f64> {
        self.per_seed
            .iter()
            .filter_map(|s| s.metrics.map(|m| m.rp))
            .collect()
    }

    pub fn seed_lps(&self) -> Vec<f64> {
        self.per_seed
            .iter()
            .filter_map(|s| s.metrics.and_then(|m| m.lp))
            .collect()
    }
}

#[derive(Debug, Clone)]
enum EvalSchedule {
    Interval(usize),
    Explicit(Vec<usize>),
}

impl EvalSchedule {
    fn points(&self, num_tasks: usize) -> Result<BTreeSet<usize>> {
        let mut points = BTreeSet::new();
        match self {
            EvalSchedule::Interval(k) => {
                let mut cp = *k;
                while cp <= num_tasks {
                    points.insert(cp);
                    cp += k;
                }
            }
            EvalSchedule::Explicit(list) => {
                for &cp in list {
                    if cp == 0 || cp > num_tasks {
                        return Err(invalid_argument(format!(
                            "checkpoint {cp} outside 1..={num_tasks}"
                        )));
                    }
                    points.insert(cp);
                }
            }
        }
        points.insert(num_tasks);
        Ok(points)
    }
}

struct SeedOutcome {
    run: SeedRun,
    scores_csv: Option<String>,
}

/// The sequence seed a run uses: re-sampled per seed unless the config
/// pins one shared sequence.
fn sequence_seed(cfg: &ExperimentConfig, seed: u64) -> u64 {
    if cfg.fixed_sequence {
        cfg.synth.seed
    } else {
        seed
    }
}

fn run_seed(
    cfg: &ExperimentConfig,
    seed: u64,
    schedule: &EvalSchedule,
    want_scores: bool,
) -> Result<SeedOutcome> {
    let mut synth_cfg = cfg.synth.clone();
    synth_cfg.seed = sequence_seed(cfg, seed);
    let sequence = generate_sequence(&synth_cfg)?;
    run_seed_on_sequence(cfg, seed, &sequence, schedule, want_scores)
}

/// Train and evaluate one seed on an already generated sequence. The
/// outcome is identical to generating inside: training randomness comes
/// from a fresh per-seed stream, not from the sequence object.
fn run_seed_on_sequence(
    cfg: &ExperimentConfig,
    seed: u64,
    sequence: &crate::synth::TaskSequence,
    schedule: &EvalSchedule,
    want_scores: bool,
) -> Result<SeedOutcome> {
    let num_tasks = sequence.tasks.len();
    let points = schedule.points(num_tasks)?;

    let mut model = if cfg.model_bias {
        LinearModel::zeros_with_bias(cfg.synth.input_dim)
    } else {
        LinearModel::zeros(cfg.synth.input_dim)
    };
    let test_sizes: Vec<usize> = sequence.tasks.iter().map(|t| t.test.len()).collect();
    let mut matrix = ScoreMatrix::new(num_tasks, test_sizes, false)?;
    let mut rng = RngStream::new(seed, streams::TRAIN);

    let metrics;
    if cfg.method.method == MethodKind::Mtl {
        mtl_train(
            &mut model,
            &cfg.optimizer,
            &sequence.tasks,
            &mut rng,
            cfg.mtl_epochs.unwrap_or(cfg.epochs_per_task),
            cfg.batch_size,
            cfg.mtl_lr_decay,
        )?;
        matrix.record_eval(num_tasks, &model, &sequence.tasks)?;
        metrics = SeedMetrics {
            rp: matrix.rp()?,
            lp: None,
            bwt: None,
            fgt: None,
        };
    } else {
        let mut opt = ContinualOptimizer::new(cfg.optimizer.clone(), model.num_params())?;
        let mut method_state = MethodState::new(&cfg.method, model.num_params())?;
        for (idx, task) in sequence.tasks.iter().enumerate() {
            train_task(
                &cfg.method,
                &mut model,
                &mut opt,
                task,
                &mut method_state,
                &mut rng,
                cfg.epochs_per_task,
                cfg.batch_size,
            )?;
            let checkpoint = idx + 1;
            if points.contains(&checkpoint) {
                matrix.record_eval(checkpoint, &model, &sequence.tasks)?;
            }
        }
        let summary = matrix.summary()?;
        metrics = SeedMetrics {
            rp: summary.rp,
            lp: Some(summary.lp),
            bwt: summary.bwt,
            fgt: summary.fgt,
        };
    }

    let mut checkpoint_rps = Vec::with_capacity(points.len());
    for &cp in matrix.checkpoints().collect::<Vec<_>>().iter() {
        checkpoint_rps.push((cp, matrix.rp_at(cp)?));
    }
    let scores_csv = if want_scores {
        Some(render_scores_csv(cfg, seed, &matrix)?)
    } else {
        None
    };
    Ok(SeedOutcome {
        run: SeedRun {
            seed,
            metrics: Some(metrics),
            checkpoint_rps,
            error: None,
        },
        scores_csv,
    })
}

fn aggregate(values: Vec<Vec<f64>>) -> (MetricAggregate, MetricAggregate) {
    let agg = |xs: &[f64]| (stats::mean(xs), stats::standard_error(xs));
    let (rp_m, rp_se) = agg(&values[0]);
    let (lp_m, lp_se) = agg(&values[1]);
    let (bwt_m, bwt_se) = agg(&values[2]);
    let (fgt_m, fgt_se) = agg(&values[3]);
    (
        MetricAggregate {
            rp: rp_m,
            lp: lp_m,
            bwt: bwt_m,
            fgt: fgt_m,
        },
        MetricAggregate {
            rp: rp_se,
            lp: lp_se,
            bwt: bwt_se,
            fgt: fgt_se,
        },
    )
}

/// Build a [`RunResult`] from per-seed runs; fails when no seed
/// succeeded.
fn assemble_result(
    cfg: &ExperimentConfig,
    per_seed: Vec<SeedRun>,
    started: Instant,
) -> Result<RunResult> {
    if per_seed.iter().all(|s| s.metrics.is_none()) {
        let first = per_seed
            .iter()
            .find_map(|s| s.error.clone())
            .unwrap_or_else(|| "unknown".into());
        return Err(invalid_state(format!("all seeds failed; first error: {first}")));
    }

    let mut columns = vec![Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for run in per_seed.iter().filter_map(|s| s.metrics) {
        columns[0].push(run.rp);
        if let Some(lp) = run.lp {
            columns[1].push(lp);
        }
        if let Some(bwt) = run.bwt {
            columns[2].push(bwt);
        }
        if let Some(fgt) = run.fgt {
            columns[3].push(fgt);
        }
    }
    let (mean, std_error) = aggregate(columns);

    // Per-checkpoint RP trajectory across successful seeds.
    let mut trajectory = Vec::new();
    if let Some(first_ok) = per_seed.iter().find(|s| s.metrics.is_some()) {
        for (i, &(cp, _)) in first_ok.checkpoint_rps.iter().enumerate() {
            let column: Vec<f64> = per_seed
                .iter()
                .filter(|s| s.metrics.is_some())
                .filter_map(|s| s.checkpoint_rps.get(i).map(|&(_, rp)| rp))
                .collect();
            trajectory.push(CheckpointAggregate {
                checkpoint: cp,
                rp_mean: stats::mean(&column).expect("non-empty column"),
                rp_se: stats::standard_error(&column),
            });
        }
    }

    Ok(RunResult {
        config_fingerprint: config_fingerprint(cfg)?,
        config: cfg.clone(),
        per_seed,
        mean,
        std_error,
        trajectory,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

fn run_experiment_inner(
    cfg: &ExperimentConfig,
    schedule: EvalSchedule,
    want_scores: bool,
) -> Result<(RunResult, Vec<(u64, String)>)> {
    cfg.validate()?;
    let started = Instant::now();
    let outcomes: Vec<std::result::Result<SeedOutcome, String>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, seed, &schedule, want_scores).map_err(|e| e.to_string()))
        .collect();

    let mut per_seed = Vec::with_capacity(outcomes.len());
    let mut scores = Vec::new();
    for (i, outcome) in outcomes.into_iter().enumerate() {
        let seed = cfg.seeds[i];
        match outcome {
            Ok(SeedOutcome { run, scores_csv }) => {
                if let Some(csv) = scores_csv {
                    scores.push((seed, csv));
                }
                per_seed.push(run);
            }
            Err(msg) => per_seed.push(SeedRun {
                seed,
                metrics: None,
                checkpoint_rps: Vec::new(),
                error: Some(msg),
            }),
        }
    }
    Ok((assemble_result(cfg, per_seed, started)?, scores))
}

/// Run several experiment variants that share `synth`, `seeds` and
/// `fixed_sequence`, generating each per-seed sequence once and training
/// every variant on it. Results are identical to independent
/// [`run_experiment`] calls; only redundant generation work is saved.
fn run_variants_on_shared_sequences(
    variants: &[ExperimentConfig],
    schedule: &EvalSchedule,
) -> Result<Vec<RunResult>> {
    let base = &variants[0];
    for v in variants {
        v.validate()?;
        if v.synth != base.synth || v.seeds != base.seeds || v.fixed_sequence != base.fixed_sequence
        {
            return Err(invalid_argument(
                "shared-sequence variants must agree on synth, seeds and fixed_sequence",
            ));
        }
    }
    let started = Instant::now();
    let per_seed_rows: Vec<Vec<SeedRun>> = base
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut synth_cfg = base.synth.clone();
            synth_cfg.seed = sequence_seed(base, seed);
            let failed_all = |msg: String| {
                variants
                    .iter()
                    .map(|_| SeedRun {
                        seed,
                        metrics: None,
                        checkpoint_rps: Vec::new(),
                        error: Some(msg.clone()),
                    })
                    .collect::<Vec<SeedRun>>()
            };
            match generate_sequence(&synth_cfg) {
                Err(e) => failed_all(e.to_string()),
                Ok(sequence) => variants
                    .iter()
                    .map(|cfg| {
                        match run_seed_on_sequence(cfg, seed, &sequence, schedule, false) {
                            Ok(outcome) => outcome.run,
                            Err(e) => SeedRun {
                                seed,
                                metrics: None,
                                checkpoint_rps: Vec::new(),
                                error: Some(e.to_string()),
                            },
                        }
                    })
                    .collect(),
            }
        })
        .collect();

    variants
        .iter()
        .enumerate()
        .map(|(vi, cfg)| {
            let runs: Vec<SeedRun> = per_seed_rows.iter().map(|rows| rows[vi].clone()).collect();
            assemble_result(cfg, runs, started)
        })
        .collect()
}

/// Run one experiment: per seed, generate a sequence, train through the
/// tasks with the configured method and optimizer, evaluate on the
/// checkpoint schedule, and aggregate metrics across seeds.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult> {
    run_experiment_inner(cfg, EvalSchedule::Interval(cfg.eval_interval), false).map(|(r, _)| r)
}

/// [`run_experiment`] plus rendered per-seed `scores.csv` contents.
pub fn run_experiment_with_scores(cfg: &ExperimentConfig) -> Result<(RunResult, Vec<(u64, String)>)> {
    run_experiment_inner(cfg, EvalSchedule::Interval(cfg.eval_interval), true)
}

/// The ten moment-policy rows of the ablation, in presentation order:
/// (first moment, second moment, lr_adjust).
pub const ABLATION_ROWS: [(MomentMode, MomentMode, bool); 10] = [
    (MomentMode::Reset, MomentMode::Reset, true),
    (MomentMode::Reset, MomentMode::Reset, false),
    (MomentMode::Reset, MomentMode::Carry, true),
    (MomentMode::Reset, MomentMode::Carry, false),
    (MomentMode::Carry, MomentMode::Carry, true),
    (MomentMode::Carry, MomentMode::Carry, false),
    (MomentMode::Reset, MomentMode::TaskAverage, true),
    (MomentMode::Reset, MomentMode::TaskAverage, false),
    (MomentMode::TaskAverage, MomentMode::TaskAverage, true),
    (MomentMode::TaskAverage, MomentMode::TaskAverage, false),
];

pub const GRID_REGIMES: [Regime; 3] = [Regime::Same, Regime::Perturb, Regime::Shift];

fn mode_label(mode: MomentMode) -> &'static str {
    match mode {
        MomentMode::Reset => "reset",
        MomentMode::Carry => "carry",
        MomentMode::TaskAverage => "task_average",
    }
}

fn regime_label(regime: Regime) -> &'static str {
    match regime {
        Regime::Same => "same",
        Regime::Perturb => "perturb",
        Regime::Shift => "shift",
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCell {
    /// 1-based presentation row; the pooled multi-task row is last.
    pub row: usize,
    pub method_label: String,
    pub first_moment: Option<MomentMode>,
    pub second_moment: Option<MomentMode>,
    pub lr_adjust: Option<bool>,
    pub regime: Regime,
    pub result: RunResult,
}

impl GridCell {
    pub fn first_moment_label(&self) -> &'static str {
        self.first_moment.map(mode_label).unwrap_or("")
    }

    pub fn second_moment_label(&self) -> &'static str {
        self.second_moment.map(mode_label).unwrap_or("")
    }

    pub fn lr_adjust_label(&self) -> &'static str {
        match self.lr_adjust {
            Some(true) => "on",
            Some(false) => "off",
            None => "",
        }
    }

    pub fn regime_label(&self) -> &'static str {
        regime_label(self.regime)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridOutcome {
    pub base_config: ExperimentConfig,
    pub cells: Vec<GridCell>,
}

impl GridOutcome {
    pub fn rows(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = self.cells.iter().map(|c| c.row).collect();
        rows.dedup();
        rows
    }

    /// Cells of one row in regime order (same, perturb, shift).
    pub fn row_cells(&self, row: usize) -> Vec<&GridCell> {
        GRID_REGIMES
            .iter()
            .filter_map(|&regime| {
                self.cells
                    .iter()
                    .find(|c| c.row == row && c.regime == regime)
            })
            .collect()
    }

    pub fn cell(
        &self,
        first: MomentMode,
        second: MomentMode,
        lr_adjust: bool,
        regime: Regime,
    ) -> Option<&GridCell> {
        self.cells.iter().find(|c| {
            c.first_moment == Some(first)
                && c.second_moment == Some(second)
                && c.lr_adjust == Some(lr_adjust)
                && c.regime == regime
        })
    }

    pub fn mtl_cell(&self, regime: Regime) -> Option<&GridCell> {
        self.cells
            .iter()
            .find(|c| c.method_label == "mtl" && c.regime == regime)
    }
}

/// Run the full ablation: the ten moment-policy rows plus the pooled
/// multi-task reference, each on all three regimes with the same seeds.
pub fn run_ablation_grid(base: &ExperimentConfig) -> Result<GridOutcome> {
    base.validate()?;
    if base.method.method == MethodKind::Mtl {
        return Err(invalid_argument(
            "the grid varies optimizer policies; configure a per-task method, not mtl",
        ));
    }
    let mut cells = Vec::with_capacity(33);
    // All rows of one regime share per-seed sequences; regeneration per
    // row would produce bit-identical tasks anyway.
    for regime in GRID_REGIMES {
        let mut variants = Vec::with_capacity(ABLATION_ROWS.len() + 1);
        for &(first, second, lr_adjust) in &ABLATION_ROWS {
            let mut cfg = base.clone();
            cfg.synth.regime = regime;
            cfg.optimizer = cfg.optimizer.with_modes(first, second, lr_adjust);
            variants.push(cfg);
        }
        // The pooled reference trains single-run plain Adam on all data.
        let mut mtl_cfg = base.clone();
        mtl_cfg.synth.regime = regime;
        mtl_cfg.optimizer = ContinualOptConfig {
            alpha: base.optimizer.alpha,
            ..ContinualOptConfig::plain_adam(base.optimizer.alpha)
        };
        mtl_cfg.method = MethodConfig::new(MethodKind::Mtl);
        variants.push(mtl_cfg);

        let schedule = EvalSchedule::Interval(base.eval_interval);
        let results = run_variants_on_shared_sequences(&variants, &schedule)?;
        for (i, result) in results.into_iter().enumerate() {
            if i < ABLATION_ROWS.len() {
                let (first, second, lr_adjust) = ABLATION_ROWS[i];
                cells.push(GridCell {
                    row: i + 1,
                    method_label: "finetune".into(),
                    first_moment: Some(first),
                    second_moment: Some(second),
                    lr_adjust: Some(lr_adjust),
                    regime,
                    result,
                });
            } else {
                cells.push(GridCell {
                    row: ABLATION_ROWS.len() + 1,
                    method_label: "mtl".into(),
                    first_moment: None,
                    second_moment: None,
                    lr_adjust: None,
                    regime,
                    result,
                });
            }
        }
    }
    cells.sort_by_key(|c| c.row);
    Ok(GridOutcome {
        base_config: base.clone(),
        cells,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub base_config: ExperimentConfig,
    pub checkpoints: Vec<usize>,
    pub continual: RunResult,
    pub reset: RunResult,
    pub rp_continual_mean: Vec<f64>,
    pub rp_reset_mean: Vec<f64>,
    /// Continual minus reset; negative favors continual for lower-better
    /// scores.
    pub diff_mean: Vec<f64>,
    pub diff_se: Vec<Option<f64>>,
    /// Spearman correlation between checkpoint index and |diff|.
    pub spearman_gap_magnitude: Option<f64>,
    /// One-sided permutation p-value for that correlation being positive.
    pub p_value: Option<f64>,
}

fn checkpoint_rp(run: &SeedRun, checkpoint: usize) -> Option<f64> {
    run.checkpoint_rps
        .iter()
        .find(|&&(cp, _)| cp == checkpoint)
        .map(|&(_, rp)| rp)
}

/// Compare two optimizer configurations checkpoint by checkpoint.
pub fn run_taskcount_sweep_with(
    base: &ExperimentConfig,
    continual_opt: ContinualOptConfig,
    reset_opt: ContinualOptConfig,
    checkpoints: &[usize],
) -> Result<SweepResult> {
    base.validate()?;
    if checkpoints.is_empty() {
        return Err(invalid_argument("checkpoints must be non-empty"));
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid_argument("checkpoints must be strictly increasing"));
    }
    if *checkpoints.last().unwrap() > base.synth.num_tasks {
        return Err(invalid_argument(format!(
            "checkpoint {} exceeds num_tasks {}",
            checkpoints.last().unwrap(),
            base.synth.num_tasks
        )));
    }
    let schedule = EvalSchedule::Explicit(checkpoints.to_vec());
    let mut continual_cfg = base.clone();
    continual_cfg.optimizer = continual_opt;
    let mut reset_cfg = base.clone();
    reset_cfg.optimizer = reset_opt;
    let mut results =
        run_variants_on_shared_sequences(&[continual_cfg, reset_cfg], &schedule)?.into_iter();
    let continual = results.next().expect("two variants submitted");
    let reset = results.next().expect("two variants submitted");

    let mut rp_continual_mean = Vec::with_capacity(checkpoints.len());
    let mut rp_reset_mean = Vec::with_capacity(checkpoints.len());
    let mut diff_mean = Vec::with_capacity(checkpoints.len());
    let mut diff_se = Vec::with_capacity(checkpoints.len());
    for &cp in checkpoints {
        let mut cont = Vec::new();
        let mut res = Vec::new();
        let mut diffs = Vec::new();
        for (c_run, r_run) in continual.per_seed.iter().zip(&reset.per_seed) {
            if let (Some(c), Some(r)) = (checkpoint_rp(c_run, cp), checkpoint_rp(r_run, cp)) {
                cont.push(c);
                res.push(r);
                diffs.push(c - r);
            }
        }
        if diffs.is_empty() {
            return Err(invalid_state(format!(
                "no seed produced paired results at checkpoint {cp}"
            )));
        }
        rp_continual_mean.push(stats::mean(&cont).expect("non-empty"));
        rp_reset_mean.push(stats::mean(&res).expect("non-empty"));
        diff_mean.push(stats::mean(&diffs).expect("non-empty"));
        diff_se.push(stats::standard_error(&diffs));
    }

    let index: Vec<f64> = checkpoints.iter().map(|&cp| cp as f64).collect();
    let magnitude: Vec<f64> = diff_mean.iter().map(|d| d.abs()).collect();
    let mut perm_rng = RngStream::new(0xC1AB, 0);
    let (spearman, p_value) =
        match stats::spearman_perm_test_greater(&index, &magnitude, 100_000, &mut perm_rng) {
            Some((rho, p)) => (Some(rho), Some(p)),
            None => (None, None),
        };

    Ok(SweepResult {
        base_config: base.clone(),
        checkpoints: checkpoints.to_vec(),
        continual,
        reset,
        rp_continual_mean,
        rp_reset_mean,
        diff_mean,
        diff_se,
        spearman_gap_magnitude: spearman,
        p_value,
    })
}

/// The default task-count sweep: the task-averaged second-moment
/// optimizer with ramp-in against plain per-task Adam.
pub fn run_taskcount_sweep(base: &ExperimentConfig, checkpoints: &[usize]) -> Result<SweepResult> {
    let continual = base
        .optimizer
        .clone()
        .with_modes(MomentMode::Reset, MomentMode::TaskAverage, true);
    let reset = base
        .optimizer
        .clone()
        .with_modes(MomentMode::Reset, MomentMode::Reset, false);
    run_taskcount_sweep_with(base, continual, reset, checkpoints)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LrSearchEntry {
    pub alpha: f64,
    pub result: RunResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LrSearchResult {
    pub base_config: ExperimentConfig,
    pub entries: Vec<LrSearchEntry>,
}

/// Re-run the base experiment across candidate learning rates.
pub fn run_lr_search(base: &ExperimentConfig, alphas: &[f64]) -> Result<LrSearchResult> {
    if alphas.is_empty() {
        return Err(invalid_argument("alphas must be non-empty"));
    }
    let mut entries = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(invalid_argument(format!("alpha must be positive, got {alpha}")));
        }
        let mut cfg = base.clone();
        cfg.optimizer.alpha = alpha;
        entries.push(LrSearchEntry {
            alpha,
            result: run_experiment(&cfg)?,
        });
    }
    Ok(LrSearchResult {
        base_config: base.clone(),
        entries,
    })
}
