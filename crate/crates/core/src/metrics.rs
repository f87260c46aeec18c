//! Score-matrix bookkeeping and the four continual-learning metrics.
//!
//! `a[i][j]` is the score on task `j` after learning the first `i` tasks
//! (both 1-based); only seen tasks are scored. Evaluation usually runs on
//! a sparse checkpoint schedule, so the diagonal needed by LP/BWT is
//! proxied by the first recorded checkpoint at or after each task, and
//! the FGT extremum ranges over recorded checkpoints only. All metrics
//! weight tasks by their test-set sizes.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use crate::error::{invalid_argument, invalid_state, Error, Result};
use crate::linear::{mse_loss, LinearModel};
use crate::synth::Task;

/// The four summary metrics. `bwt`/`fgt` are `None` for single-task runs
/// where the sums over earlier tasks are empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub rp: f64,
    pub lp: f64,
    pub bwt: Option<f64>,
    pub fgt: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreMatrix {
    num_tasks: usize,
    higher_is_better: bool,
    /// Test-set sizes, indexed by task - 1.
    test_sizes: Vec<usize>,
    /// (checkpoint, task) -> score, task <= checkpoint.
    entries: BTreeMap<(usize, usize), f64>,
    checkpoints: BTreeSet<usize>,
}

impl ScoreMatrix {
    pub fn new(num_tasks: usize, test_sizes: Vec<usize>, higher_is_better: bool) -> Result<Self> {
        if num_tasks == 0 {
            return Err(invalid_argument("num_tasks must be positive"));
        }
        if test_sizes.len() != num_tasks {
            return Err(invalid_argument(format!(
                "expected {num_tasks} test sizes, got {}",
                test_sizes.len()
            )));
        }
        if test_sizes.iter().any(|&n| n == 0) {
            return Err(invalid_argument("every task needs a non-empty test set"));
        }
        Ok(Self {
            num_tasks,
            higher_is_better,
            test_sizes,
            entries: BTreeMap::new(),
            checkpoints: BTreeSet::new(),
        })
    }

    pub fn num_tasks(&self) -> usize {
        self.num_tasks
    }

    pub fn higher_is_better(&self) -> bool {
        self.higher_is_better
    }

    pub fn checkpoints(&self) -> impl Iterator<Item = usize> + '_ {
        self.checkpoints.iter().copied()
    }

    pub fn test_sizes(&self) -> &[usize] {
        &self.test_sizes
    }

    pub fn score(&self, checkpoint: usize, task: usize) -> Option<f64> {
        self.entries.get(&(checkpoint, task)).copied()
    }

    /// Record a single score; `task` must not exceed `checkpoint` (models
    /// are never scored on tasks they have not seen).
    pub fn record_score(&mut self, checkpoint: usize, task: usize, score: f64) -> Result<()> {
        if checkpoint == 0 || checkpoint > self.num_tasks {
            return Err(invalid_argument(format!(
                "checkpoint {checkpoint} outside 1..={}",
                self.num_tasks
            )));
        }
        if task == 0 || task > checkpoint {
            return Err(invalid_argument(format!(
                "task {task} outside 1..={checkpoint} at checkpoint {checkpoint}"
            )));
        }
        if !score.is_finite() {
            return Err(Error::Numeric(format!("non-finite score {score}")));
        }
        self.entries.insert((checkpoint, task), score);
        self.checkpoints.insert(checkpoint);
        Ok(())
    }

    /// Evaluate `model` on the test sets of every task up to `checkpoint`
    /// and record the scores (test MSE for the regression tasks).
    pub fn record_eval(
        &mut self,
        checkpoint: usize,
        model: &LinearModel,
        tasks: &[Task],
    ) -> Result<()> {
        if tasks.len() < checkpoint {
            return Err(invalid_argument(format!(
                "checkpoint {checkpoint} exceeds the {} provided tasks",
                tasks.len()
            )));
        }
        for (j, task) in tasks.iter().take(checkpoint).enumerate() {
            if task.test.len() != self.test_sizes[j] {
                return Err(invalid_argument(format!(
                    "task {} test size {} does not match the registered {}",
                    j + 1,
                    task.test.len(),
                    self.test_sizes[j]
                )));
            }
            let score = mse_loss(model, &task.test)?;
            self.record_score(checkpoint, j + 1, score)?;
        }
        Ok(())
    }

    fn final_checkpoint(&self) -> Result<usize> {
        let last = self.num_tasks;
        for task in 1..=last {
            if !self.entries.contains_key(&(last, task)) {
                return Err(invalid_state(format!(
                    "final checkpoint {last} is missing a score for task {task}"
                )));
            }
        }
        Ok(last)
    }

    /// Diagonal proxy: the score of task `i` at the first recorded
    /// checkpoint >= `i`.
    fn diag_score(&self, task: usize) -> Result<f64> {
        for &cp in self.checkpoints.range(task..) {
            if let Some(score) = self.score(cp, task) {
                return Ok(score);
            }
        }
        Err(invalid_state(format!(
            "no recorded checkpoint covers task {task}"
        )))
    }

    fn weighted_mean(&self, scores: impl Iterator<Item = (usize, f64)>) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (task, score) in scores {
            let n = self.test_sizes[task - 1] as f64;
            num += n * score;
            den += n;
        }
        num / den
    }

    /// Retained performance: size-weighted mean of the final-checkpoint
    /// scores across all tasks.
    pub fn rp(&self) -> Result<f64> {
        self.rp_at(self.final_checkpoint()?)
    }

    /// Retained performance over the first `checkpoint` tasks using that
    /// checkpoint's row (used for task-count sweeps).
    pub fn rp_at(&self, checkpoint: usize) -> Result<f64> {
        if !self.checkpoints.contains(&checkpoint) {
            return Err(invalid_state(format!(
                "checkpoint {checkpoint} was never recorded"
            )));
        }
        let mut scores = Vec::with_capacity(checkpoint);
        for task in 1..=checkpoint {
            let score = self.score(checkpoint, task).ok_or_else(|| {
                invalid_state(format!(
                    "checkpoint {checkpoint} is missing a score for task {task}"
                ))
            })?;
            scores.push((task, score));
        }
        Ok(self.weighted_mean(scores.into_iter()))
    }

    /// Learning performance: size-weighted mean of each task's diagonal
    /// (proxy) score.
    pub fn lp(&self) -> Result<f64> {
        self.final_checkpoint()?;
        let mut scores = Vec::with_capacity(self.num_tasks);
        for task in 1..=self.num_tasks {
            scores.push((task, self.diag_score(task)?));
        }
        Ok(self.weighted_mean(scores.into_iter()))
    }

    /// Backward transfer over tasks 1..T-1; `None` when T = 1.
    pub fn bwt(&self) -> Result<Option<f64>> {
        let last = self.final_checkpoint()?;
        if self.num_tasks == 1 {
            return Ok(None);
        }
        let mut scores = Vec::with_capacity(self.num_tasks - 1);
        for task in 1..self.num_tasks {
            let final_score = self.score(last, task).expect("final row verified");
            scores.push((task, final_score - self.diag_score(task)?));
        }
        Ok(Some(self.weighted_mean(scores.into_iter())))
    }

    /// Forgetting over tasks 1..T-1; `None` when T = 1. The per-task term
    /// is `ext_j a[j][i] - a[T][i]` with `ext = max` over recorded
    /// checkpoints `j >= i` for higher-is-better scores, and
    /// `a[T][i] - min_j a[j][i]` otherwise, so FGT >= 0 in both
    /// directions.
    pub fn fgt(&self) -> Result<Option<f64>> {
        let last = self.final_checkpoint()?;
        if self.num_tasks == 1 {
            return Ok(None);
        }
        let mut scores = Vec::with_capacity(self.num_tasks - 1);
        for task in 1..self.num_tasks {
            let final_score = self.score(last, task).expect("final row verified");
            let mut ext: Option<f64> = None;
            for &cp in self.checkpoints.range(task..) {
                if let Some(s) = self.score(cp, task) {
                    ext = Some(match ext {
                        None => s,
                        Some(e) if self.higher_is_better => e.max(s),
                        Some(e) => e.min(s),
                    });
                }
            }
            let ext = ext.expect("final checkpoint always covers the task");
            let term = if self.higher_is_better {
                ext - final_score
            } else {
                final_score - ext
            };
            scores.push((task, term));
        }
        Ok(Some(self.weighted_mean(scores.into_iter())))
    }

    pub fn summary(&self) -> Result<MetricSummary> {
        Ok(MetricSummary {
            rp: self.rp()?,
            lp: self.lp()?,
            bwt: self.bwt()?,
            fgt: self.fgt()?,
        })
    }

    /// One CSV row per recorded (checkpoint, task): `checkpoint,task,score,n`.
    pub fn write_scores_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "checkpoint,task,score,n")?;
        for (&(cp, task), score) in &self.entries {
            writeln!(writer, "{cp},{task},{score},{}", self.test_sizes[task - 1])?;
        }
        Ok(())
    }
}
