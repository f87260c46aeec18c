//! Continual-learning strategies.
//!
//! Each strategy assembles a per-batch loss/gradient from the current
//! task plus its replay or penalty terms, and runs hooks at task
//! boundaries (Fisher passes, anchor snapshots, buffer insertions).
//! [`train_task`] drives one task end to end; [`mtl_train`] is the
//! pooled multi-task reference.

pub mod ewc;
pub mod replay;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_argument, Result};
use crate::linear::{mse_loss_and_grad, Example, LinearModel};
use crate::optim::ContinualOptimizer;
use crate::rng::RngStream;
use crate::synth::Task;

pub use ewc::{fisher_diag, EwcPPState, EwcState};
pub use replay::{derpp_batch_loss, BufferPolicy, ReplayBuffer, StoredItem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Finetune,
    Ewc,
    Ewcpp,
    Reservoir,
    Derpp,
    Agem,
    /// Pooled multi-task training; handled by [`mtl_train`], not
    /// [`train_task`].
    Mtl,
}

/// How EWC++ estimates the per-batch Fisher diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherEstimator {
    /// Mean of squared per-example gradients.
    #[default]
    PerExampleSquares,
    /// Componentwise square of the mean batch gradient.
    SquaredBatchMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub method: MethodKind,
    #[serde(default = "default_buffer_capacity")]
    pub buffer_capacity: usize,
    #[serde(default = "default_replay_batch_size")]
    pub replay_batch_size: usize,
    #[serde(default = "one")]
    pub current_loss_weight: f64,
    #[serde(default = "one")]
    pub replay_loss_weight: f64,
    #[serde(default = "one")]
    pub derpp_alpha: f64,
    #[serde(default = "one")]
    pub derpp_beta: f64,
    #[serde(default = "one")]
    pub ewc_penalty_weight: f64,
    #[serde(default = "one")]
    pub ewcpp_penalty_weight: f64,
    #[serde(default = "default_ema_alpha")]
    pub ewcpp_ema_alpha: f64,
    #[serde(default)]
    pub ewcpp_fisher_mode: FisherEstimator,
}

fn default_buffer_capacity() -> usize {
    200
}
fn default_replay_batch_size() -> usize {
    16
}
fn one() -> f64 {
    1.0
}
fn default_ema_alpha() -> f64 {
    0.9
}

impl MethodConfig {
    pub fn new(method: MethodKind) -> Self {
        Self {
            method,
            buffer_capacity: default_buffer_capacity(),
            replay_batch_size: default_replay_batch_size(),
            current_loss_weight: 1.0,
            replay_loss_weight: 1.0,
            derpp_alpha: 1.0,
            derpp_beta: 1.0,
            ewc_penalty_weight: 1.0,
            ewcpp_penalty_weight: 1.0,
            ewcpp_ema_alpha: default_ema_alpha(),
            ewcpp_fisher_mode: FisherEstimator::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.buffer_capacity == 0 {
            return Err(invalid_argument("buffer_capacity must be positive"));
        }
        if self.replay_batch_size == 0 {
            return Err(invalid_argument("replay_batch_size must be positive"));
        }
        for (name, w) in [
            ("current_loss_weight", self.current_loss_weight),
            ("replay_loss_weight", self.replay_loss_weight),
            ("derpp_alpha", self.derpp_alpha),
            ("derpp_beta", self.derpp_beta),
            ("ewc_penalty_weight", self.ewc_penalty_weight),
            ("ewcpp_penalty_weight", self.ewcpp_penalty_weight),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(invalid_argument(format!(
                    "{name} must be finite and non-negative, got {w}"
                )));
            }
        }
        if !(self.ewcpp_ema_alpha > 0.0 && self.ewcpp_ema_alpha <= 1.0) {
            return Err(invalid_argument(format!(
                "ewcpp_ema_alpha must lie in (0, 1], got {}",
                self.ewcpp_ema_alpha
            )));
        }
        Ok(())
    }
}

/// Per-run mutable state of a strategy.
#[derive(Debug, Clone)]
pub enum MethodState {
    Finetune,
    Ewc(EwcState),
    Ewcpp(EwcPPState),
    Reservoir(ReplayBuffer),
    Derpp(ReplayBuffer),
    Agem(ReplayBuffer),
}

impl MethodState {
    pub fn new(cfg: &MethodConfig, dim: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(match cfg.method {
            MethodKind::Finetune => Self::Finetune,
            MethodKind::Ewc => Self::Ewc(EwcState::new(dim, cfg.ewc_penalty_weight)),
            MethodKind::Ewcpp => Self::Ewcpp(EwcPPState::new(
                dim,
                cfg.ewcpp_ema_alpha,
                cfg.ewcpp_penalty_weight,
            )?),
            MethodKind::Reservoir => Self::Reservoir(ReplayBuffer::reservoir(cfg.buffer_capacity)?),
            MethodKind::Derpp => Self::Derpp(ReplayBuffer::reservoir(cfg.buffer_capacity)?),
            MethodKind::Agem => Self::Agem(ReplayBuffer::per_task_quota(cfg.buffer_capacity)?),
            MethodKind::Mtl => {
                return Err(invalid_argument(
                    "mtl trains on pooled data via mtl_train, not per task",
                ))
            }
        })
    }

    pub fn kind(&self) -> MethodKind {
        match self {
            Self::Finetune => MethodKind::Finetune,
            Self::Ewc(_) => MethodKind::Ewc,
            Self::Ewcpp(_) => MethodKind::Ewcpp,
            Self::Reservoir(_) => MethodKind::Reservoir,
            Self::Derpp(_) => MethodKind::Derpp,
            Self::Agem(_) => MethodKind::Agem,
        }
    }

    pub fn buffer(&self) -> Option<&ReplayBuffer> {
        match self {
            Self::Reservoir(buf) | Self::Derpp(buf) | Self::Agem(buf) => Some(buf),
            _ => None,
        }
    }
}

/// Project `grad` onto the half-space where it does not increase the
/// reference (buffer) loss: if `g·g_ref < 0`, remove the conflicting
/// component along `g_ref`; otherwise return `grad` unchanged. A zero
/// reference gradient is a no-op.
pub fn agem_project(grad: &[f64], grad_ref: &[f64]) -> Vec<f64> {
    assert_eq!(grad.len(), grad_ref.len(), "gradient dimensions must match");
    let dot: f64 = grad.iter().zip(grad_ref).map(|(g, r)| g * r).sum();
    let norm_sq: f64 = grad_ref.iter().map(|r| r * r).sum();
    if norm_sq == 0.0 || dot >= 0.0 {
        return grad.to_vec();
    }
    let coeff = dot / norm_sq;
    grad.iter()
        .zip(grad_ref)
        .map(|(g, r)| g - coeff * r)
        .collect()
}

fn scale_in_place(value: &mut f64, grad: &mut [f64], scale: f64) {
    *value *= scale;
    grad.iter_mut().for_each(|g| *g *= scale);
}

fn add_in_place(loss: &mut f64, grad: &mut [f64], other_loss: f64, other_grad: &[f64]) {
    *loss += other_loss;
    for (g, o) in grad.iter_mut().zip(other_grad) {
        *g += o;
    }
}

/// Assemble one batch's loss and gradient for the active strategy.
fn batch_loss_and_grad(
    cfg: &MethodConfig,
    model: &LinearModel,
    batch: &[&Example],
    state: &mut MethodState,
    rng: &mut RngStream,
) -> Result<(f64, Vec<f64>)> {
    use crate::linear::mse_loss_and_grad_refs;
    match state {
        MethodState::Finetune => {
            let (mut loss, mut grad) = mse_loss_and_grad_refs(model, batch)?;
            scale_in_place(&mut loss, &mut grad, cfg.current_loss_weight);
            Ok((loss, grad))
        }
        MethodState::Ewc(st) => {
            let (mut loss, mut grad) = mse_loss_and_grad_refs(model, batch)?;
            scale_in_place(&mut loss, &mut grad, cfg.current_loss_weight);
            let (penalty, pgrad) = st.penalty_grad(model.params());
            add_in_place(&mut loss, &mut grad, penalty, &pgrad);
            Ok((loss, grad))
        }
        MethodState::Ewcpp(st) => {
            let (raw_loss, raw_grad) = mse_loss_and_grad_refs(model, batch)?;
            let estimate = match cfg.ewcpp_fisher_mode {
                FisherEstimator::PerExampleSquares => ewc::fisher_diag_refs(model, batch)?,
                FisherEstimator::SquaredBatchMean => {
                    raw_grad.iter().map(|g| g * g).collect::<Vec<f64>>()
                }
            };
            let mut loss = cfg.current_loss_weight * raw_loss;
            let mut grad: Vec<f64> =
                raw_grad.iter().map(|g| g * cfg.current_loss_weight).collect();
            let (penalty, pgrad) = st.penalty_grad(model.params());
            add_in_place(&mut loss, &mut grad, penalty, &pgrad);
            st.update_fisher(&estimate)?;
            Ok((loss, grad))
        }
        MethodState::Reservoir(buf) => {
            let (mut loss, mut grad) = mse_loss_and_grad_refs(model, batch)?;
            scale_in_place(&mut loss, &mut grad, cfg.current_loss_weight);
            if !buf.is_empty() {
                let replay = buf.sample(cfg.replay_batch_size, rng);
                let replay_examples = replay::items_as_examples(&replay);
                let (mut rloss, mut rgrad) = mse_loss_and_grad(model, &replay_examples)?;
                scale_in_place(&mut rloss, &mut rgrad, cfg.replay_loss_weight);
                add_in_place(&mut loss, &mut grad, rloss, &rgrad);
            }
            Ok((loss, grad))
        }
        MethodState::Derpp(buf) => {
            // replay_b is drawn first and the distillation draw is skipped
            // entirely at alpha = 0, so that configuration consumes the
            // same rng sequence as the plain reservoir method.
            let (replay_b, replay_a) = if buf.is_empty() {
                (Vec::new(), Vec::new())
            } else {
                let b = buf.sample(cfg.replay_batch_size, rng);
                let a = if cfg.derpp_alpha > 0.0 {
                    buf.sample(cfg.replay_batch_size, rng)
                } else {
                    Vec::new()
                };
                (b, a)
            };
            replay::derpp_batch_loss_refs(model, batch, &replay_a, &replay_b, cfg)
        }
        MethodState::Agem(buf) => {
            let (mut loss, mut grad) = mse_loss_and_grad_refs(model, batch)?;
            scale_in_place(&mut loss, &mut grad, cfg.current_loss_weight);
            if !buf.is_empty() {
                let replay = buf.sample(cfg.replay_batch_size, rng);
                let replay_examples = replay::items_as_examples(&replay);
                let (_, grad_ref) = mse_loss_and_grad(model, &replay_examples)?;
                grad = agem_project(&grad, &grad_ref);
            }
            Ok((loss, grad))
        }
    }
}

/// Train one task: optimizer boundary calls, shuffled mini-batches with
/// the strategy's loss assembly, then the strategy's end-of-task hooks
/// (EWC Fisher pass, EWC++ anchor snapshot, buffer insertions with
/// DER++ recording the freshly trained model's outputs, A-GEM quota
/// rebalancing).
#[allow(clippy::too_many_arguments)]
pub fn train_task(
    cfg: &MethodConfig,
    model: &mut LinearModel,
    opt: &mut ContinualOptimizer,
    task: &Task,
    state: &mut MethodState,
    rng: &mut RngStream,
    epochs: usize,
    batch_size: usize,
) -> Result<()> {
    if epochs == 0 {
        return Err(invalid_argument("epochs must be positive"));
    }
    if batch_size == 0 {
        return Err(invalid_argument("batch_size must be positive"));
    }
    if state.kind() != cfg.method {
        return Err(invalid_argument(format!(
            "method state {:?} does not match configured method {:?}",
            state.kind(),
            cfg.method
        )));
    }

    opt.begin_task();
    let train = &task.train;
    if !train.is_empty() {
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut batch: Vec<&Example> = Vec::with_capacity(batch_size);
        for _ in 0..epochs {
            order.shuffle(rng);
            for chunk in order.chunks(batch_size) {
                batch.clear();
                batch.extend(chunk.iter().map(|&i| &train[i]));
                let (_, grad) = batch_loss_and_grad(cfg, model, &batch, state, rng)?;
                opt.step(model.params_mut(), &grad, 1.0)?;
            }
        }
    }
    opt.end_task();

    match state {
        MethodState::Finetune => {}
        MethodState::Ewc(st) => {
            if !train.is_empty() {
                st.end_task(model, train)?;
            }
        }
        MethodState::Ewcpp(st) => st.record_anchor(model.params()),
        MethodState::Reservoir(buf) => {
            for ex in train {
                buf.reservoir_insert(
                    StoredItem {
                        x: ex.x.clone(),
                        y: ex.y,
                        recorded_output: None,
                        task_id: task.task_id,
                    },
                    rng,
                )?;
            }
        }
        MethodState::Derpp(buf) => {
            for ex in train {
                let recorded = model.predict(&ex.x)?;
                buf.reservoir_insert(
                    StoredItem {
                        x: ex.x.clone(),
                        y: ex.y,
                        recorded_output: Some(recorded),
                        task_id: task.task_id,
                    },
                    rng,
                )?;
            }
        }
        MethodState::Agem(buf) => buf.insert_task_quota(task.task_id, train, rng)?,
    }
    Ok(())
}

/// Multi-task reference: one optimizer run over the shuffled union of all
/// tasks' training data.
///
/// With `linear_lr_decay` the step scale decays linearly from 1 toward 0
/// across the run, which removes the constant-step noise floor so the
/// reference actually approaches the pooled optimum it stands for.
pub fn mtl_train(
    model: &mut LinearModel,
    opt_cfg: &crate::optim::ContinualOptConfig,
    tasks: &[Task],
    rng: &mut RngStream,
    epochs: usize,
    batch_size: usize,
    linear_lr_decay: bool,
) -> Result<()> {
    if epochs == 0 {
        return Err(invalid_argument("epochs must be positive"));
    }
    if batch_size == 0 {
        return Err(invalid_argument("batch_size must be positive"));
    }
    let pooled: Vec<&Example> = tasks.iter().flat_map(|t| t.train.iter()).collect();
    if pooled.is_empty() {
        return Err(invalid_argument("no training data across tasks"));
    }
    let batches_per_epoch = pooled.len().div_ceil(batch_size);
    let total_steps = (epochs * batches_per_epoch) as u64;
    let mut step_index = 0u64;
    let mut opt = ContinualOptimizer::new(opt_cfg.clone(), model.num_params())?;
    opt.begin_task();
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    let mut batch: Vec<&Example> = Vec::with_capacity(batch_size);
    for _ in 0..epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| pooled[i]));
            let (_, grad) = crate::linear::mse_loss_and_grad_refs(model, &batch)?;
            let lr_scale = if linear_lr_decay {
                // Stays in (0, 1]: step_index runs to total_steps - 1.
                crate::optim::lr_schedule_linear(step_index, 0, Some(total_steps))?
            } else {
                1.0
            };
            opt.step(model.params_mut(), &grad, lr_scale)?;
            step_index += 1;
        }
    }
    opt.end_task();
    Ok(())
}
