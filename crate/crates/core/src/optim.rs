//! Adam/AdamW with cross-task moment policies and a step-size ramp-in.
//!
//! A continual run visits tasks in order; [`ContinualOptimizer::begin_task`]
//! and [`ContinualOptimizer::end_task`] bracket each task and decide what
//! happens to the first/second moments at the boundary:
//!
//! - [`MomentMode::Reset`]: the moment restarts from zero (a fresh
//!   optimizer per task).
//! - [`MomentMode::Carry`]: the live exponential moving average survives
//!   the boundary; bias correction keeps counting with a global step so
//!   stale moments are not re-amplified.
//! - [`MomentMode::TaskAverage`]: the in-task moment restarts, but a
//!   reserve holds the step-count-weighted average of every completed
//!   task's final bias-corrected moment. Each update mixes the in-task
//!   estimate with the reserve: `v' = (t*v̂ + c*v_c) / (t + c)` where `t`
//!   is the in-task step count and `c` the steps folded into the reserve.
//!
//! Independently of the moment policy, `lr_adjust` multiplies each update
//! by `1 - beta3^t`, suppressing the large sign-like first steps of Adam
//! at the start of every task.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_argument, Error, Result};

/// Policy for a moment vector at task boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMode {
    /// Zero the moment at each task start.
    Reset,
    /// Keep the running moment across the boundary.
    Carry,
    /// Reset the live moment but mix updates with a task-averaged reserve.
    TaskAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinualOptConfig {
    /// Base learning rate.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    /// Ramp-in rate for the `1 - beta3^t` step-size multiplier.
    #[serde(default = "default_beta3")]
    pub beta3: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Decoupled weight decay; 0 recovers plain Adam.
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_first_mode")]
    pub first_moment_mode: MomentMode,
    #[serde(default = "default_second_mode")]
    pub second_moment_mode: MomentMode,
    /// Apply the `1 - beta3^t` multiplier at task starts.
    #[serde(default = "default_true")]
    pub lr_adjust: bool,
}

fn default_alpha() -> f64 {
    1e-2
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_beta3() -> f64 {
    0.9
}
fn default_epsilon() -> f64 {
    1e-8
}
fn default_first_mode() -> MomentMode {
    MomentMode::Reset
}
fn default_second_mode() -> MomentMode {
    MomentMode::TaskAverage
}
fn default_true() -> bool {
    true
}

impl Default for ContinualOptConfig {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            beta3: default_beta3(),
            epsilon: default_epsilon(),
            weight_decay: 0.0,
            first_moment_mode: default_first_mode(),
            second_moment_mode: default_second_mode(),
            lr_adjust: true,
        }
    }
}

impl ContinualOptConfig {
    /// Plain Adam: both moments reset per task, no ramp-in.
    pub fn plain_adam(alpha: f64) -> Self {
        Self {
            alpha,
            first_moment_mode: MomentMode::Reset,
            second_moment_mode: MomentMode::Reset,
            lr_adjust: false,
            ..Self::default()
        }
    }

    pub fn with_modes(mut self, first: MomentMode, second: MomentMode, lr_adjust: bool) -> Self {
        self.first_moment_mode = first;
        self.second_moment_mode = second;
        self.lr_adjust = lr_adjust;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(invalid_argument(format!("alpha must be positive, got {}", self.alpha)));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2), ("beta3", self.beta3)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(invalid_argument(format!("{name} must lie in [0, 1), got {beta}")));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(invalid_argument(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(invalid_argument(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Full optimizer state; serializes to JSON with exact binary64 values
/// for checkpoint/restore.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinualOptState {
    /// First moment (EMA of gradients).
    pub m: Vec<f64>,
    /// Second moment (EMA of squared gradients), componentwise >= 0.
    pub v: Vec<f64>,
    /// Steps taken within the current task.
    pub t: u64,
    /// Cumulative steps across all tasks; drives bias correction for
    /// carried moments only.
    pub global_t: u64,
    /// Task-averaged first-moment reserve.
    pub m_reserve: Vec<f64>,
    /// Task-averaged second-moment reserve, componentwise >= 0.
    pub v_reserve: Vec<f64>,
    /// Steps folded into the reserves (sum of completed tasks' final `t`).
    pub reserve_steps: u64,
}

impl ContinualOptState {
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            global_t: 0,
            m_reserve: vec![0.0; dim],
            v_reserve: vec![0.0; dim],
            reserve_steps: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }
}

/// Mix an in-task bias-corrected moment with the task-averaged reserve.
/// With an empty reserve the in-task estimate passes through unchanged.
fn task_average_mix(in_task_steps: f64, hat: f64, reserve_steps: f64, reserve: f64) -> f64 {
    if reserve_steps == 0.0 {
        hat
    } else {
        (in_task_steps * hat + reserve_steps * reserve) / (in_task_steps + reserve_steps)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinualOptimizer {
    pub cfg: ContinualOptConfig,
    pub state: ContinualOptState,
}

impl ContinualOptimizer {
    pub fn new(cfg: ContinualOptConfig, dim: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            state: ContinualOptState::new(dim),
        })
    }

    /// Mark a task boundary before the first step of the new task.
    ///
    /// Always restarts the in-task step counter. Each moment is zeroed
    /// unless its mode is [`MomentMode::Carry`]; reserves, the reserve
    /// step count, and the global step counter are untouched.
    pub fn begin_task(&mut self) {
        self.state.t = 0;
        if self.cfg.first_moment_mode != MomentMode::Carry {
            self.state.m.iter_mut().for_each(|x| *x = 0.0);
        }
        if self.cfg.second_moment_mode != MomentMode::Carry {
            self.state.v.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// One update of `theta` from `grad`, scaled by `lr_scale` in (0, 1].
    ///
    /// Rejects non-finite gradients without touching any state.
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64], lr_scale: f64) -> Result<()> {
        let dim = self.state.dim();
        if theta.len() != dim || grad.len() != dim {
            return Err(invalid_argument(format!(
                "parameter/gradient dimension {}/{} does not match state dimension {dim}",
                theta.len(),
                grad.len()
            )));
        }
        if !(lr_scale > 0.0 && lr_scale <= 1.0) {
            return Err(invalid_argument(format!(
                "lr_scale must lie in (0, 1], got {lr_scale}"
            )));
        }
        if let Some(g) = grad.iter().find(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient component {g}")));
        }

        let cfg = &self.cfg;
        let s = &mut self.state;
        s.t += 1;
        s.global_t += 1;
        let t = s.t as f64;
        let c = s.reserve_steps as f64;
        // Carried moments keep counting bias correction with the global
        // step; reset and task-averaged moments restart it per task.
        let tau1 = if cfg.first_moment_mode == MomentMode::Carry {
            s.global_t as f64
        } else {
            t
        };
        let tau2 = if cfg.second_moment_mode == MomentMode::Carry {
            s.global_t as f64
        } else {
            t
        };
        let bc1 = 1.0 - cfg.beta1.powf(tau1);
        let bc2 = 1.0 - cfg.beta2.powf(tau2);
        let ramp = if cfg.lr_adjust {
            1.0 - cfg.beta3.powf(t)
        } else {
            1.0
        };
        let scale = ramp * lr_scale * cfg.alpha;
        let decay = lr_scale * cfg.weight_decay;

        for i in 0..dim {
            let g = grad[i];
            s.m[i] = cfg.beta1 * s.m[i] + (1.0 - cfg.beta1) * g;
            s.v[i] = cfg.beta2 * s.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = s.m[i] / bc1;
            let v_hat = s.v[i] / bc2;
            let numer = if cfg.first_moment_mode == MomentMode::TaskAverage {
                task_average_mix(t, m_hat, c, s.m_reserve[i])
            } else {
                m_hat
            };
            let denom = if cfg.second_moment_mode == MomentMode::TaskAverage {
                task_average_mix(t, v_hat, c, s.v_reserve[i])
            } else {
                v_hat
            };
            theta[i] -= scale * numer / (denom.sqrt() + cfg.epsilon) + decay * theta[i];
        }
        Ok(())
    }

    /// Fold the finished task's final bias-corrected moments into the
    /// task-averaged reserves. A no-op unless some mode is
    /// [`MomentMode::TaskAverage`] and at least one step was taken.
    pub fn end_task(&mut self) {
        let cfg = &self.cfg;
        let s = &mut self.state;
        let first_ta = cfg.first_moment_mode == MomentMode::TaskAverage;
        let second_ta = cfg.second_moment_mode == MomentMode::TaskAverage;
        if s.t == 0 || (!first_ta && !second_ta) {
            return;
        }
        let t = s.t as f64;
        let c = s.reserve_steps as f64;
        let bc1 = 1.0 - cfg.beta1.powf(t);
        let bc2 = 1.0 - cfg.beta2.powf(t);
        for i in 0..s.m.len() {
            if first_ta {
                let m_hat = s.m[i] / bc1;
                s.m_reserve[i] = task_average_mix(t, m_hat, c, s.m_reserve[i]);
            }
            if second_ta {
                let v_hat = s.v[i] / bc2;
                s.v_reserve[i] = task_average_mix(t, v_hat, c, s.v_reserve[i]);
            }
        }
        s.reserve_steps += s.t;
    }

    pub fn state_to_json(&self) -> String {
        serde_json::to_string(self).expect("optimizer state serializes")
    }

    pub fn state_from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Linear warmup from 0 to 1 over `warmup_steps`, then linear decay to 0
/// at `total_steps`. `total_steps = None` means no decay phase; with
/// `warmup_steps = 0` the schedule is constant 1.
pub fn lr_schedule_linear(step: u64, warmup_steps: u64, total_steps: Option<u64>) -> Result<f64> {
    if let Some(total) = total_steps {
        if total < warmup_steps {
            return Err(invalid_argument(format!(
                "total_steps {total} must be >= warmup_steps {warmup_steps}"
            )));
        }
        if step > total {
            return Err(invalid_argument(format!(
                "step {step} lies beyond total_steps {total}"
            )));
        }
    }
    if step <= warmup_steps {
        return Ok(if warmup_steps == 0 {
            1.0
        } else {
            step as f64 / warmup_steps as f64
        });
    }
    Ok(match total_steps {
        None => 1.0,
        Some(total) => (total - step) as f64 / (total - warmup_steps) as f64,
    })
}
