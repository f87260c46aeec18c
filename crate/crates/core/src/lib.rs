//! Continual-learning optimization laboratory.
//!
//! The crate trains a linear regressor over long sequences of small tasks
//! and measures how much earlier tasks are forgotten. It provides:
//!
//! - [`optim`]: Adam/AdamW with selectable cross-task moment policies
//!   (reset, carry, task-averaged reserve) and a step-size ramp-in at
//!   task boundaries.
//! - [`methods`]: continual-learning strategies — finetune, EWC, EWC++,
//!   reservoir replay, DER++, A-GEM — plus a pooled multi-task reference.
//! - [`synth`]: seeded generation of long-tail task sequences in the
//!   `same` / `perturb` / `shift` regimes.
//! - [`metrics`]: score-matrix bookkeeping and the RP/LP/BWT/FGT metrics.
//! - [`harness`]: config-driven experiment runner with CSV/JSON artifacts.

pub mod error;
pub mod harness;
pub mod linear;
pub mod metrics;
pub mod methods;
pub mod mlp;
pub mod optim;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use linear::{mse_loss, mse_loss_and_grad, Example, LinearModel};
pub use metrics::{MetricSummary, ScoreMatrix};
pub use methods::{MethodConfig, MethodKind, MethodState};
pub use mlp::MlpGenerator;
pub use optim::{ContinualOptConfig, ContinualOptState, ContinualOptimizer, MomentMode};
pub use rng::RngStream;
pub use synth::{Regime, SynthConfig, Task, TaskOrdering, TaskSequence};
