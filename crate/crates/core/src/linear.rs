//! The learned model: linear regression under mean squared error.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_argument, Result};

/// A labelled example: input vector and scalar target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub x: Vec<f64>,
    pub y: f64,
}

impl Example {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Self { x, y }
    }
}

/// Linear model `f(x) = w·x (+ b)`.
///
/// Parameters live in one flat vector so optimizers can treat the model as
/// an opaque parameter block; when the bias is enabled it occupies the
/// last slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    theta: Vec<f64>,
    include_bias: bool,
}

impl LinearModel {
    pub fn zeros(input_dim: usize) -> Self {
        Self {
            theta: vec![0.0; input_dim],
            include_bias: false,
        }
    }

    pub fn zeros_with_bias(input_dim: usize) -> Self {
        Self {
            theta: vec![0.0; input_dim + 1],
            include_bias: true,
        }
    }

    pub fn from_weights(weights: Vec<f64>) -> Self {
        Self {
            theta: weights,
            include_bias: false,
        }
    }

    pub fn from_weights_and_bias(mut weights: Vec<f64>, bias: f64) -> Self {
        weights.push(bias);
        Self {
            theta: weights,
            include_bias: true,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.theta.len() - usize::from(self.include_bias)
    }

    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    pub fn include_bias(&self) -> bool {
        self.include_bias
    }

    /// The flat parameter vector (weights, then bias when enabled).
    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(invalid_argument(format!(
                "input has dimension {}, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(self.raw_predict(x))
    }

    pub(crate) fn raw_predict(&self, x: &[f64]) -> f64 {
        let d = self.input_dim();
        let mut acc = if self.include_bias { self.theta[d] } else { 0.0 };
        for (w, xi) in self.theta[..d].iter().zip(x) {
            acc += w * xi;
        }
        acc
    }

    /// Accumulate the gradient of `(f(x) - y)^2` scaled by `scale` into
    /// `grad`, returning the residual `f(x) - y`.
    pub(crate) fn accumulate_example_grad(&self, x: &[f64], y: f64, scale: f64, grad: &mut [f64]) -> f64 {
        let d = self.input_dim();
        let r = self.raw_predict(x) - y;
        let coeff = scale * 2.0 * r;
        for (g, xi) in grad[..d].iter_mut().zip(x) {
            *g += coeff * xi;
        }
        if self.include_bias {
            grad[d] += coeff;
        }
        r
    }

    fn check_batch(&self, batch: &[Example]) -> Result<()> {
        if batch.is_empty() {
            return Err(invalid_argument("batch must be non-empty"));
        }
        let d = self.input_dim();
        if let Some(ex) = batch.iter().find(|ex| ex.x.len() != d) {
            return Err(invalid_argument(format!(
                "example has dimension {}, model expects {d}",
                ex.x.len()
            )));
        }
        Ok(())
    }
}

/// Mean squared error over a batch together with its exact gradient.
///
/// `loss = mean (f(x) - y)^2`, `grad = mean 2 (f(x) - y) x` with the bias
/// component `mean 2 (f(x) - y)` when the model carries one.
pub fn mse_loss_and_grad(model: &LinearModel, batch: &[Example]) -> Result<(f64, Vec<f64>)> {
    model.check_batch(batch)?;
    let inv = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; model.num_params()];
    let mut loss = 0.0;
    for ex in batch {
        let r = model.accumulate_example_grad(&ex.x, ex.y, inv, &mut grad);
        loss += r * r;
    }
    Ok((loss * inv, grad))
}

/// [`mse_loss_and_grad`] over borrowed examples; used by training loops
/// that assemble batches by reference.
pub(crate) fn mse_loss_and_grad_refs(
    model: &LinearModel,
    batch: &[&Example],
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(invalid_argument("batch must be non-empty"));
    }
    let d = model.input_dim();
    if let Some(ex) = batch.iter().find(|ex| ex.x.len() != d) {
        return Err(invalid_argument(format!(
            "example has dimension {}, model expects {d}",
            ex.x.len()
        )));
    }
    let inv = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; model.num_params()];
    let mut loss = 0.0;
    for ex in batch {
        let r = model.accumulate_example_grad(&ex.x, ex.y, inv, &mut grad);
        loss += r * r;
    }
    Ok((loss * inv, grad))
}

/// Mean squared error over a batch, without the gradient.
pub fn mse_loss(model: &LinearModel, batch: &[Example]) -> Result<f64> {
    model.check_batch(batch)?;
    let inv = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for ex in batch {
        let r = model.raw_predict(&ex.x) - ex.y;
        loss += r * r;
    }
    Ok(loss * inv)
}
