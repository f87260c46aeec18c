//! Fixed random MLPs used as per-task input generators.
//!
//! A generator maps a latent vector to an input vector through tanh hidden
//! layers and an identity output layer. Generators are frozen at creation
//! and never trained.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_argument, Result};
use crate::rng::{sample_gaussian_vector, RngStream};

/// One dense layer, weights stored row-major (`rows x cols`).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Layer {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut out = self.biases.clone();
        for (r, acc) in out.iter_mut().enumerate() {
            let row = &self.weights[r * self.cols..(r + 1) * self.cols];
            for (w, x) in row.iter().zip(input) {
                *acc += w * x;
            }
        }
        out
    }
}

/// A frozen multi-layer perceptron with tanh hidden activations and an
/// identity output layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpGenerator {
    input_dim: usize,
    output_dim: usize,
    layers: Vec<Layer>,
}

impl MlpGenerator {
    /// Build a generator with weights drawn from N(0, 1/fan_in) and zero
    /// biases.
    pub fn random(
        rng: &mut RngStream,
        input_dim: usize,
        hidden_dims: &[usize],
        output_dim: usize,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden_dims.iter().any(|&h| h == 0) {
            return Err(invalid_argument("all MLP dimensions must be positive"));
        }
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden_dims);
        dims.push(output_dim);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for pair in dims.windows(2) {
            let (cols, rows) = (pair[0], pair[1]);
            let std = (1.0 / cols as f64).sqrt();
            let weights = sample_gaussian_vector(rng, rows * cols, 0.0, std)?;
            layers.push(Layer {
                rows,
                cols,
                weights,
                biases: vec![0.0; rows],
            });
        }
        Ok(Self {
            input_dim,
            output_dim,
            layers,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Deterministic forward pass; tanh on every layer but the last.
    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.input_dim {
            return Err(invalid_argument(format!(
                "input has dimension {}, generator expects {}",
                z.len(),
                self.input_dim
            )));
        }
        let last = self.layers.len() - 1;
        let mut h = z.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h);
            if i != last {
                for v in &mut h {
                    *v = v.tanh();
                }
            }
        }
        Ok(h)
    }
}
