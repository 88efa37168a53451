//! The W0-only convolution: a per-face affine map with no neighbor terms.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::xavier_uniform;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `fan_out x fan_in`
    pub weight: Array2<f64>,
    pub bias: Option<Array1<f64>>,
}

impl Linear {
    pub fn zeros(fan_in: usize, fan_out: usize, bias: bool) -> Self {
        Linear {
            weight: Array2::zeros((fan_out, fan_in)),
            bias: bias.then(|| Array1::zeros(fan_out)),
        }
    }

    pub fn init<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize, bias: bool, gain: f64) -> Self {
        Linear {
            weight: xavier_uniform(rng, fan_out, fan_in, gain),
            bias: bias.then(|| Array1::zeros(fan_out)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.fan_in(), self.fan_out(), self.bias.is_some())
    }

    pub fn fan_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.fan_in() {
            return Err(Error::shape(format!(
                "linear layer expects {} channels, got {}",
                self.fan_in(),
                x.ncols()
            )));
        }
        let mut out = x.dot(&self.weight.t());
        if let Some(b) = &self.bias {
            out += b;
        }
        Ok(out)
    }

    /// Returns `(grad_input, grad_params)`.
    pub fn backward(&self, x: &Array2<f64>, upstream: &Array2<f64>) -> Result<(Array2<f64>, Linear)> {
        if upstream.dim() != (x.nrows(), self.fan_out()) {
            return Err(Error::shape(format!(
                "upstream gradient {:?} does not match {:?}",
                upstream.dim(),
                (x.nrows(), self.fan_out())
            )));
        }
        let grads = Linear {
            weight: upstream.t().dot(x),
            bias: self.bias.as_ref().map(|_| upstream.sum_axis(Axis(0))),
        };
        Ok((upstream.dot(&self.weight), grads))
    }
}
