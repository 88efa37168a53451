//! Per-channel batch normalization over all face rows of a batch.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BnMode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub eps: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub mode: BnMode,
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
    /// Batch mean and unbiased variance (train mode), used to update the
    /// running statistics.
    pub batch_mean: Array1<f64>,
    pub batch_var: Array1<f64>,
}

impl BatchNorm {
    pub fn new(channels: usize, eps: f64, momentum: f64) -> Self {
        BatchNorm {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            eps,
            momentum,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Normalizes `x` without touching the running statistics; train-mode
    /// results carry the batch statistics in the cache so the caller can
    /// apply them with [`BatchNorm::update_running`].
    pub fn forward(&self, x: &Array2<f64>, mode: BnMode) -> Result<(Array2<f64>, BatchNormCache)> {
        let (n, c) = x.dim();
        if c != self.channels() {
            return Err(Error::shape(format!(
                "batch norm has {} channels, input has {c}",
                self.channels()
            )));
        }
        let (mean, var, batch_var) = match mode {
            BnMode::Train => {
                if n < 2 {
                    return Err(Error::shape(format!(
                        "train-mode batch norm needs at least 2 rows, got {n}"
                    )));
                }
                let mean = x.mean_axis(Axis(0)).unwrap();
                let centered = x - &mean;
                let var = (&centered * &centered).mean_axis(Axis(0)).unwrap();
                let unbiased = &var * (n as f64 / (n - 1) as f64);
                (mean, var, unbiased)
            }
            BnMode::Eval => (
                self.running_mean.clone(),
                self.running_var.clone(),
                self.running_var.clone(),
            ),
        };
        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let xhat = (x - &mean) * &inv_std;
        let out = &xhat * &self.gamma + &self.beta;
        Ok((
            out,
            BatchNormCache {
                mode,
                xhat,
                inv_std,
                batch_mean: mean,
                batch_var,
            },
        ))
    }

    pub fn update_running(&mut self, batch_mean: &Array1<f64>, batch_var: &Array1<f64>) {
        let m = self.momentum;
        self.running_mean = &self.running_mean * (1.0 - m) + batch_mean * m;
        self.running_var = &self.running_var * (1.0 - m) + batch_var * m;
    }

    /// Returns `(grad_input, grad_gamma, grad_beta)`.
    pub fn backward(
        &self,
        cache: &BatchNormCache,
        upstream: &Array2<f64>,
    ) -> Result<(Array2<f64>, Array1<f64>, Array1<f64>)> {
        if upstream.dim() != cache.xhat.dim() {
            return Err(Error::shape("batch norm upstream gradient shape"));
        }
        let grad_gamma = (upstream * &cache.xhat).sum_axis(Axis(0));
        let grad_beta = upstream.sum_axis(Axis(0));
        let dxhat = upstream * &self.gamma;
        let grad_x = match cache.mode {
            BnMode::Eval => dxhat * &cache.inv_std,
            BnMode::Train => {
                let n = upstream.nrows() as f64;
                let sum_d = dxhat.sum_axis(Axis(0));
                let sum_dx = (&dxhat * &cache.xhat).sum_axis(Axis(0));
                let inner = dxhat * n - &sum_d - &cache.xhat * &sum_dx;
                inner * &(&cache.inv_std / n)
            }
        };
        Ok((grad_x, grad_gamma, grad_beta))
    }
}
