use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Matrix;

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.99;

/// Per-feature batch normalization `γ (x − μ) / √(σ² + ε) + β`.
///
/// Training mode standardizes by the batch mean and population variance and
/// folds them into exponential running averages; inference mode uses the
/// running averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    gamma: Vec<f64>,
    beta: Vec<f64>,
    epsilon: f64,
    momentum: f64,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub(crate) normalized: Matrix,
    pub(crate) inv_std: Vec<f64>,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            epsilon: DEFAULT_EPSILON,
            momentum: DEFAULT_MOMENTUM,
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
        }
    }

    /// Overrides ε. Zero is accepted for exact standardization checks; a
    /// zero-variance feature then fails in training mode.
    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::invalid(format!(
                "epsilon must be >= 0, got {epsilon}"
            )));
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    pub fn with_momentum(mut self, momentum: f64) -> Result<Self> {
        if !(momentum > 0.0 && momentum < 1.0) {
            return Err(Error::invalid(format!(
                "momentum must lie in (0, 1), got {momentum}"
            )));
        }
        self.momentum = momentum;
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn running_mean(&self) -> &[f64] {
        &self.running_mean
    }

    pub fn running_var(&self) -> &[f64] {
        &self.running_var
    }

    pub fn set_running_stats(&mut self, mean: Vec<f64>, var: Vec<f64>) -> Result<()> {
        if mean.len() != self.width() || var.len() != self.width() {
            return Err(Error::shape(
                "BatchNorm::set_running_stats",
                self.width(),
                mean.len(),
            ));
        }
        if var.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("running variance must be >= 0"));
        }
        self.running_mean = mean;
        self.running_var = var;
        Ok(())
    }

    pub fn params(&self) -> Vec<&[f64]> {
        vec![&self.gamma, &self.beta]
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.gamma, &mut self.beta]
    }

    pub fn param_count(&self) -> usize {
        2 * self.width()
    }

    fn check_width(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.width() {
            return Err(Error::shape("BatchNorm::forward", self.width(), x.cols()));
        }
        Ok(())
    }

    pub fn forward_train(&mut self, x: &Matrix) -> Result<(Matrix, BatchNormCache)> {
        self.check_width(x)?;
        if x.rows() < 2 {
            return Err(Error::invalid(format!(
                "training-mode batch normalization needs at least 2 samples, got {}",
                x.rows()
            )));
        }
        let n = x.rows() as f64;
        let mean = x.column_means();
        let mut var = vec![0.0; self.width()];
        for row in x.row_iter() {
            for ((v, &xi), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (xi - m) * (xi - m);
            }
        }
        for v in &mut var {
            *v /= n;
        }
        let mut inv_std = Vec::with_capacity(self.width());
        for &v in &var {
            let denom = v + self.epsilon;
            if denom <= 0.0 {
                return Err(Error::invalid(
                    "zero-variance feature with epsilon 0 in batch normalization",
                ));
            }
            inv_std.push(1.0 / denom.sqrt());
        }
        let mut normalized = x.clone();
        let mut out = x.clone();
        for r in 0..x.rows() {
            let nrow = normalized.row_mut(r);
            for j in 0..nrow.len() {
                nrow[j] = (nrow[j] - mean[j]) * inv_std[j];
            }
            let orow = out.row_mut(r);
            for j in 0..orow.len() {
                orow[j] = self.gamma[j] * normalized.get(r, j) + self.beta[j];
            }
        }
        let m = self.momentum;
        for j in 0..self.width() {
            self.running_mean[j] = m * self.running_mean[j] + (1.0 - m) * mean[j];
            self.running_var[j] = m * self.running_var[j] + (1.0 - m) * var[j];
        }
        Ok((
            out,
            BatchNormCache {
                normalized,
                inv_std,
            },
        ))
    }

    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        self.check_width(x)?;
        let scale: Vec<f64> = self
            .running_var
            .iter()
            .zip(&self.gamma)
            .map(|(v, g)| g / (v + self.epsilon).sqrt())
            .collect();
        let mut out = x.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            for j in 0..row.len() {
                row[j] = (row[j] - self.running_mean[j]) * scale[j] + self.beta[j];
            }
        }
        Ok(out)
    }

    /// Backward pass through the batch statistics.
    pub fn backward(
        &self,
        upstream: &Matrix,
        cache: &BatchNormCache,
    ) -> Result<(Matrix, Vec<Vec<f64>>)> {
        if upstream.shape() != cache.normalized.shape() || upstream.cols() != self.width() {
            return Err(Error::shape(
                "BatchNorm::backward",
                format!("{}x{}", cache.normalized.rows(), cache.normalized.cols()),
                format!("{}x{}", upstream.rows(), upstream.cols()),
            ));
        }
        let n = upstream.rows() as f64;
        let w = self.width();
        let mut dgamma = vec![0.0; w];
        let mut dbeta = vec![0.0; w];
        for (g, xh) in upstream.row_iter().zip(cache.normalized.row_iter()) {
            for j in 0..w {
                dgamma[j] += g[j] * xh[j];
                dbeta[j] += g[j];
            }
        }
        // dx = γ/(nσ) (n·g − Σg − x̂ Σ(g·x̂))
        let mut dx = upstream.clone();
        for r in 0..dx.rows() {
            let xh = cache.normalized.row(r);
            let row = dx.row_mut(r);
            for j in 0..w {
                row[j] = self.gamma[j] * cache.inv_std[j] / n
                    * (n * row[j] - dbeta[j] - xh[j] * dgamma[j]);
            }
        }
        Ok((dx, vec![dgamma, dbeta]))
    }
}
