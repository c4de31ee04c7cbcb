use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::rng::RngState;

/// Training-time corruption. Every kind is the identity at inference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    /// Zeroes each entry with probability `rate`; survivors are divided by
    /// `1 − rate` so the expectation is unchanged.
    BernoulliDropout { rate: f64 },
    /// Multiplies each entry by a draw from N(1, sd²).
    GaussianDropout { sd: f64 },
    /// Adds a draw from N(0, sd²) to each entry.
    AdditiveGaussian { sd: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseLayer {
    kind: NoiseKind,
}

/// Multiplicative noise keeps its factors for the backward pass; additive
/// noise has unit Jacobian and keeps nothing.
#[derive(Debug, Clone)]
pub struct NoiseCache {
    pub(crate) factors: Option<Matrix>,
}

/// Gaussian-dropout standard deviation equivalent to a Bernoulli rate,
/// `√(rate / (1 − rate))`.
pub fn gaussian_sd_for_rate(rate: f64) -> f64 {
    (rate / (1.0 - rate)).sqrt()
}

impl NoiseLayer {
    pub fn new(kind: NoiseKind) -> Result<Self> {
        match kind {
            NoiseKind::BernoulliDropout { rate } if !(0.0..1.0).contains(&rate) => Err(
                Error::invalid(format!("dropout rate must lie in [0, 1), got {rate}")),
            ),
            NoiseKind::GaussianDropout { sd } | NoiseKind::AdditiveGaussian { sd }
                if !(sd >= 0.0) || !sd.is_finite() =>
            {
                Err(Error::invalid(format!("noise sd must be >= 0, got {sd}")))
            }
            _ => Ok(Self { kind }),
        }
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    /// True when the layer cannot change its input even in training mode.
    pub fn is_inert(&self) -> bool {
        match self.kind {
            NoiseKind::BernoulliDropout { rate } => rate == 0.0,
            NoiseKind::GaussianDropout { sd } | NoiseKind::AdditiveGaussian { sd } => sd == 0.0,
        }
    }

    pub fn forward_train(&self, x: &Matrix, rng: &mut RngState) -> Result<(Matrix, NoiseCache)> {
        if self.is_inert() {
            return Ok((x.clone(), NoiseCache { factors: None }));
        }
        let n = x.data().len();
        match self.kind {
            NoiseKind::BernoulliDropout { rate } => {
                let keep = 1.0 - rate;
                let mask = rng.sample_bernoulli_mask(n, keep)?;
                let factors =
                    Matrix::new(x.rows(), x.cols(), mask.iter().map(|m| m / keep).collect())?;
                let out = x.zip_map(&factors, |a, f| a * f)?;
                Ok((
                    out,
                    NoiseCache {
                        factors: Some(factors),
                    },
                ))
            }
            NoiseKind::GaussianDropout { sd } => {
                let factors = Matrix::new(x.rows(), x.cols(), rng.sample_gaussian(n, 1.0, sd)?)?;
                let out = x.zip_map(&factors, |a, f| a * f)?;
                Ok((
                    out,
                    NoiseCache {
                        factors: Some(factors),
                    },
                ))
            }
            NoiseKind::AdditiveGaussian { sd } => {
                let noise = Matrix::new(x.rows(), x.cols(), rng.sample_gaussian(n, 0.0, sd)?)?;
                let out = x.zip_map(&noise, |a, e| a + e)?;
                Ok((out, NoiseCache { factors: None }))
            }
        }
    }

    pub fn backward(&self, upstream: &Matrix, cache: &NoiseCache) -> Result<Matrix> {
        match &cache.factors {
            Some(f) => upstream.zip_map(f, |g, f| g * f),
            None => Ok(upstream.clone()),
        }
    }
}
