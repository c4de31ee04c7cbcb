use serde::{Deserialize, Serialize};

use super::{BatchNorm, BatchNormCache, Dense, DenseCache, NoiseCache, NoiseLayer};
use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::rng::RngState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Training,
    Inference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Dense(Dense),
    BatchNorm(BatchNorm),
    Noise(NoiseLayer),
}

#[derive(Debug, Clone)]
pub enum LayerCache {
    Dense(DenseCache),
    BatchNorm(BatchNormCache),
    Noise(NoiseCache),
    /// Inference-mode pass; nothing to backpropagate.
    Frozen,
}

impl Layer {
    pub fn forward(
        &mut self,
        x: &Matrix,
        mode: Mode,
        rng: &mut RngState,
    ) -> Result<(Matrix, LayerCache)> {
        match (self, mode) {
            (Layer::Dense(d), Mode::Training) => {
                let (y, c) = d.forward(x)?;
                Ok((y, LayerCache::Dense(c)))
            }
            (Layer::Dense(d), Mode::Inference) => {
                // The cache is kept so penalties can read pre-activations.
                let (y, c) = d.forward(x)?;
                Ok((y, LayerCache::Dense(c)))
            }
            (Layer::BatchNorm(b), Mode::Training) => {
                let (y, c) = b.forward_train(x)?;
                Ok((y, LayerCache::BatchNorm(c)))
            }
            (Layer::BatchNorm(b), Mode::Inference) => Ok((b.infer(x)?, LayerCache::Frozen)),
            (Layer::Noise(n), Mode::Training) => {
                let (y, c) = n.forward_train(x, rng)?;
                Ok((y, LayerCache::Noise(c)))
            }
            (Layer::Noise(_), Mode::Inference) => Ok((x.clone(), LayerCache::Frozen)),
        }
    }

    /// Inference-mode forward without caches.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Layer::Dense(d) => d.infer(x),
            Layer::BatchNorm(b) => b.infer(x),
            Layer::Noise(_) => Ok(x.clone()),
        }
    }

    pub fn backward(
        &self,
        upstream: &Matrix,
        cache: &LayerCache,
    ) -> Result<(Matrix, Vec<Vec<f64>>)> {
        match (self, cache) {
            (Layer::Dense(d), LayerCache::Dense(c)) => d.backward(upstream, c),
            (Layer::BatchNorm(b), LayerCache::BatchNorm(c)) => b.backward(upstream, c),
            (Layer::Noise(n), LayerCache::Noise(c)) => Ok((n.backward(upstream, c)?, vec![])),
            (layer, cache) => Err(Error::invalid(format!(
                "cache {} does not belong to a {} layer",
                cache.name(),
                layer.name()
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::BatchNorm(_) => "batch_norm",
            Layer::Noise(_) => "noise",
        }
    }

    pub fn params(&self) -> Vec<&[f64]> {
        match self {
            Layer::Dense(d) => d.params(),
            Layer::BatchNorm(b) => b.params(),
            Layer::Noise(_) => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::Dense(d) => d.params_mut(),
            Layer::BatchNorm(b) => b.params_mut(),
            Layer::Noise(_) => vec![],
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Dense(d) => d.param_count(),
            Layer::BatchNorm(b) => b.param_count(),
            Layer::Noise(_) => 0,
        }
    }
}

impl LayerCache {
    fn name(&self) -> &'static str {
        match self {
            LayerCache::Dense(_) => "dense",
            LayerCache::BatchNorm(_) => "batch_norm",
            LayerCache::Noise(_) => "noise",
            LayerCache::Frozen => "inference",
        }
    }
}
