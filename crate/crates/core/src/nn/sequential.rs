use serde::{Deserialize, Serialize};

use super::{Layer, LayerCache, Mode};
use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::rng::RngState;

/// An ordered stack of layers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sequential {
    layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn push(&mut self, layer: Layer) {
        self.layers.push(layer);
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn forward(
        &mut self,
        x: &Matrix,
        mode: Mode,
        rng: &mut RngState,
    ) -> Result<(Matrix, Vec<LayerCache>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &mut self.layers {
            let (next, cache) = layer.forward(&h, mode, rng)?;
            caches.push(cache);
            h = next;
        }
        Ok((h, caches))
    }

    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.infer(&h)?;
        }
        Ok(h)
    }

    /// Sum over dense layers of the batch-mean squared Jacobian norm, read
    /// from the pre-activations recorded during `forward`.
    pub fn contractive_penalty(&self, caches: &[LayerCache]) -> Result<f64> {
        self.check_caches(caches)?;
        let mut total = 0.0;
        for (layer, cache) in self.layers.iter().zip(caches) {
            if let (Layer::Dense(d), LayerCache::Dense(c)) = (layer, cache) {
                total += d.jacobian_frobenius_sq(&c.pre)?;
            }
        }
        Ok(total)
    }

    /// Backpropagates `upstream`. With `contractive_scale > 0` the gradient of
    /// `contractive_scale · contractive_penalty` is added. Returns the input
    /// gradient and the parameter gradients in `params()` order.
    pub fn backward(
        &self,
        upstream: &Matrix,
        caches: &[LayerCache],
        contractive_scale: f64,
    ) -> Result<(Matrix, Vec<Vec<f64>>)> {
        self.check_caches(caches)?;
        let mut grad = upstream.clone();
        let mut per_layer: Vec<Vec<Vec<f64>>> = Vec::with_capacity(self.layers.len());
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            let (dx, g) = match (layer, cache) {
                (Layer::Dense(d), LayerCache::Dense(c)) if contractive_scale > 0.0 => {
                    let (dpre, dw) = d.contractive_grads(&c.pre, contractive_scale)?;
                    d.backward_with(&grad, c, Some((&dpre, &dw)))?
                }
                _ => layer.backward(&grad, cache)?,
            };
            per_layer.push(g);
            grad = dx;
        }
        per_layer.reverse();
        Ok((grad, per_layer.into_iter().flatten().collect()))
    }

    fn check_caches(&self, caches: &[LayerCache]) -> Result<()> {
        if caches.len() != self.layers.len() {
            return Err(Error::shape(
                "Sequential caches",
                self.layers.len(),
                caches.len(),
            ));
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }
}
