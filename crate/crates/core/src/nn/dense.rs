use serde::{Deserialize, Serialize};

use super::Activation;
use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::rng::RngState;

/// Fully connected layer `activation(x · W + b)` with `W` shaped `in × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    weights: Matrix,
    bias: Vec<f64>,
    activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    pub(crate) input: Matrix,
    pub(crate) pre: Matrix,
    pub(crate) output: Matrix,
}

impl DenseCache {
    pub fn pre_activation(&self) -> &Matrix {
        &self.pre
    }
}

/// Glorot-uniform draw for an `inputs × outputs` weight matrix.
fn glorot_uniform(inputs: usize, outputs: usize, rng: &mut RngState) -> Matrix {
    let limit = (6.0 / (inputs + outputs) as f64).sqrt();
    Matrix::new(
        inputs,
        outputs,
        rng.uniform_vec(inputs * outputs, -limit, limit),
    )
    .expect("finite glorot draw")
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn new(inputs: usize, outputs: usize, activation: Activation, rng: &mut RngState) -> Self {
        Self {
            weights: glorot_uniform(inputs, outputs, rng),
            bias: vec![0.0; outputs],
            activation,
        }
    }

    pub fn from_parts(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.cols() {
            return Err(Error::shape(
                "Dense::from_parts",
                weights.cols(),
                bias.len(),
            ));
        }
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("Dense bias"));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn inputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn params(&self) -> Vec<&[f64]> {
        vec![self.weights.data(), &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weights.data_mut(), &mut self.bias]
    }

    pub fn param_count(&self) -> usize {
        self.weights.data().len() + self.bias.len()
    }

    fn check_width(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.inputs() {
            return Err(Error::shape("Dense::forward", self.inputs(), x.cols()));
        }
        Ok(())
    }

    fn affine(&self, x: &Matrix) -> Result<Matrix> {
        self.check_width(x)?;
        let mut pre = x.matmul(&self.weights)?;
        pre.add_row_vector(&self.bias)?;
        Ok(pre)
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, DenseCache)> {
        let pre = self.affine(x)?;
        let output = self.activation.apply(&pre);
        let cache = DenseCache {
            input: x.clone(),
            pre,
            output: output.clone(),
        };
        Ok((output, cache))
    }

    /// Forward pass without building a cache.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.activation.apply(&self.affine(x)?))
    }

    pub fn backward(
        &self,
        upstream: &Matrix,
        cache: &DenseCache,
    ) -> Result<(Matrix, Vec<Vec<f64>>)> {
        self.backward_with(upstream, cache, None)
    }

    /// Backward pass, optionally adding contractive-penalty terms: an extra
    /// gradient on the pre-activation and a direct weight gradient.
    pub(crate) fn backward_with(
        &self,
        upstream: &Matrix,
        cache: &DenseCache,
        extra: Option<(&Matrix, &Matrix)>,
    ) -> Result<(Matrix, Vec<Vec<f64>>)> {
        if upstream.shape() != cache.output.shape() || cache.input.cols() != self.inputs() {
            return Err(Error::shape(
                "Dense::backward",
                format!("{}x{}", cache.output.rows(), cache.output.cols()),
                format!("{}x{}", upstream.rows(), upstream.cols()),
            ));
        }
        let mut dpre = self
            .activation
            .backward(&cache.pre, &cache.output, upstream);
        if let Some((extra_pre, _)) = extra {
            dpre.add_assign(extra_pre)?;
        }
        let mut dw = cache.input.matmul_tn(&dpre)?;
        if let Some((_, extra_w)) = extra {
            dw.add_assign(extra_w)?;
        }
        let db = dpre.column_sums();
        let dx = dpre.matmul_nt(&self.weights)?;
        Ok((dx, vec![dw.into_data(), db]))
    }

    fn column_norms_sq(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.outputs()];
        for row in self.weights.row_iter() {
            for (cj, w) in c.iter_mut().zip(row) {
                *cj += w * w;
            }
        }
        c
    }

    fn ensure_elementwise(&self) -> Result<()> {
        if !self.activation.is_elementwise() {
            return Err(Error::invalid(format!(
                "contractive penalty needs an elementwise activation, found {}",
                self.activation
            )));
        }
        Ok(())
    }

    /// Batch mean of the squared Frobenius norm of `∂output/∂input`, given
    /// the layer's pre-activations. For an elementwise activation this is
    /// `Σ_j a'(z_j)² Σ_i W_ij²` per sample.
    pub fn jacobian_frobenius_sq(&self, pre: &Matrix) -> Result<f64> {
        self.ensure_elementwise()?;
        if pre.cols() != self.outputs() || pre.rows() == 0 {
            return Err(Error::shape(
                "jacobian_frobenius_sq",
                self.outputs(),
                pre.cols(),
            ));
        }
        let c = self.column_norms_sq();
        let total: f64 = pre
            .row_iter()
            .map(|z| {
                z.iter()
                    .zip(&c)
                    .map(|(&zj, cj)| self.activation.derivative(zj).powi(2) * cj)
                    .sum::<f64>()
            })
            .sum();
        Ok(total / pre.rows() as f64)
    }

    /// Gradients of `scale · jacobian_frobenius_sq(pre)`: with respect to the
    /// pre-activation (to be chained through `x · W + b`) and the direct
    /// dependence on `W`.
    pub(crate) fn contractive_grads(&self, pre: &Matrix, scale: f64) -> Result<(Matrix, Matrix)> {
        self.ensure_elementwise()?;
        let n = pre.rows() as f64;
        let c = self.column_norms_sq();
        let mut dpre = Matrix::zeros(pre.rows(), pre.cols());
        let mut deriv_sq = vec![0.0; self.outputs()];
        for r in 0..pre.rows() {
            let z = pre.row(r);
            let d = dpre.row_mut(r);
            for j in 0..z.len() {
                let a1 = self.activation.derivative(z[j]);
                let a2 = self.activation.second_derivative(z[j]);
                d[j] = scale * 2.0 * a1 * a2 * c[j] / n;
                deriv_sq[j] += a1 * a1;
            }
        }
        let mut dw = self.weights.clone();
        for row in dw.data_mut().chunks_exact_mut(self.outputs().max(1)) {
            for (w, s) in row.iter_mut().zip(&deriv_sq) {
                *w *= scale * 2.0 * s / n;
            }
        }
        Ok((dpre, dw))
    }
}
