use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
    Softplus,
    Sigmoid,
    Softmax,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    // ln(1 + e^z) without overflow for large |z|.
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl Activation {
    /// Everything except softmax acts on each entry independently.
    pub fn is_elementwise(self) -> bool {
        !matches!(self, Activation::Softmax)
    }

    #[inline]
    pub fn scalar(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
            Activation::Softplus => softplus(z),
            Activation::Sigmoid => sigmoid(z),
            Activation::Softmax => unreachable!("softmax is not elementwise"),
        }
    }

    /// First derivative of an elementwise activation.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
            Activation::Softplus => sigmoid(z),
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Softmax => unreachable!("softmax is not elementwise"),
        }
    }

    /// Second derivative of an elementwise activation (zero almost everywhere
    /// for the piecewise-linear ones).
    #[inline]
    pub fn second_derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu | Activation::Linear => 0.0,
            Activation::Softplus => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s) * (1.0 - 2.0 * s)
            }
            Activation::Softmax => unreachable!("softmax is not elementwise"),
        }
    }

    pub fn apply(self, pre: &Matrix) -> Matrix {
        match self {
            Activation::Linear => pre.clone(),
            Activation::Softmax => softmax_rows(pre),
            _ => pre.map(|z| self.scalar(z)),
        }
    }

    /// Gradient with respect to the pre-activation, given the forward
    /// pre-activation, its output and the upstream gradient.
    pub fn backward(self, pre: &Matrix, out: &Matrix, upstream: &Matrix) -> Matrix {
        match self {
            Activation::Linear => upstream.clone(),
            Activation::Softmax => {
                let mut grad = upstream.clone();
                for r in 0..out.rows() {
                    let p = out.row(r);
                    let g = grad.row_mut(r);
                    let dot: f64 = p.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
                    for (gi, &pi) in g.iter_mut().zip(p) {
                        *gi = pi * (*gi - dot);
                    }
                }
                grad
            }
            Activation::Sigmoid => {
                let mut grad = upstream.clone();
                for (g, &y) in grad.data_mut().iter_mut().zip(out.data()) {
                    *g *= y * (1.0 - y);
                }
                grad
            }
            _ => {
                let mut grad = upstream.clone();
                for (g, &z) in grad.data_mut().iter_mut().zip(pre.data()) {
                    *g *= self.derivative(z);
                }
                grad
            }
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(pre: &Matrix) -> Matrix {
    let mut out = pre.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Activation::Relu => "relu",
            Activation::Linear => "linear",
            Activation::Softplus => "softplus",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
        };
        f.write_str(s)
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            "softplus" => Ok(Activation::Softplus),
            "sigmoid" => Ok(Activation::Sigmoid),
            "softmax" => Ok(Activation::Softmax),
            other => Err(Error::invalid(format!("unknown activation `{other}`"))),
        }
    }
}
