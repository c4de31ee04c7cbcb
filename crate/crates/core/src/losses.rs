//! Scalar objectives and their gradients.
//!
//! Every `*_grad` function returns the gradient of the matching loss with
//! respect to its first argument (both arguments for the KL term).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::models::ArchitectureKind;
use crate::nn::{Layer, Mode};
use crate::rng::RngState;

pub const CLASSIFICATION_WEIGHT: f64 = 5e-1;
pub const REGRESSION_WEIGHT: f64 = 1e-3;
pub const DEFAULT_CONTRACTIVE_LAMBDA: f64 = 1e-4;
pub const DEFAULT_KL_WEIGHT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub classification_weight: f64,
    pub regression_weight: f64,
    pub contractive_lambda: f64,
    pub kl_weight: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            classification_weight: CLASSIFICATION_WEIGHT,
            regression_weight: REGRESSION_WEIGHT,
            contractive_lambda: DEFAULT_CONTRACTIVE_LAMBDA,
            kl_weight: DEFAULT_KL_WEIGHT,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.classification_weight,
            self.regression_weight,
            self.contractive_lambda,
            self.kl_weight,
        ];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid(format!(
                "loss weights must be finite and >= 0: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Mrna,
    Mirna,
    Tissue,
    Disease,
}

/// The four per-task losses of one evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskLosses {
    pub mrna: f64,
    pub mirna: f64,
    pub tissue: f64,
    pub disease: f64,
}

impl TaskLosses {
    /// Collects tagged losses; each task must appear exactly once.
    pub fn from_pairs(pairs: &[(Task, f64)]) -> Result<Self> {
        let mut slots = [None; 4];
        for &(task, value) in pairs {
            let slot = &mut slots[task as usize];
            if slot.is_some() {
                return Err(Error::invalid(format!("task loss {task:?} given twice")));
            }
            *slot = Some(value);
        }
        let tasks = [Task::Mrna, Task::Mirna, Task::Tissue, Task::Disease];
        let missing: Vec<String> = tasks
            .iter()
            .zip(&slots)
            .filter(|(_, s)| s.is_none())
            .map(|(t, _)| format!("{t:?}"))
            .collect();
        if !missing.is_empty() {
            return Err(Error::invalid(format!(
                "missing task losses: {}",
                missing.join(", ")
            )));
        }
        let [m, mi, t, d] = slots.map(|s| s.unwrap_or_default());
        Ok(Self {
            mrna: m,
            mirna: mi,
            tissue: t,
            disease: d,
        })
    }
}

/// Weighted multi-task objective. `regularizer` is the contractive penalty
/// for CAE kinds and the KL term for VAE kinds.
pub fn total_loss(
    losses: &TaskLosses,
    regularizer: f64,
    weights: &LossWeights,
    kind: ArchitectureKind,
) -> f64 {
    let reg_weight = if kind.is_variational() {
        weights.kl_weight
    } else {
        weights.contractive_lambda
    };
    weights.classification_weight * (losses.tissue + losses.disease)
        + weights.regression_weight * (losses.mrna + losses.mirna)
        + reg_weight * regularizer
}

pub fn mse(pred: &Matrix, target: &Matrix) -> Result<f64> {
    pred.ensure_same_shape(target, "mse")?;
    let n = pred.data().len().max(1) as f64;
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

pub fn mse_grad(pred: &Matrix, target: &Matrix) -> Result<Matrix> {
    let n = pred.data().len().max(1) as f64;
    pred.zip_map(target, |p, t| 2.0 * (p - t) / n)
}

pub fn mae(pred: &Matrix, target: &Matrix) -> Result<f64> {
    pred.ensure_same_shape(target, "mae")?;
    let n = pred.data().len().max(1) as f64;
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / n)
}

/// Subgradient; zero where prediction equals target.
pub fn mae_grad(pred: &Matrix, target: &Matrix) -> Result<Matrix> {
    let n = pred.data().len().max(1) as f64;
    pred.zip_map(target, |p, t| {
        if p > t {
            1.0 / n
        } else if p < t {
            -1.0 / n
        } else {
            0.0
        }
    })
}

fn row_norms(pred: &Matrix, target: &Matrix) -> Result<Vec<(f64, f64, f64)>> {
    pred.ensure_same_shape(target, "cosine_loss")?;
    pred.row_iter()
        .zip(target.row_iter())
        .enumerate()
        .map(|(r, (p, t))| {
            let dot: f64 = p.iter().zip(t).map(|(a, b)| a * b).sum();
            let np = p.iter().map(|a| a * a).sum::<f64>().sqrt();
            let nt = t.iter().map(|a| a * a).sum::<f64>().sqrt();
            if np == 0.0 || nt == 0.0 {
                return Err(Error::invalid(format!("zero-norm row {r} in cosine loss")));
            }
            Ok((dot, np, nt))
        })
        .collect()
}

/// Mean over rows of `1 − cos(pred, target)`.
pub fn cosine_loss(pred: &Matrix, target: &Matrix) -> Result<f64> {
    let rows = row_norms(pred, target)?;
    let n = rows.len().max(1) as f64;
    Ok(rows
        .iter()
        .map(|(d, np, nt)| 1.0 - d / (np * nt))
        .sum::<f64>()
        / n)
}

pub fn cosine_loss_grad(pred: &Matrix, target: &Matrix) -> Result<Matrix> {
    let rows = row_norms(pred, target)?;
    let n = rows.len().max(1) as f64;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    for (r, &(dot, np, nt)) in rows.iter().enumerate() {
        let cos = dot / (np * nt);
        let p = pred.row(r);
        let t = target.row(r);
        for (j, g) in grad.row_mut(r).iter_mut().enumerate() {
            *g = -(t[j] / (np * nt) - cos * p[j] / (np * np)) / n;
        }
    }
    Ok(grad)
}

/// Layerwise contractive penalty of an encoder stack on `input`: the sum
/// over its dense layers of the batch-mean `‖∂out/∂in‖²_F`. Batch-norm and
/// noise layers are traversed in inference mode and contribute nothing.
pub fn contractive_penalty(encoder_layers: &[Layer], input: &Matrix) -> Result<f64> {
    if input.rows() == 0 {
        return Err(Error::invalid("contractive penalty of an empty batch"));
    }
    let mut h = input.clone();
    let mut total = 0.0;
    let mut rng = RngState::new(0);
    for layer in encoder_layers {
        let mut layer = layer.clone();
        let (next, cache) = layer.forward(&h, Mode::Inference, &mut rng)?;
        if let (Layer::Dense(d), crate::nn::LayerCache::Dense(c)) = (&layer, &cache) {
            total += d.jacobian_frobenius_sq(c.pre_activation())?;
        }
        h = next;
    }
    Ok(total)
}

fn check_gaussian_args(mu: &Matrix, log_var: &Matrix) -> Result<()> {
    mu.ensure_same_shape(log_var, "kl_gaussian")?;
    if !mu.is_finite() || !log_var.is_finite() {
        return Err(Error::NonFinite("kl_gaussian"));
    }
    Ok(())
}

/// Batch mean of `KL(N(mu, exp(log_var)) ‖ N(0, I))`.
pub fn kl_gaussian(mu: &Matrix, log_var: &Matrix) -> Result<f64> {
    check_gaussian_args(mu, log_var)?;
    let n = mu.rows().max(1) as f64;
    let total: f64 = mu
        .data()
        .iter()
        .zip(log_var.data())
        .map(|(m, lv)| 0.5 * (lv.exp() + m * m - 1.0 - lv))
        .sum();
    Ok(total / n)
}

/// Gradients of [`kl_gaussian`] with respect to `mu` and `log_var`.
pub fn kl_gaussian_grads(mu: &Matrix, log_var: &Matrix) -> Result<(Matrix, Matrix)> {
    check_gaussian_args(mu, log_var)?;
    let n = mu.rows().max(1) as f64;
    Ok((
        mu.map(|m| m / n),
        log_var.map(|lv| 0.5 * (lv.exp() - 1.0) / n),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, BatchNorm, Dense};

    fn rand_matrix(rng: &mut RngState, r: usize, c: usize, lo: f64, hi: f64) -> Matrix {
        Matrix::new(r, c, rng.uniform_vec(r * c, lo, hi)).unwrap()
    }

    #[test]
    fn regression_losses_by_hand() {
        let p = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        let t = Matrix::zeros(1, 2);
        assert_eq!(mse(&p, &t).unwrap(), 1.0);
        assert_eq!(mae(&p, &t).unwrap(), 1.0);
        assert_eq!(mse(&p, &p).unwrap(), 0.0);
        assert!(mse(&p, &Matrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn regression_losses_match_loop() {
        let mut rng = RngState::new(5);
        let p = rand_matrix(&mut rng, 5, 4, 0.0, 1.0);
        let t = rand_matrix(&mut rng, 5, 4, 0.0, 1.0);
        let (mut sq, mut ab) = (0.0, 0.0);
        for i in 0..5 {
            for j in 0..4 {
                let d = p.get(i, j) - t.get(i, j);
                sq += d * d;
                ab += d.abs();
            }
        }
        assert!((mse(&p, &t).unwrap() - sq / 20.0).abs() < 1e-12);
        assert!((mae(&p, &t).unwrap() - ab / 20.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_closed_forms() {
        let onehot = Matrix::from_rows(&[[0.0, 1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(cosine_loss(&onehot, &onehot).unwrap(), 0.0);
        let uniform = Matrix::filled(1, 4, 0.25);
        assert!((cosine_loss(&uniform, &onehot).unwrap() - 0.5).abs() < 1e-12);
        assert!(cosine_loss(&Matrix::zeros(1, 4), &onehot).is_err());
    }

    #[test]
    fn cosine_matches_row_formula_and_ignores_scale() {
        let mut rng = RngState::new(9);
        let p = rand_matrix(&mut rng, 3, 5, 0.01, 1.0);
        let mut t = Matrix::zeros(3, 5);
        for r in 0..3 {
            t.set(r, rng.below(5), 1.0);
        }
        let mut oracle = 0.0;
        for r in 0..3 {
            let (a, b) = (p.row(r), t.row(r));
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            oracle += 1.0 - dot / (na * nb);
        }
        let got = cosine_loss(&p, &t).unwrap();
        assert!((got - oracle / 3.0).abs() < 1e-12);
        let scaled = p.map(|v| 7.5 * v);
        assert!((cosine_loss(&scaled, &t).unwrap() - got).abs() < 1e-12);
    }

    #[test]
    fn contractive_linear_and_zero() {
        let w = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let layer = Layer::Dense(Dense::from_parts(w, vec![0.0, 0.0], Activation::Linear).unwrap());
        let mut rng = RngState::new(2);
        let a = rand_matrix(&mut rng, 3, 2, -5.0, 5.0);
        let b = rand_matrix(&mut rng, 7, 2, -5.0, 5.0);
        assert_eq!(contractive_penalty(std::slice::from_ref(&layer), &a).unwrap(), 30.0);
        assert_eq!(contractive_penalty(&[layer], &b).unwrap(), 30.0);
        let zero = Layer::Dense(
            Dense::from_parts(Matrix::zeros(2, 3), vec![0.1; 3], Activation::Sigmoid).unwrap(),
        );
        assert_eq!(contractive_penalty(&[zero], &a).unwrap(), 0.0);
    }

    #[test]
    fn contractive_sigmoid_matches_numeric_jacobian() {
        let mut rng = RngState::new(21);
        let dense = Dense::new(4, 3, Activation::Sigmoid, &mut rng);
        let x = rand_matrix(&mut rng, 2, 4, -1.0, 1.0);
        let layer = Layer::Dense(dense.clone());
        let mut oracle = 0.0;
        let h = 1e-6;
        for r in 0..2 {
            for i in 0..4 {
                let mut plus = Matrix::row_vector(x.row(r)).unwrap();
                let mut minus = plus.clone();
                plus.data_mut()[i] += h;
                minus.data_mut()[i] -= h;
                let yp = dense.infer(&plus).unwrap();
                let ym = dense.infer(&minus).unwrap();
                for j in 0..3 {
                    let d = (yp.get(0, j) - ym.get(0, j)) / (2.0 * h);
                    oracle += d * d;
                }
            }
        }
        oracle /= 2.0;
        let got = contractive_penalty(&[layer], &x).unwrap();
        assert!((got - oracle).abs() < 1e-6, "{got} vs {oracle}");
    }

    #[test]
    fn contractive_rejects_softmax_and_passes_batchnorm() {
        let mut rng = RngState::new(1);
        let x = rand_matrix(&mut rng, 3, 2, 0.0, 1.0);
        let soft = Layer::Dense(Dense::new(2, 2, Activation::Softmax, &mut rng));
        assert!(contractive_penalty(&[soft], &x).is_err());
        let bn = Layer::BatchNorm(BatchNorm::new(2));
        let w = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let lin = Layer::Dense(Dense::from_parts(w, vec![0.0; 2], Activation::Linear).unwrap());
        assert_eq!(contractive_penalty(&[bn, lin], &x).unwrap(), 30.0);
    }

    #[test]
    fn kl_closed_forms() {
        assert_eq!(
            kl_gaussian(&Matrix::zeros(3, 2), &Matrix::zeros(3, 2)).unwrap(),
            0.0
        );
        let mu = Matrix::filled(1, 1, 1.0);
        assert_eq!(kl_gaussian(&mu, &Matrix::zeros(1, 1)).unwrap(), 0.5);
        let bad = Matrix::zeros(2, 1);
        assert!(kl_gaussian(&mu, &bad).is_err());
    }

    /// KL(N(m, s²) ‖ N(0, 1)) by midpoint quadrature of ∫ q log(q/p).
    fn kl_quadrature(m: f64, log_var: f64) -> f64 {
        let s = (0.5 * log_var).exp();
        let (lo, hi) = (m - 12.0 * s, m + 12.0 * s);
        let steps = 200_000;
        let dx = (hi - lo) / steps as f64;
        let mut acc = 0.0;
        for k in 0..steps {
            let x = lo + (k as f64 + 0.5) * dx;
            let log_q =
                -0.5 * ((x - m) / s).powi(2) - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
            let log_p = -0.5 * x * x - 0.5 * (2.0 * std::f64::consts::PI).ln();
            acc += log_q.exp() * (log_q - log_p) * dx;
        }
        acc
    }

    #[test]
    fn kl_matches_quadrature() {
        let mut rng = RngState::new(13);
        let mu = rand_matrix(&mut rng, 2, 3, -1.5, 1.5);
        let lv = rand_matrix(&mut rng, 2, 3, -1.0, 1.0);
        let oracle: f64 = mu
            .data()
            .iter()
            .zip(lv.data())
            .map(|(&m, &l)| kl_quadrature(m, l))
            .sum::<f64>()
            / 2.0;
        assert!((kl_gaussian(&mu, &lv).unwrap() - oracle).abs() < 1e-4);
    }

    #[test]
    fn total_loss_weights() {
        let ones = TaskLosses {
            mrna: 1.0,
            mirna: 1.0,
            tissue: 1.0,
            disease: 1.0,
        };
        let w = LossWeights::default();
        let t = total_loss(&ones, 0.0, &w, ArchitectureKind::Cae);
        assert!((t - 1.002).abs() < 1e-12);
        assert_eq!(
            total_loss(&TaskLosses::default(), 0.0, &w, ArchitectureKind::Vae),
            0.0
        );
    }

    #[test]
    fn total_loss_matches_hand_sum() {
        let mut rng = RngState::new(4);
        let w = LossWeights::default();
        for kind in ArchitectureKind::ALL {
            let v = rng.uniform_vec(5, 0.0, 3.0);
            let l = TaskLosses {
                mrna: v[0],
                mirna: v[1],
                tissue: v[2],
                disease: v[3],
            };
            let reg = if kind.is_variational() { 1e-3 } else { 1e-4 };
            let hand = 0.5 * v[2] + 0.5 * v[3] + 1e-3 * v[0] + 1e-3 * v[1] + reg * v[4];
            assert!((total_loss(&l, v[4], &w, kind) - hand).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_task_loss_rejected() {
        let err =
            TaskLosses::from_pairs(&[(Task::Mrna, 1.0), (Task::Tissue, 1.0), (Task::Disease, 0.0)])
                .unwrap_err();
        assert!(err.to_string().contains("Mirna"));
        assert!(TaskLosses::from_pairs(&[
            (Task::Mrna, 1.0),
            (Task::Mirna, 1.0),
            (Task::Tissue, 1.0),
            (Task::Disease, 1.0)
        ])
        .is_ok());
    }
}
