use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::nn::Mode;
use crate::rng::RngState;

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

/// A training-mode draw together with what its backward pass needs.
#[derive(Debug, Clone)]
pub(crate) struct LatentSample {
    pub z: Matrix,
    pub eps: Matrix,
    pub clamped_log_var: Matrix,
}

fn check(mu: &Matrix, log_var: &Matrix) -> Result<()> {
    mu.ensure_same_shape(log_var, "reparameterize")?;
    if !mu.is_finite() || !log_var.is_finite() {
        return Err(Error::NonFinite("reparameterize"));
    }
    Ok(())
}

/// `mu + exp(log_var / 2) ⊙ ε` with ε ~ N(0, I) in training mode, `mu` at
/// inference. `log_var` is clamped to `[-10, 10]` first.
pub fn reparameterize(
    mu: &Matrix,
    log_var: &Matrix,
    rng: &mut RngState,
    mode: Mode,
) -> Result<Matrix> {
    check(mu, log_var)?;
    match mode {
        Mode::Inference => Ok(mu.clone()),
        Mode::Training => Ok(sample(mu, log_var, rng)?.z),
    }
}

pub(crate) fn sample(mu: &Matrix, log_var: &Matrix, rng: &mut RngState) -> Result<LatentSample> {
    check(mu, log_var)?;
    let clamped_log_var = log_var.map(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX));
    let eps = Matrix::new(
        mu.rows(),
        mu.cols(),
        rng.sample_gaussian(mu.data().len(), 0.0, 1.0)?,
    )?;
    let mut z = mu.clone();
    for ((zi, &e), &lv) in z
        .data_mut()
        .iter_mut()
        .zip(eps.data())
        .zip(clamped_log_var.data())
    {
        *zi += (0.5 * lv).exp() * e;
    }
    Ok(LatentSample {
        z,
        eps,
        clamped_log_var,
    })
}

/// Gradients of the sample with respect to `mu` and (unclamped) `log_var`.
pub(crate) fn sample_backward(
    upstream: &Matrix,
    sample: &LatentSample,
    log_var: &Matrix,
) -> Result<(Matrix, Matrix)> {
    let mut dlv = upstream.clone();
    for (((g, &e), &lvc), &lv) in dlv
        .data_mut()
        .iter_mut()
        .zip(sample.eps.data())
        .zip(sample.clamped_log_var.data())
        .zip(log_var.data())
    {
        *g = if lv == lvc {
            *g * e * 0.5 * (0.5 * lvc).exp()
        } else {
            0.0
        };
    }
    Ok((upstream.clone(), dlv))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inference_returns_mu() {
        let mu = Matrix::from_rows(&[[0.3, -1.0]]).unwrap();
        let lv = Matrix::filled(1, 2, 2.0);
        let z = reparameterize(&mu, &lv, &mut RngState::new(1), Mode::Inference).unwrap();
        assert_eq!(z, mu);
    }

    #[test]
    fn clamp_floor_collapses_to_mu() {
        let mu = Matrix::from_rows(&[[1.0, -2.0, 0.5, 3.0]]).unwrap();
        let lv = Matrix::filled(1, 4, -1e6);
        let z = reparameterize(&mu, &lv, &mut RngState::new(2), Mode::Training).unwrap();
        let norm = mu.frobenius_sq().sqrt();
        let diff = z.zip_map(&mu, |a, b| a - b).unwrap().frobenius_sq().sqrt();
        assert!(diff <= 1e-2 * norm, "{diff}");
    }

    #[test]
    fn monte_carlo_mean_is_mu() {
        let mu = Matrix::from_rows(&[[1.0, -2.0, 0.5]]).unwrap();
        let lv = Matrix::from_rows(&[[-4.0, -3.0, -5.0]]).unwrap();
        let mut rng = RngState::new(3);
        let mut sum = [0.0; 3];
        let draws = 100_000;
        for _ in 0..draws {
            let z = reparameterize(&mu, &lv, &mut rng, Mode::Training).unwrap();
            for (s, v) in sum.iter_mut().zip(z.data()) {
                *s += v;
            }
        }
        for (s, m) in sum.iter().zip(mu.data()) {
            let mean = s / draws as f64;
            assert!((mean - m).abs() <= 0.01 * m.abs(), "{mean} vs {m}");
        }
    }

    #[test]
    fn non_finite_rejected() {
        let mu = Matrix::zeros(1, 2);
        // Matrix::new refuses NaN, so build the bad matrix through a map.
        let bad = Matrix::zeros(1, 2).map(|_| f64::INFINITY);
        assert!(reparameterize(&mu, &bad, &mut RngState::new(1), Mode::Training).is_err());
        assert!(reparameterize(
            &mu,
            &Matrix::zeros(2, 2),
            &mut RngState::new(1),
            Mode::Training
        )
        .is_err());
    }
}
