//! Central-difference verification of analytic gradients.

use super::{Mode, Sequential};
use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::rng::RngState;

/// Denominator floor for the relative error, so that gradients which are
/// exactly zero analytically are compared against round-off rather than
/// against zero.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Seed used for every forward pass inside a check, so stochastic layers
/// draw identical noise on each evaluation.
pub const CHECK_SEED: u64 = 0x5EED;

/// `|a − n| / max(|a| + |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// (tensor, index) of the worst entry.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

impl GradCheckReport {
    fn empty() -> Self {
        Self {
            max_relative_error: 0.0,
            worst: (0, 0),
            analytic: 0.0,
            numeric: 0.0,
            checked: 0,
        }
    }

    fn record(&mut self, tensor: usize, index: usize, analytic: f64, numeric: f64) {
        let err = relative_error(analytic, numeric);
        self.checked += 1;
        if err > self.max_relative_error || self.checked == 1 {
            self.max_relative_error = err;
            self.worst = (tensor, index);
            self.analytic = analytic;
            self.numeric = numeric;
        }
    }

    pub fn merge(mut self, other: GradCheckReport) -> Self {
        if other.max_relative_error > self.max_relative_error {
            let checked = self.checked + other.checked;
            self = other;
            self.checked = checked;
        } else {
            self.checked += other.checked;
        }
        self
    }
}

/// Anything whose parameters can be enumerated as flat tensors.
pub trait Parameterized: Clone {
    fn params(&self) -> Vec<&[f64]>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;
}

impl Parameterized for Sequential {
    fn params(&self) -> Vec<&[f64]> {
        Sequential::params(self)
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        Sequential::params_mut(self)
    }
}

fn check_step(step: f64) -> Result<()> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::invalid(format!(
            "finite-difference step must be > 0, got {step}"
        )));
    }
    Ok(())
}

/// Compares `analytic` (in `params()` order) against central differences
/// of `loss` with respect to every parameter of `net`.
pub fn check_parameters<N: Parameterized>(
    net: &N,
    analytic: &[Vec<f64>],
    step: f64,
    loss: impl Fn(&N) -> Result<f64>,
) -> Result<GradCheckReport> {
    check_step(step)?;
    let shapes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
    if shapes.len() != analytic.len() || shapes.iter().zip(analytic).any(|(n, a)| *n != a.len()) {
        return Err(Error::shape(
            "check_parameters",
            format!("{shapes:?}"),
            format!("{:?}", analytic.iter().map(Vec::len).collect::<Vec<_>>()),
        ));
    }
    let mut report = GradCheckReport::empty();
    let mut probe = net.clone();
    for (t, grad) in analytic.iter().enumerate() {
        for (i, &a) in grad.iter().enumerate() {
            let original = probe.params()[t][i];
            probe.params_mut()[t][i] = original + step;
            let plus = loss(&probe)?;
            probe.params_mut()[t][i] = original - step;
            let minus = loss(&probe)?;
            probe.params_mut()[t][i] = original;
            report.record(t, i, a, (plus - minus) / (2.0 * step));
        }
    }
    Ok(report)
}

/// Central-difference gradient of a scalar function of a point.
pub fn numeric_gradient(
    point: &[f64],
    step: f64,
    f: impl Fn(&[f64]) -> Result<f64>,
) -> Result<Vec<f64>> {
    check_step(step)?;
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let original = x[i];
        x[i] = original + step;
        let plus = f(&x)?;
        x[i] = original - step;
        let minus = f(&x)?;
        x[i] = original;
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}

/// Compares an analytic gradient of a scalar function against
/// [`numeric_gradient`].
pub fn check_function(
    point: &[f64],
    analytic: &[f64],
    step: f64,
    f: impl Fn(&[f64]) -> Result<f64>,
) -> Result<GradCheckReport> {
    if point.len() != analytic.len() {
        return Err(Error::shape("check_function", point.len(), analytic.len()));
    }
    let numeric = numeric_gradient(point, step, f)?;
    let mut report = GradCheckReport::empty();
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        report.record(0, i, a, n);
    }
    Ok(report)
}

/// Full-network check of parameter gradients for a layer stack under a
/// scalar loss of its output. `loss_fn` returns the loss and its gradient
/// with respect to the network output. The network runs in training mode;
/// stochastic layers replay the same noise on every evaluation.
pub fn grad_check(
    network: &Sequential,
    input: &Matrix,
    loss_fn: impl Fn(&Matrix) -> Result<(f64, Matrix)>,
    step: f64,
) -> Result<GradCheckReport> {
    check_step(step)?;
    let mut net = network.clone();
    let (out, caches) = net.forward(input, Mode::Training, &mut RngState::new(CHECK_SEED))?;
    let (_, upstream) = loss_fn(&out)?;
    let (_, grads) = net.backward(&upstream, &caches, 0.0)?;
    check_parameters(network, &grads, step, |candidate| {
        let mut candidate = candidate.clone();
        let (out, _) = candidate.forward(input, Mode::Training, &mut RngState::new(CHECK_SEED))?;
        Ok(loss_fn(&out)?.0)
    })
}
