//! Central finite-difference gradient checking, shared by unit tests, the
//! acceptance suite and the `selftest` subcommand.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const STEP: f64 = 1e-5;

pub fn random_tensor<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0)).expect("valid shape")
}

/// Relative error `|a−n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / scale
}

/// Central difference of `loss` at every entry of `at`, step [`STEP`].
pub fn numeric_gradient(loss: impl Fn(&Tensor) -> f64, at: &Tensor) -> Tensor {
    let mut probe = at.clone();
    let mut out = at.zeros_like();
    for i in 0..at.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + STEP;
        let up = loss(&probe);
        probe.data_mut()[i] = orig - STEP;
        let down = loss(&probe);
        probe.data_mut()[i] = orig;
        out.data_mut()[i] = (up - down) / (2.0 * STEP);
    }
    out
}

/// Compares `analytic` against central differences; returns the worst
/// relative error, or an error naming the first entry above `tol`.
pub fn check_gradient(loss: impl Fn(&Tensor) -> f64, at: &Tensor, analytic: &Tensor, tol: f64) -> Result<f64> {
    if analytic.shape() != at.shape() {
        return Err(Error::Shape(format!(
            "gradient {:?} vs parameter {:?}",
            analytic.shape(),
            at.shape()
        )));
    }
    let numeric = numeric_gradient(loss, at);
    let mut worst: f64 = 0.0;
    for (i, (&a, &n)) in analytic.data().iter().zip(numeric.data()).enumerate() {
        let e = relative_error(a, n);
        if e > tol {
            return Err(Error::State(format!(
                "entry {i}: analytic {a:e} vs numeric {n:e} (relative error {e:e})"
            )));
        }
        worst = worst.max(e);
    }
    Ok(worst)
}
