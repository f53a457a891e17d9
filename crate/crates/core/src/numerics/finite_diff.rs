//! Central finite differences, used to validate tape gradients.

use super::tensor::Tensor;
use crate::error::Result;

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn central_difference(
    x: &Tensor,
    h: f64,
    mut f: impl FnMut(&Tensor) -> Result<f64>,
) -> Result<Tensor> {
    let mut grad = Vec::with_capacity(x.len());
    let mut probe = x.data().to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&Tensor::new(x.shape().to_vec(), probe.clone())?)?;
        probe[i] = orig - h;
        let minus = f(&Tensor::new(x.shape().to_vec(), probe.clone())?)?;
        probe[i] = orig;
        grad.push((plus - minus) / (2.0 * h));
    }
    Tensor::new(x.shape().to_vec(), grad)
}

/// Largest `|a - n| / max(|a|, |n|, floor)` over all entries.
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor, floor: f64) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape(), "gradient shapes differ");
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
