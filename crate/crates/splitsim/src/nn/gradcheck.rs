//! Finite-difference gradient verification for small models.

use crate::nn::{mse_loss, ModelGraph};
use crate::{Result, Tensor};

/// Scalar probe loss: mean squared error of the output against a fixed
/// synthetic target pattern. Quadratic in the output, so central differences
/// are exact (up to rounding) wherever the model is locally linear.
fn probe_loss(model: &ModelGraph, input: &Tensor) -> Result<(f64, Tensor)> {
    let (out, _) = model.forward(input)?;
    let target = Tensor::from_vec(
        out.shape().to_vec(),
        (0..out.numel())
            .map(|j| 0.5 + 0.5 * (j as f64 * 0.37 + 0.11).sin())
            .collect(),
    )?;
    mse_loss(&out, &target)
}

/// Max over all parameters of the relative error between analytic gradients
/// and central finite differences with the given step:
/// `|analytic - fd| / max(|analytic|, |fd|, 1e-12)`.
///
/// A model with no parameters (or no layers) checks vacuously and returns 0.
pub fn grad_check(model: &mut ModelGraph, input: &Tensor, step: f64) -> Result<f64> {
    if model.num_scalar_params() == 0 {
        return Ok(0.0);
    }
    let (_, trace) = model.forward(input)?;
    let (_, dout) = probe_loss(model, input)?;
    let (_, analytic) = model.backward(&trace, &dout)?;

    let mut worst: f64 = 0.0;
    let param_count = model.params().len();
    for pi in 0..param_count {
        for ei in 0..model.params()[pi].numel() {
            let orig = model.params()[pi].data()[ei];
            model.params_mut()[pi].data_mut()[ei] = orig + step;
            let (lp, _) = probe_loss(model, input)?;
            model.params_mut()[pi].data_mut()[ei] = orig - step;
            let (lm, _) = probe_loss(model, input)?;
            model.params_mut()[pi].data_mut()[ei] = orig;

            let fd = (lp - lm) / (2.0 * step);
            let an = analytic[pi].data()[ei];
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-12);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
