//! Adam with bias correction, in-place on one [`Parameter`].

use super::{Parameter, Tensor};
use crate::error::{Error, Result};

#[allow(clippy::too_many_arguments)]
fn adam_core(
    name: &str,
    value: &mut [f32],
    m: &mut [f32],
    v: &mut [f32],
    step_count: &mut u64,
    grad: &[f32],
    lr: f32,
    beta1: f32,
    beta2: f32,
    eps: f32,
) -> Result<()> {
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient for parameter '{name}'")));
    }
    if grad.iter().all(|&g| g == 0.0) {
        return Ok(()); // exact no-op, regardless of step history
    }
    *step_count += 1;
    let t = *step_count as i32;
    let bc1 = 1.0 - (beta1 as f64).powi(t);
    let bc2 = 1.0 - (beta2 as f64).powi(t);
    for i in 0..value.len() {
        let g = grad[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = (m[i] as f64 / bc1) as f32;
        let v_hat = (v[i] as f64 / bc2) as f32;
        value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Standard bias-corrected Adam update; aborts before mutating anything if
/// the gradient has a non-finite entry.
pub fn adam_step(
    param: &mut Parameter,
    grad: &Tensor,
    lr: f32,
    beta1: f32,
    beta2: f32,
    eps: f32,
) -> Result<()> {
    if grad.shape() != param.value.shape() {
        return Err(Error::Dim {
            axis: "channels",
            expected: param.value.shape().len(),
            got: grad.shape().len(),
            context: format!("adam_step gradient shape for '{}'", param.name),
        });
    }
    let Parameter { name, value, first_moment, second_moment, step_count } = param;
    adam_core(
        name,
        value.data_mut(),
        first_moment,
        second_moment,
        step_count,
        grad.data(),
        lr,
        beta1,
        beta2,
        eps,
    )
}

/// Adam update using the gradient accumulated on the parameter itself.
pub fn adam_step_own(
    param: &mut Parameter,
    lr: f32,
    beta1: f32,
    beta2: f32,
    eps: f32,
) -> Result<()> {
    let Parameter { name, value, first_moment, second_moment, step_count } = param;
    let (data, grad) = value.data_and_grad_mut();
    adam_core(name, data, first_moment, second_moment, step_count, grad, lr, beta1, beta2, eps)
}
