use num_traits::Float;

use super::TrainError;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

impl<T: Float> AdamState<T> {
    pub fn new(n: usize) -> Self {
        Self { m: vec![T::zero(); n], v: vec![T::zero(); n], step: 0 }
    }
}

/// One bias-corrected Adam update with `weight_decay * theta` added to the
/// gradient first.
pub fn adam_step<T: Float>(
    params: &mut [T],
    grads: &[T],
    state: &mut AdamState<T>,
    lr: T,
    weight_decay: T,
) -> Result<(), TrainError> {
    if params.len() != grads.len() || state.m.len() != params.len() {
        return Err(TrainError::Shape { params: params.len(), grads: grads.len() });
    }
    let c = |v: f64| T::from(v).unwrap();
    let (b1, b2, eps) = (c(ADAM_BETA1), c(ADAM_BETA2), c(ADAM_EPS));
    state.step += 1;
    let step = state.step as i32;
    let bc1 = T::one() - b1.powi(step);
    let bc2 = T::one() - b2.powi(step);
    for i in 0..params.len() {
        let g = grads[i] + weight_decay * params[i];
        state.m[i] = b1 * state.m[i] + (T::one() - b1) * g;
        state.v[i] = b2 * state.v[i] + (T::one() - b2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
