//! Adam with bias correction over [`MlpParams`] containers.

use super::MlpParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: MlpParams,
    v: MlpParams,
}

impl AdamState {
    /// Default moments (0.9, 0.999, 1e-8) at the given learning rate.
    pub fn new(learning_rate: f64, like: &MlpParams) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: MlpParams::zeros_like(like),
            v: MlpParams::zeros_like(like),
        }
    }
}

/// One Adam update in place:
/// `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`, then the
/// bias-corrected step `p -= lr * mhat / (sqrt(vhat) + eps)`.
pub fn adam_step(state: &mut AdamState, params: &mut MlpParams, grads: &MlpParams) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::NonFinite(format!(
            "gradients at Adam step {}",
            state.step + 1
        )));
    }
    state.step += 1;
    let b1 = state.beta1;
    let b2 = state.beta2;
    let bc1 = 1.0 - b1.powi(state.step as i32);
    let bc2 = 1.0 - b2.powi(state.step as i32);
    let lr = state.learning_rate;
    let eps = state.epsilon;

    let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    };

    for (((pw, mw), vw), gw) in params
        .weights
        .iter_mut()
        .zip(state.m.weights.iter_mut())
        .zip(state.v.weights.iter_mut())
        .zip(grads.weights.iter())
    {
        ndarray::Zip::from(pw).and(mw).and(vw).and(gw).for_each(|p, m, v, &g| {
            update(p, m, v, g);
        });
    }
    for (((pb, mb), vb), gb) in params
        .biases
        .iter_mut()
        .zip(state.m.biases.iter_mut())
        .zip(state.v.biases.iter_mut())
        .zip(grads.biases.iter())
    {
        ndarray::Zip::from(pb).and(mb).and(vb).and(gb).for_each(|p, m, v, &g| {
            update(p, m, v, g);
        });
    }
    Ok(())
}
