use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixer::{Gradients, MixerParams, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the number of steps taken.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: MixerParams<T>,
    pub v: MixerParams<T>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &MixerParams<T>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<T: Scalar>(
    params: &mut MixerParams<T>,
    grads: &Gradients<T>,
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    params.check_congruent(grads)?;
    params.check_congruent(&state.m)?;
    state.step += 1;
    let t = state.step as i32;
    let c = |v: f64| T::from_f64(v).unwrap();
    let (b1, b2) = (c(cfg.beta1), c(cfg.beta2));
    let m_corr = c(1.0 - cfg.beta1.powi(t));
    let v_corr = c(1.0 - cfg.beta2.powi(t));
    let (lr, eps) = (c(cfg.learning_rate), c(cfg.eps));

    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut().into_iter().zip(state.v.tensors_mut()));
    for (((_, mut p), (_, g)), ((_, mut m), (_, mut v))) in tensors {
        if p.len() != g.len() {
            return Err(Error::ShapeMismatch("adam tensor sizes".into()));
        }
        for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let m_hat = *m / m_corr;
            let v_hat = *v / v_corr;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
