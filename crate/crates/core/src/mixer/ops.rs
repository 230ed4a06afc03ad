//! LayerNorm and the residual MLP block, forward and backward.
//!
//! A block mixes along axis 0 of its input: every column is an independent
//! vector of length `dim`. Feature mixing feeds the coefficient-by-frame
//! matrix directly; time mixing feeds its transpose.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng as _;

use super::{ActivationKind, MlpBlock, Scalar};
use crate::rng::Rng;

/// `gamma * (x - mean) / sqrt(var + eps) + beta` over the entries of `x`.
pub fn layer_norm<T: Scalar>(x: ArrayView1<T>, gamma: ArrayView1<T>, beta: ArrayView1<T>, eps: T) -> Array1<T> {
    let n = T::from_usize(x.len()).unwrap();
    let mean = x.sum() / n;
    let var = x.fold(T::zero(), |acc, &v| acc + (v - mean) * (v - mean)) / n;
    let inv = T::one() / (var + eps).sqrt();
    Zip::from(&x)
        .and(&gamma)
        .and(&beta)
        .map_collect(|&v, &g, &b| g * (v - mean) * inv + b)
}

/// Intermediate values of one block application kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    /// Normalized input before the affine step, dim x cols.
    xhat: Array2<T>,
    /// `1 / sqrt(var + eps)` per column.
    inv_std: Array1<T>,
    /// LayerNorm output, dim x cols.
    normed: Array2<T>,
    /// First linear layer output, hidden x cols.
    pre: Array2<T>,
    /// Activation output after dropout, hidden x cols.
    hidden: Array2<T>,
    /// Inverted-dropout multipliers when dropout was active.
    mask: Option<Array2<T>>,
}

/// Dropout applied to hidden activations during training.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut Rng,
}

fn col<T: Scalar>(v: &Array1<T>) -> ArrayView2<'_, T> {
    v.view().insert_axis(Axis(1))
}

/// Normalizes every column of `x`, returning (xhat, inv_std).
fn normalize_columns<T: Scalar>(x: ArrayView2<T>, eps: T) -> (Array2<T>, Array1<T>) {
    let n = T::from_usize(x.nrows()).unwrap();
    let mean = x.sum_axis(Axis(0)) / n;
    let centered = &x - &mean.view().insert_axis(Axis(0));
    let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / n;
    let inv_std = var.mapv(|v| T::one() / (v + eps).sqrt());
    let xhat = &centered * &inv_std.view().insert_axis(Axis(0));
    (xhat, inv_std)
}

pub fn mlp_forward<T: Scalar>(
    block: &MlpBlock<T>,
    x: ArrayView2<T>,
    act: ActivationKind,
    eps: T,
    dropout: Option<Dropout<'_>>,
) -> (Array2<T>, MlpCache<T>) {
    let (xhat, inv_std) = normalize_columns(x, eps);
    let normed = &xhat * &col(&block.norm.gamma) + &col(&block.norm.beta);
    let pre = block.fc1.weight.dot(&normed) + &col(&block.fc1.bias);
    let mut hidden = pre.mapv(|v| act.apply(v));
    let mask = match dropout {
        Some(Dropout { rate, rng }) if rate > 0.0 => {
            let keep = T::from_f64(1.0 / (1.0 - rate)).unwrap();
            let mask = Array2::from_shape_simple_fn(hidden.raw_dim(), || {
                if rng.random::<f64>() < rate {
                    T::zero()
                } else {
                    keep
                }
            });
            hidden = &hidden * &mask;
            Some(mask)
        }
        _ => None,
    };
    let out = &x + &block.fc2.weight.dot(&hidden) + &col(&block.fc2.bias);
    let cache = MlpCache {
        xhat,
        inv_std,
        normed,
        pre,
        hidden,
        mask,
    };
    (out, cache)
}

/// Accumulates parameter gradients into `grads` and returns the gradient
/// with respect to the block input.
pub fn mlp_backward<T: Scalar>(
    block: &MlpBlock<T>,
    cache: &MlpCache<T>,
    d_out: ArrayView2<T>,
    act: ActivationKind,
    grads: &mut MlpBlock<T>,
) -> Array2<T> {
    grads.fc2.weight += &d_out.dot(&cache.hidden.t());
    grads.fc2.bias += &d_out.sum_axis(Axis(1));

    let mut d_hidden = block.fc2.weight.t().dot(&d_out);
    if let Some(mask) = &cache.mask {
        d_hidden *= mask;
    }
    let d_pre = Zip::from(&d_hidden)
        .and(&cache.pre)
        .map_collect(|&d, &p| d * act.derivative(p));
    grads.fc1.weight += &d_pre.dot(&cache.normed.t());
    grads.fc1.bias += &d_pre.sum_axis(Axis(1));

    let d_normed = block.fc1.weight.t().dot(&d_pre);
    grads.norm.gamma += &(&d_normed * &cache.xhat).sum_axis(Axis(1));
    grads.norm.beta += &d_normed.sum_axis(Axis(1));

    // LayerNorm input gradient per column:
    // inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
    let d_xhat = &d_normed * &col(&block.norm.gamma);
    let n = T::from_usize(d_xhat.nrows()).unwrap();
    let mean_d = d_xhat.sum_axis(Axis(0)) / n;
    let mean_dx = (&d_xhat * &cache.xhat).sum_axis(Axis(0)) / n;
    let mut d_x = d_xhat - &mean_d.view().insert_axis(Axis(0)) - &cache.xhat * &mean_dx.view().insert_axis(Axis(0));
    d_x *= &cache.inv_std.view().insert_axis(Axis(0));

    // residual path
    d_x += &d_out;
    d_x
}
