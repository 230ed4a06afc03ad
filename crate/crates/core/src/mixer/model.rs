//! Encoder and classification head: forward, loss and analytic gradients.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use super::ops::{mlp_backward, mlp_forward, Dropout, MlpCache};
use super::patch::{patch_embed, patch_reshape};
use super::{Gradients, InputMode, MixerConfig, MixerParams, MlpBlock, Scalar};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::rng::{seeded, Rng};

/// Pooled encoder output for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f32>);

impl Embedding {
    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn eps<T: Scalar>(cfg: &MixerConfig) -> T {
    T::from_f64(cfg.ln_eps).unwrap()
}

fn check_block(block: &MlpBlock<impl Scalar>, dim: usize, what: &str) -> Result<()> {
    if block.dim() != dim || block.fc2.out_dim() != dim || block.fc2.in_dim() != block.fc1.out_dim() {
        return Err(Error::ShapeMismatch(format!(
            "{what} block expects {} but input has {dim}",
            block.dim()
        )));
    }
    Ok(())
}

/// `U = X + W2 act(W1 LN(X) + b1) + b2`, LayerNorm over each column.
pub fn feature_mixing_forward<T: Scalar>(x: ArrayView2<T>, block: &MlpBlock<T>, cfg: &MixerConfig) -> Result<Array2<T>> {
    check_block(block, x.nrows(), "feature-mixing")?;
    Ok(mlp_forward(block, x, cfg.activation, eps(cfg), None).0)
}

/// `Y = U + (W4 act(W3 LN(U^T) + b3) + b4)^T`, LayerNorm over each row.
pub fn time_mixing_forward<T: Scalar>(u: ArrayView2<T>, block: &MlpBlock<T>, cfg: &MixerConfig) -> Result<Array2<T>> {
    check_block(block, u.ncols(), "time-mixing")?;
    Ok(mlp_forward(block, u.t(), cfg.activation, eps(cfg), None).0.reversed_axes())
}

fn dropout_for<'a>(rng: &'a mut Option<&mut Rng>, cfg: &MixerConfig) -> Option<Dropout<'a>> {
    rng.as_deref_mut().map(|rng| Dropout { rate: cfg.dropout, rng })
}

struct Trace<T> {
    patches: Option<Array2<T>>,
    blocks: Vec<(MlpCache<T>, MlpCache<T>)>,
    cols: usize,
}

fn check_input<T: Scalar>(x: &ArrayView2<T>, cfg: &MixerConfig) -> Result<()> {
    if x.dim() != (cfg.f, cfg.t) {
        return Err(Error::ShapeMismatch(format!(
            "input is {}x{}, model expects {}x{}",
            x.nrows(),
            x.ncols(),
            cfg.f,
            cfg.t
        )));
    }
    Ok(())
}

fn forward_traced<T: Scalar>(
    x: ArrayView2<T>,
    params: &MixerParams<T>,
    cfg: &MixerConfig,
    mut dropout: Option<&mut Rng>,
) -> Result<(Array1<T>, Trace<T>)> {
    check_input(&x, cfg)?;
    let (mut h, patches) = match cfg.input_mode {
        InputMode::Direct => (x.to_owned(), None),
        InputMode::PatchReshape => (patch_reshape(x, cfg.patch)?, None),
        InputMode::PatchEmbed => {
            let embed = params
                .patch_embed
                .as_ref()
                .ok_or_else(|| Error::ShapeMismatch("missing patch embedding".into()))?;
            let p = patch_reshape(x, cfg.patch)?;
            if embed.in_dim() != p.nrows() || embed.out_dim() != p.nrows() {
                return Err(Error::ShapeMismatch("patch embedding shape".into()));
            }
            (patch_embed(p.view(), embed), Some(p))
        }
    };
    let (rows, cols) = h.dim();
    let eps = eps::<T>(cfg);
    let mut caches = Vec::with_capacity(params.blocks.len());
    for (b, block) in params.blocks.iter().enumerate() {
        check_block(&block.feature, rows, "feature-mixing")?;
        check_block(&block.time, cols, "time-mixing")?;
        let (u, fc) = mlp_forward(&block.feature, h.view(), cfg.activation, eps, dropout_for(&mut dropout, cfg));
        let (yt, tc) = mlp_forward(&block.time, u.t(), cfg.activation, eps, dropout_for(&mut dropout, cfg));
        h = yt.reversed_axes();
        if !h.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("output of block {b}")));
        }
        caches.push((fc, tc));
    }
    let z = h.mean_axis(Axis(1)).expect("at least one column");
    Ok((
        z,
        Trace {
            patches,
            blocks: caches,
            cols,
        },
    ))
}

/// Runs the mixer blocks and averages the output over the step axis.
pub fn encoder_forward<T: Scalar>(x: ArrayView2<T>, params: &MixerParams<T>, cfg: &MixerConfig) -> Result<Array1<T>> {
    forward_traced(x, params, cfg, None).map(|(z, _)| z)
}

/// Encoder forward on a single-precision feature matrix.
pub fn embed(feat: &FeatureMatrix, params: &MixerParams<f32>, cfg: &MixerConfig) -> Result<Embedding> {
    let z = encoder_forward(feat.values.view(), params, cfg)?;
    Ok(Embedding(z.to_vec()))
}

pub fn decoder_forward<T: Scalar>(z: ArrayView1<T>, params: &MixerParams<T>) -> Result<Array1<T>> {
    let dec = params.decoder.as_ref().ok_or(Error::MissingDecoder)?;
    if dec.in_dim() != z.len() {
        return Err(Error::ShapeMismatch(format!(
            "decoder expects {} inputs, embedding has {}",
            dec.in_dim(),
            z.len()
        )));
    }
    Ok(dec.weight.dot(&z) + &dec.bias)
}

fn softmax<T: Scalar>(logits: ArrayView1<T>) -> Array1<T> {
    let max = logits.fold(T::neg_infinity(), |m, &v| m.max(v));
    let exp = logits.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// `-log softmax(logits)[label]`.
pub fn cross_entropy<T: Scalar>(logits: ArrayView1<T>, label: usize) -> Result<T> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: logits.len(),
        });
    }
    let max = logits.fold(T::neg_infinity(), |m, &v| m.max(v));
    let lse = logits.fold(T::zero(), |acc, &v| acc + (v - max).exp()).ln() + max;
    Ok(lse - logits[label])
}

/// Predicted class for one input.
pub fn classify<T: Scalar>(x: ArrayView2<T>, params: &MixerParams<T>, cfg: &MixerConfig) -> Result<usize> {
    let z = encoder_forward(x, params, cfg)?;
    let logits = decoder_forward(z.view(), params)?;
    Ok(argmax(logits.view()))
}

pub(crate) fn argmax<T: Scalar>(v: ArrayView1<T>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn sample_loss_and_gradients<T: Scalar>(
    x: ArrayView2<T>,
    label: usize,
    params: &MixerParams<T>,
    cfg: &MixerConfig,
    dropout: Option<&mut Rng>,
) -> Result<(T, Gradients<T>)> {
    let (z, trace) = forward_traced(x, params, cfg, dropout)?;
    let logits = decoder_forward(z.view(), params)?;
    let loss = cross_entropy(logits.view(), label)?;

    let mut grads = params.zeros_like();
    let mut d_logits = softmax(logits.view());
    d_logits[label] = d_logits[label] - T::one();

    let dec = params.decoder.as_ref().ok_or(Error::MissingDecoder)?;
    let g_dec = grads.decoder.as_mut().ok_or(Error::MissingDecoder)?;
    g_dec.weight += &d_logits
        .view()
        .insert_axis(Axis(1))
        .dot(&z.view().insert_axis(Axis(0)));
    g_dec.bias += &d_logits;
    let d_z = dec.weight.t().dot(&d_logits);

    // mean pooling spreads the gradient evenly over the steps
    let scale = T::one() / T::from_usize(trace.cols).unwrap();
    let mut d_h = Array2::from_shape_fn((d_z.len(), trace.cols), |(i, _)| d_z[i] * scale);
    for ((block, (fc, tc)), g) in params
        .blocks
        .iter()
        .zip(&trace.blocks)
        .zip(grads.blocks.iter_mut())
        .rev()
    {
        let d_u = mlp_backward(&block.time, tc, d_h.t(), cfg.activation, &mut g.time).reversed_axes();
        d_h = mlp_backward(&block.feature, fc, d_u.view(), cfg.activation, &mut g.feature);
    }
    if let (Some(p), Some(g)) = (&trace.patches, grads.patch_embed.as_mut()) {
        g.weight += &d_h.dot(&p.t());
        g.bias += &d_h.sum_axis(Axis(1));
    }
    Ok((loss, grads))
}

/// Dropout randomness for a training pass: sample `i` of the batch uses
/// ChaCha stream `stream_base + i` of `seed`.
#[derive(Debug, Clone, Copy)]
pub struct DropoutSeed {
    pub seed: u64,
    pub stream_base: u64,
}

/// Mean cross-entropy over the batch and its exact gradient. No dropout.
pub fn loss_and_gradients<T: Scalar>(
    batch: &[(ArrayView2<'_, T>, usize)],
    params: &MixerParams<T>,
    cfg: &MixerConfig,
) -> Result<(T, Gradients<T>)> {
    loss_and_gradients_with(batch, params, cfg, None)
}

/// Like [`loss_and_gradients`], with dropout enabled when `dropout` is set
/// and `cfg.dropout > 0`.
///
/// Samples are processed on the current rayon pool; per-sample results are
/// summed in batch order so the output does not depend on thread count.
pub fn loss_and_gradients_with<T: Scalar>(
    batch: &[(ArrayView2<'_, T>, usize)],
    params: &MixerParams<T>,
    cfg: &MixerConfig,
    dropout: Option<DropoutSeed>,
) -> Result<(T, Gradients<T>)> {
    if batch.is_empty() {
        return Err(Error::ShapeMismatch("empty batch".into()));
    }
    let per_sample: Vec<Result<(T, Gradients<T>)>> = batch
        .par_iter()
        .enumerate()
        .map(|(i, (x, label))| {
            let mut rng = dropout
                .filter(|_| cfg.dropout > 0.0)
                .map(|d| seeded(d.seed, d.stream_base + i as u64));
            sample_loss_and_gradients(x.view(), *label, params, cfg, rng.as_mut())
        })
        .collect();

    let mut total = T::zero();
    let mut grads: Option<Gradients<T>> = None;
    for result in per_sample {
        let (loss, g) = result?;
        total = total + loss;
        match grads.as_mut() {
            None => grads = Some(g),
            Some(acc) => acc.add_scaled(&g, T::one())?,
        }
    }
    let n = T::from_usize(batch.len()).unwrap();
    let mean = total / n;
    if !mean.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    let mut grads = grads.expect("nonempty batch");
    grads.scale(T::one() / n);
    Ok((mean, grads))
}
