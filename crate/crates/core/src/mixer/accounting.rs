//! Parameter and multiply-accumulate counts.
//!
//! Conventions: parameters are every trainable scalar of the encoder (both
//! LayerNorm vectors, weights and biases of every linear layer, the patch
//! embedding when present). MACs are one per scalar multiply in the linear
//! layers for a single window; LayerNorm, activations and pooling are not
//! counted. The classification head is excluded unless requested.

use serde::Serialize;

use super::{InputMode, MixerConfig};

pub const CONVENTION: &str = "params: trainable scalars of the encoder (LayerNorm gamma/beta, linear weights and biases, patch embedding if any); \
macs: one per scalar multiply in linear layers for one window, excluding LayerNorm, activation and pooling; decoder head excluded unless listed separately";

fn mlp_params(dim: usize, hidden: usize) -> u64 {
    let (d, h) = (dim as u64, hidden as u64);
    2 * d + (h * d + h) + (d * h + d)
}

pub fn count_params(cfg: &MixerConfig) -> u64 {
    let (rows, cols) = cfg.block_dims();
    let per_block = mlp_params(rows, cfg.h) + mlp_params(cols, cfg.g);
    let stem = match cfg.input_mode {
        InputMode::PatchEmbed => (rows * rows + rows) as u64,
        _ => 0,
    };
    stem + cfg.n_blocks as u64 * per_block
}

pub fn count_macs(cfg: &MixerConfig) -> u64 {
    let (rows, cols) = cfg.block_dims();
    let (r, c) = (rows as u64, cols as u64);
    // W1 and W2 each touch every column once; likewise W3 and W4 per row.
    let per_block = 2 * cfg.h as u64 * r * c + 2 * cfg.g as u64 * c * r;
    let stem = match cfg.input_mode {
        InputMode::PatchEmbed => r * r * c,
        _ => 0,
    };
    stem + cfg.n_blocks as u64 * per_block
}

pub fn count_decoder_params(cfg: &MixerConfig) -> u64 {
    let k = cfg.num_classes as u64;
    k * cfg.embedding_dim() as u64 + k
}

pub fn count_decoder_macs(cfg: &MixerConfig) -> u64 {
    cfg.num_classes as u64 * cfg.embedding_dim() as u64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModelSize {
    pub encoder_params: u64,
    pub encoder_macs: u64,
    pub decoder_params: u64,
    pub decoder_macs: u64,
}

impl ModelSize {
    pub fn of(cfg: &MixerConfig) -> Self {
        Self {
            encoder_params: count_params(cfg),
            encoder_macs: count_macs(cfg),
            decoder_params: count_decoder_params(cfg),
            decoder_macs: count_decoder_macs(cfg),
        }
    }

    pub fn total_params(&self) -> u64 {
        self.encoder_params + self.decoder_params
    }
}
