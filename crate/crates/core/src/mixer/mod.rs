//! Feature/time-mixing MLP encoder.
//!
//! The encoder is a stack of blocks, each a feature-mixing MLP (mixing the
//! coefficients of every frame) followed by a time-mixing MLP (mixing the
//! frames of every coefficient), both with LayerNorm and a residual
//! connection. The final matrix is averaged over time to give an embedding
//! the size of the feature axis.
//!
//! Numerics are generic over [`Scalar`] so gradient checks can run in f64
//! while training and inference use f32.

mod accounting;
mod activation;
mod config;
mod model;
mod ops;
mod params;
mod patch;

use std::fmt::{Debug, Display};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign};

pub use accounting::{count_decoder_macs, count_decoder_params, count_macs, count_params, ModelSize, CONVENTION};
pub use activation::ActivationKind;
pub use config::{InputMode, MixerConfig};
pub use model::{
    classify, cross_entropy, decoder_forward, embed, encoder_forward, feature_mixing_forward,
    loss_and_gradients, loss_and_gradients_with, time_mixing_forward, DropoutSeed, Embedding,
};
pub use ops::layer_norm;
pub use params::{Gradients, Linear, MixerBlock, MixerParams, MlpBlock, Norm, TensorSpec};
pub use patch::{patch_embed, patch_reshape, patch_unreshape, patchify};


/// Floating-point element type of parameters and activations.
pub trait Scalar:
    Float + NumAssign + FromPrimitive + LinalgScalar + ScalarOperand + Debug + Display + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float + NumAssign + FromPrimitive + LinalgScalar + ScalarOperand + Debug + Display + Send + Sync + 'static
{
}
