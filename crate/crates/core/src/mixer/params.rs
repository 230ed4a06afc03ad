use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD, Zip};
use rand::Rng as _;

use super::{InputMode, MixerConfig, Scalar};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Fully connected layer, `y = W x + b` with `W` stored out x in.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weight: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            weight: Array2::eye(dim),
            bias: Array1::zeros(dim),
        }
    }

    /// Weights uniform in `[-s, s]` with `s = sqrt(1 / in_dim)`, zero bias.
    pub fn uniform(out_dim: usize, in_dim: usize, rng: &mut Rng) -> Self {
        let bound = (1.0 / in_dim as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((out_dim, in_dim), || {
            T::from_f64(rng.random_range(-bound..=bound)).unwrap()
        });
        Self {
            weight,
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Per-element affine parameters of a LayerNorm.
#[derive(Debug, Clone, PartialEq)]
pub struct Norm<T> {
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
}

impl<T: Scalar> Norm<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
        }
    }
}

/// LayerNorm -> Linear -> activation -> Linear, with a residual around it.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpBlock<T> {
    pub norm: Norm<T>,
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
}

impl<T: Scalar> MlpBlock<T> {
    pub fn uniform(dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            norm: Norm::new(dim),
            fc1: Linear::uniform(hidden, dim, rng),
            fc2: Linear::uniform(dim, hidden, rng),
        }
    }

    /// Zero linear layers: the block is the identity map.
    pub fn identity(dim: usize, hidden: usize) -> Self {
        Self {
            norm: Norm::new(dim),
            fc1: Linear::zeros(hidden, dim),
            fc2: Linear::zeros(dim, hidden),
        }
    }

    pub fn dim(&self) -> usize {
        self.fc1.in_dim()
    }
}

/// One feature-mixing block followed by one time-mixing block.
#[derive(Debug, Clone, PartialEq)]
pub struct MixerBlock<T> {
    pub feature: MlpBlock<T>,
    pub time: MlpBlock<T>,
}

/// Every trainable tensor of the encoder, plus the optional patch embedding
/// and classification head. Also used as the gradient carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct MixerParams<T> {
    pub patch_embed: Option<Linear<T>>,
    pub blocks: Vec<MixerBlock<T>>,
    pub decoder: Option<Linear<T>>,
}

pub type Gradients<T> = MixerParams<T>;

/// Name and shape of one tensor in serialization order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl<T: Scalar> MixerParams<T> {
    pub fn init(cfg: &MixerConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let (rows, cols) = cfg.block_dims();
        let patch_embed = match cfg.input_mode {
            InputMode::PatchEmbed => Some(Linear::uniform(rows, rows, rng)),
            _ => None,
        };
        let blocks = (0..cfg.n_blocks)
            .map(|_| MixerBlock {
                feature: MlpBlock::uniform(rows, cfg.h, rng),
                time: MlpBlock::uniform(cols, cfg.g, rng),
            })
            .collect();
        let decoder = (cfg.num_classes > 0).then(|| Linear::uniform(cfg.num_classes, rows, rng));
        Ok(Self {
            patch_embed,
            blocks,
            decoder,
        })
    }

    /// Parameters whose blocks are all identity maps; the patch embedding,
    /// when present, is the identity and the decoder is zero.
    pub fn identity(cfg: &MixerConfig) -> Result<Self> {
        cfg.validate()?;
        let (rows, cols) = cfg.block_dims();
        Ok(Self {
            patch_embed: (cfg.input_mode == InputMode::PatchEmbed).then(|| Linear::identity(rows)),
            blocks: (0..cfg.n_blocks)
                .map(|_| MixerBlock {
                    feature: MlpBlock::identity(rows, cfg.h),
                    time: MlpBlock::identity(cols, cfg.g),
                })
                .collect(),
            decoder: (cfg.num_classes > 0).then(|| Linear::zeros(cfg.num_classes, rows)),
        })
    }

    /// Same tree with every entry zero.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, mut t) in out.tensors_mut() {
            t.fill(T::zero());
        }
        out
    }

    /// Inference copy without the classification head.
    pub fn without_decoder(&self) -> Self {
        Self {
            patch_embed: self.patch_embed.clone(),
            blocks: self.blocks.clone(),
            decoder: None,
        }
    }

    pub fn cast<U: Scalar>(&self) -> MixerParams<U> {
        let lin = |l: &Linear<T>| Linear {
            weight: l.weight.mapv(|v| U::from(v).unwrap()),
            bias: l.bias.mapv(|v| U::from(v).unwrap()),
        };
        let mlp = |m: &MlpBlock<T>| MlpBlock {
            norm: Norm {
                gamma: m.norm.gamma.mapv(|v| U::from(v).unwrap()),
                beta: m.norm.beta.mapv(|v| U::from(v).unwrap()),
            },
            fc1: lin(&m.fc1),
            fc2: lin(&m.fc2),
        };
        MixerParams {
            patch_embed: self.patch_embed.as_ref().map(lin),
            blocks: self
                .blocks
                .iter()
                .map(|b| MixerBlock {
                    feature: mlp(&b.feature),
                    time: mlp(&b.time),
                })
                .collect(),
            decoder: self.decoder.as_ref().map(lin),
        }
    }

    /// All tensors in serialization order.
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, T>)> {
        fn lin<'a, T: Scalar>(prefix: &str, l: &'a Linear<T>, out: &mut Vec<(String, ArrayViewD<'a, T>)>) {
            out.push((format!("{prefix}.weight"), l.weight.view().into_dyn()));
            out.push((format!("{prefix}.bias"), l.bias.view().into_dyn()));
        }
        let mut out = Vec::new();
        if let Some(pe) = &self.patch_embed {
            lin("patch_embed", pe, &mut out);
        }
        for (i, block) in self.blocks.iter().enumerate() {
            for (kind, mlp) in [("feature", &block.feature), ("time", &block.time)] {
                let p = format!("blocks.{i}.{kind}");
                out.push((format!("{p}.norm.gamma"), mlp.norm.gamma.view().into_dyn()));
                out.push((format!("{p}.norm.beta"), mlp.norm.beta.view().into_dyn()));
                lin(&format!("{p}.fc1"), &mlp.fc1, &mut out);
                lin(&format!("{p}.fc2"), &mlp.fc2, &mut out);
            }
        }
        if let Some(dec) = &self.decoder {
            lin("decoder", dec, &mut out);
        }
        out
    }

    /// Mutable views in the same order as [`tensors`](Self::tensors).
    pub fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, T>)> {
        fn lin<'a, T: Scalar>(prefix: &str, l: &'a mut Linear<T>, out: &mut Vec<(String, ArrayViewMutD<'a, T>)>) {
            out.push((format!("{prefix}.weight"), l.weight.view_mut().into_dyn()));
            out.push((format!("{prefix}.bias"), l.bias.view_mut().into_dyn()));
        }
        let mut out = Vec::new();
        if let Some(pe) = &mut self.patch_embed {
            lin("patch_embed", pe, &mut out);
        }
        for (i, block) in self.blocks.iter_mut().enumerate() {
            let MixerBlock { feature, time } = block;
            for (kind, mlp) in [("feature", feature), ("time", time)] {
                let p = format!("blocks.{i}.{kind}");
                let MlpBlock { norm, fc1, fc2 } = mlp;
                out.push((format!("{p}.norm.gamma"), norm.gamma.view_mut().into_dyn()));
                out.push((format!("{p}.norm.beta"), norm.beta.view_mut().into_dyn()));
                lin(&format!("{p}.fc1"), fc1, &mut out);
                lin(&format!("{p}.fc2"), fc2, &mut out);
            }
        }
        if let Some(dec) = &mut self.decoder {
            lin("decoder", dec, &mut out);
        }
        out
    }

    pub fn specs(&self) -> Vec<TensorSpec> {
        self.tensors()
            .into_iter()
            .map(|(name, t)| TensorSpec {
                name,
                shape: t.shape().to_vec(),
            })
            .collect()
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// `self += scale * other`, elementwise over congruent trees.
    pub fn add_scaled(&mut self, other: &Self, scale: T) -> Result<()> {
        self.check_congruent(other)?;
        for ((_, mut a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            Zip::from(&mut a).and(&b).for_each(|a, &b| *a = *a + scale * b);
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        for (_, mut t) in self.tensors_mut() {
            t.mapv_inplace(|v| v * factor);
        }
    }

    pub fn check_congruent(&self, other: &Self) -> Result<()> {
        if self.specs() != other.specs() {
            return Err(Error::ShapeMismatch("parameter trees differ".into()));
        }
        Ok(())
    }

    /// Rebuilds a tree of the given layout from flat tensors, checking sizes.
    pub fn from_tensors(template: &MixerConfig, flat: Vec<Vec<T>>) -> Result<Self> {
        let mut params = Self::identity(template)?;
        let mut tensors = params.tensors_mut();
        if tensors.len() != flat.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} tensors, got {}",
                tensors.len(),
                flat.len()
            )));
        }
        for ((name, view), values) in tensors.iter_mut().zip(flat) {
            if view.len() != values.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{name}: expected {} values, got {}",
                    view.len(),
                    values.len()
                )));
            }
            for (dst, src) in view.iter_mut().zip(values) {
                *dst = src;
            }
        }
        drop(tensors);
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn small() -> MixerConfig {
        MixerConfig {
            f: 8,
            t: 6,
            h: 4,
            g: 3,
            n_blocks: 2,
            num_classes: 3,
            ..Default::default()
        }
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = MixerConfig::default();
        let a = MixerParams::<f32>::init(&cfg, &mut seeded(0, 1)).unwrap();
        let b = MixerParams::<f32>::init(&cfg, &mut seeded(0, 1)).unwrap();
        assert_eq!(a, b);
        let c = MixerParams::<f32>::init(&cfg, &mut seeded(1, 1)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_contract() {
        let cfg = MixerConfig::default().with_classes(5);
        let p = MixerParams::<f32>::init(&cfg, &mut seeded(3, 1)).unwrap();
        for (name, t) in p.tensors() {
            if name.ends_with("gamma") {
                assert!(t.iter().all(|&v| v == 1.0), "{name}");
            } else if name.ends_with("beta") || name.ends_with("bias") {
                assert!(t.iter().all(|&v| v == 0.0), "{name}");
            } else {
                let fan_in = t.shape()[1];
                let bound = (1.0 / fan_in as f32).sqrt();
                assert!(t.iter().all(|v| v.abs() <= bound), "{name}");
            }
        }
    }

    #[test]
    fn tensor_order_and_shapes() {
        let mut p = MixerParams::<f64>::init(&small(), &mut seeded(0, 1)).unwrap();
        let specs = p.specs();
        assert_eq!(specs[0].name, "blocks.0.feature.norm.gamma");
        assert_eq!(specs[2].shape, vec![4, 8]);
        assert_eq!(specs[8].name, "blocks.0.time.fc1.weight");
        assert_eq!(specs[8].shape, vec![3, 6]);
        assert_eq!(specs.last().unwrap().name, "decoder.bias");
        assert_eq!(specs.len(), 2 * 2 * 6 + 2);

        let mut names: Vec<_> = p.tensors_mut().into_iter().map(|(n, _)| n).collect();
        let expected: Vec<_> = specs.into_iter().map(|s| s.name).collect();
        assert_eq!(names, expected);
        names.dedup();
        assert_eq!(names.len(), expected.len());
    }

    #[test]
    fn flat_round_trip_and_mismatch() {
        let cfg = small();
        let p = MixerParams::<f32>::init(&cfg, &mut seeded(0, 1)).unwrap();
        let flat: Vec<Vec<f32>> = p.tensors().iter().map(|(_, t)| t.iter().copied().collect()).collect();
        assert_eq!(MixerParams::from_tensors(&cfg, flat.clone()).unwrap(), p);
        let mut short = flat;
        short[0].pop();
        assert!(MixerParams::<f32>::from_tensors(&cfg, short).is_err());
    }

    #[test]
    fn add_scaled_and_cast() {
        let cfg = small();
        let mut a = MixerParams::<f64>::init(&cfg, &mut seeded(0, 1)).unwrap();
        let orig = a.clone();
        a.add_scaled(&orig, -1.0).unwrap();
        assert!(a.tensors().iter().all(|(_, t)| t.iter().all(|&v| v == 0.0)));
        let back: MixerParams<f64> = orig.cast::<f32>().cast();
        assert_eq!(back.specs(), orig.specs());
        let other = MixerParams::<f64>::init(&MixerConfig { h: 5, ..cfg }, &mut seeded(0, 1)).unwrap();
        assert!(a.add_scaled(&other, 1.0).is_err());
    }
}
