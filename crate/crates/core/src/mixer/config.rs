use serde::{Deserialize, Serialize};

use super::ActivationKind;
use crate::error::{Error, Result};

/// How the coefficient-by-frame matrix is presented to the mixer blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// Features and frames are mixed directly.
    Direct,
    /// Non-overlapping patches, each linearly embedded by a shared layer.
    PatchEmbed,
    /// Non-overlapping patches flattened into columns, no learned weights.
    PatchReshape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixerConfig {
    /// Feature (coefficient) dimension of the input.
    pub f: usize,
    /// Time (frame) dimension of the input.
    pub t: usize,
    /// Hidden width of the feature-mixing MLP.
    pub h: usize,
    /// Hidden width of the time-mixing MLP.
    pub g: usize,
    pub n_blocks: usize,
    pub activation: ActivationKind,
    #[serde(default)]
    pub dropout: f64,
    pub input_mode: InputMode,
    /// Side length of the square patches used by the patched input modes.
    #[serde(default = "default_patch")]
    pub patch: usize,
    /// Width of the classification head; 0 means no head.
    #[serde(default)]
    pub num_classes: usize,
    #[serde(default = "default_ln_eps")]
    pub ln_eps: f64,
}

fn default_patch() -> usize {
    9
}

fn default_ln_eps() -> f64 {
    1e-5
}

impl Default for MixerConfig {
    /// 12 blocks, 64 hidden units in both mixers, Hardswish, no dropout,
    /// on 81x81 inputs.
    fn default() -> Self {
        Self {
            f: 81,
            t: 81,
            h: 64,
            g: 64,
            n_blocks: 12,
            activation: ActivationKind::Hardswish,
            dropout: 0.0,
            input_mode: InputMode::Direct,
            patch: 9,
            num_classes: 0,
            ln_eps: default_ln_eps(),
        }
    }
}

impl MixerConfig {
    pub fn with_classes(mut self, num_classes: usize) -> Self {
        self.num_classes = num_classes;
        self
    }

    /// Shape of the matrix the blocks operate on: (mixed features, mixed
    /// steps). Equal to `(f, t)` for direct input.
    pub fn block_dims(&self) -> (usize, usize) {
        match self.input_mode {
            InputMode::Direct => (self.f, self.t),
            InputMode::PatchEmbed | InputMode::PatchReshape => {
                let p = self.patch;
                (p * p, (self.f / p) * (self.t / p))
            }
        }
    }

    /// Length of the pooled embedding.
    pub fn embedding_dim(&self) -> usize {
        self.block_dims().0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.f == 0 || self.t == 0 || self.h == 0 || self.g == 0 {
            return bad(format!(
                "dimensions must be positive (f={}, t={}, h={}, g={})",
                self.f, self.t, self.h, self.g
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.ln_eps >= 0.0) {
            return bad(format!("ln_eps {}", self.ln_eps));
        }
        if self.input_mode != InputMode::Direct
            && (self.patch == 0 || self.f % self.patch != 0 || self.t % self.patch != 0)
        {
            return bad(format!(
                "patch {} does not divide input {}x{}",
                self.patch, self.f, self.t
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_direct() {
        let cfg = MixerConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.block_dims(), (81, 81));
        assert_eq!(cfg.embedding_dim(), 81);
    }

    #[test]
    fn patched_dims() {
        let cfg = MixerConfig {
            input_mode: InputMode::PatchEmbed,
            ..Default::default()
        };
        assert_eq!(cfg.block_dims(), (81, 81));
        let cfg = MixerConfig {
            f: 8,
            t: 12,
            patch: 4,
            input_mode: InputMode::PatchReshape,
            ..Default::default()
        };
        assert_eq!(cfg.block_dims(), (16, 6));
    }

    #[test]
    fn rejects_bad_values() {
        for cfg in [
            MixerConfig { h: 0, ..Default::default() },
            MixerConfig { dropout: 1.0, ..Default::default() },
            MixerConfig {
                patch: 7,
                input_mode: InputMode::PatchReshape,
                ..Default::default()
            },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn json_round_trip_uses_readable_names() {
        let cfg = MixerConfig::default();
        let s = serde_json::to_string(&cfg).unwrap();
        assert!(s.contains("\"hardswish\""));
        assert!(s.contains("\"direct\""));
        let back: MixerConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cfg);
    }
}
