//! Binary checkpoint format.
//!
//! ```text
//! "QBEM"            4 bytes magic
//! version           u32 little-endian (currently 1)
//! header_len        u64 little-endian
//! header            header_len bytes of UTF-8 JSON
//! tensors           f32 little-endian, concatenated in header order
//! ```
//!
//! The JSON header holds the mixer and frontend configs, the label table, the
//! training step and the name and shape of every tensor.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::FrontendConfig;
use crate::mixer::{MixerConfig, MixerParams};

pub const MAGIC: &[u8; 4] = b"QBEM";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    mixer: MixerConfig,
    frontend: FrontendConfig,
    labels: Vec<String>,
    step: u64,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub mixer: MixerConfig,
    pub frontend: FrontendConfig,
    pub labels: Vec<String>,
    pub step: u64,
    pub params: MixerParams<f32>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            mixer: self.mixer.clone(),
            frontend: self.frontend.clone(),
            labels: self.labels.clone(),
            step: self.step,
            tensors: self
                .params
                .specs()
                .into_iter()
                .map(|s| TensorEntry {
                    name: s.name,
                    shape: s.shape,
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::InvalidHeader(e.to_string()))?;
        let mut out = Vec::with_capacity(16 + json.len() + 4 * self.params.num_values());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in self.params.tensors() {
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes.len() < 16 {
            return Err(Error::Truncated("preamble".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::VersionMismatch {
                expected: VERSION,
                found: version,
            });
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header_end = 16usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| Error::Truncated(format!("header of {header_len} bytes")))?;
        let header: Header =
            serde_json::from_slice(&bytes[16..header_end]).map_err(|e| Error::InvalidHeader(e.to_string()))?;

        let declared = header
            .tensors
            .iter()
            .try_fold(0usize, |acc, t| {
                t.shape
                    .iter()
                    .try_fold(1usize, |n, &d| n.checked_mul(d))
                    .and_then(|n| acc.checked_add(n))
            })
            .filter(|n| n.checked_mul(4).is_some())
            .ok_or_else(|| Error::InvalidHeader("tensor sizes overflow".into()))?;
        let payload = &bytes[header_end..];
        if payload.len() < 4 * declared {
            return Err(Error::Truncated(format!(
                "tensor region holds {} bytes, header declares {}",
                payload.len(),
                4 * declared
            )));
        }
        if payload.len() > 4 * declared {
            return Err(Error::InvalidHeader(format!(
                "{} trailing bytes after tensors",
                payload.len() - 4 * declared
            )));
        }

        let mut offset = 0;
        let flat: Vec<Vec<f32>> = header
            .tensors
            .iter()
            .map(|t| {
                let n: usize = t.shape.iter().product();
                let values = payload[offset..offset + 4 * n]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                offset += 4 * n;
                values
            })
            .collect();

        let has_decoder = header.tensors.iter().any(|t| t.name.starts_with("decoder."));
        let layout = if has_decoder {
            header.mixer.clone()
        } else {
            MixerConfig {
                num_classes: 0,
                ..header.mixer.clone()
            }
        };
        let params = MixerParams::from_tensors(&layout, flat)?;
        let expected: Vec<TensorEntry> = params
            .specs()
            .into_iter()
            .map(|s| TensorEntry {
                name: s.name,
                shape: s.shape,
            })
            .collect();
        if expected != header.tensors {
            return Err(Error::InvalidHeader("tensor table does not match the mixer config".into()));
        }
        Ok(Self {
            mixer: header.mixer,
            frontend: header.frontend,
            labels: header.labels,
            step: header.step,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Same model without the classification head.
    pub fn inference_only(&self) -> Self {
        Self {
            params: self.params.without_decoder(),
            ..self.clone()
        }
    }

    /// Hex digest identifying the encoder weights.
    pub fn fingerprint(&self) -> String {
        fingerprint(&self.params)
    }
}

/// First 64 bits of SHA-256 over the little-endian encoder tensor bytes.
///
/// The classification head is left out so a training checkpoint and its
/// inference export share a fingerprint.
pub fn fingerprint(params: &MixerParams<f32>) -> String {
    let mut hasher = Sha256::new();
    for (_, t) in params.without_decoder().tensors() {
        for v in t.iter() {
            hasher.update(v.to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    format!("{:016x}", u64::from_be_bytes(digest[..8].try_into().unwrap()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixer::InputMode;
    use crate::rng::seeded;

    fn checkpoint(mixer: MixerConfig) -> Checkpoint {
        Checkpoint {
            params: MixerParams::init(&mixer, &mut seeded(5, 1)).unwrap(),
            mixer,
            frontend: FrontendConfig::default(),
            labels: vec!["a".into(), "b".into(), "c".into()],
            step: 42,
        }
    }

    fn small() -> MixerConfig {
        MixerConfig {
            n_blocks: 2,
            num_classes: 3,
            ..Default::default()
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for mixer in [small(), MixerConfig { input_mode: InputMode::PatchEmbed, ..small() }] {
            let ck = checkpoint(mixer);
            let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
            assert_eq!(back.mixer, ck.mixer);
            assert_eq!(back.labels, ck.labels);
            assert_eq!(back.step, 42);
            for ((na, a), (nb, b)) in back.params.tensors().iter().zip(ck.params.tensors()) {
                assert_eq!(na, &nb);
                assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
    }

    #[test]
    fn inference_checkpoint_round_trip_and_fingerprint() {
        let ck = checkpoint(small());
        let inf = ck.inference_only();
        let back = Checkpoint::from_bytes(&inf.to_bytes().unwrap()).unwrap();
        assert!(back.params.decoder.is_none());
        assert_eq!(back, inf);
        assert_eq!(back.fingerprint(), ck.fingerprint());
        assert_eq!(ck.fingerprint().len(), 16);

        let mut other = ck.clone();
        other.params.blocks[0].feature.fc1.weight[[0, 0]] += 1e-3;
        assert_ne!(other.fingerprint(), ck.fingerprint());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = checkpoint(small()).to_bytes().unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        let err = Checkpoint::from_bytes(&bad).unwrap_err();
        assert!(matches!(err, Error::BadMagic));
        assert_eq!(err.to_string(), "bad magic");

        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(
            Checkpoint::from_bytes(&bad),
            Err(Error::VersionMismatch { expected: 1, found: 2 })
        ));

        let short = &bytes[..bytes.len() - 4];
        assert!(matches!(Checkpoint::from_bytes(short), Err(Error::Truncated(_))));

        let mut huge = bytes.clone();
        huge[8..16].copy_from_slice(&(1u64 << 40).to_le_bytes());
        assert!(matches!(Checkpoint::from_bytes(&huge), Err(Error::Truncated(_))));

        let mut long = bytes.clone();
        long.extend_from_slice(&[0; 4]);
        assert!(matches!(Checkpoint::from_bytes(&long), Err(Error::InvalidHeader(_))));
    }

    #[test]
    fn layout_is_self_describing() {
        let ck = checkpoint(small());
        let bytes = ck.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"QBEM");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[16..16 + hlen]).unwrap();
        assert_eq!(header["labels"][2], "c");
        assert_eq!(header["tensors"][0]["name"], "blocks.0.feature.norm.gamma");
        assert_eq!(bytes.len(), 16 + hlen + 4 * ck.params.num_values());
    }
}
