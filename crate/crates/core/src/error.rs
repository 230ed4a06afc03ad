use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed wav header: {0}")]
    MalformedWav(String),
    #[error("unsupported sample rate {0} Hz (expected 16000)")]
    UnsupportedSampleRate(u32),
    #[error("unsupported channel count {0} (expected mono)")]
    UnsupportedChannelCount(u16),
    #[error("unsupported encoding: {0} (expected 16-bit PCM)")]
    UnsupportedEncoding(String),

    #[error("empty audio clip")]
    EmptyClip,
    #[error("clip has {actual} samples, expected {expected}")]
    WrongClipLength { expected: usize, actual: usize },
    #[error("{0} has zero power")]
    ZeroPower(&'static str),
    #[error("noise clip too short: {noise} samples for a {signal}-sample signal")]
    NoiseTooShort { signal: usize, noise: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("model has no decoder head")]
    MissingDecoder,
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: u64 },

    #[error("manifest line {line}: {message}")]
    ManifestLine { line: usize, message: String },
    #[error("empty manifest")]
    EmptyManifest,
    #[error("need at least 2 classes, found {0}")]
    TooFewClasses(usize),
    #[error("empty training split")]
    EmptyTrainSplit,

    #[error("bad magic")]
    BadMagic,
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("invalid header: {0}")]
    InvalidHeader(String),

    #[error("profile fingerprint {profile} does not match model {model}")]
    FingerprintMismatch { profile: String, model: String },
    #[error("empty embedding sequence")]
    EmptySequence,
    #[error("no enrollment clips")]
    NoEnrollments,
    #[error("zero negative hours")]
    ZeroNegativeHours,
    #[error("{0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
