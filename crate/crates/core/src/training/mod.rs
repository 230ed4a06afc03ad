//! Word-classification pretraining: manifests, augmentation, Adam, the
//! training loop, checkpoints and a synthetic dataset generator.

mod adam;
mod checkpoint;
mod example;
mod manifest;
pub mod synth;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{fingerprint, Checkpoint, MAGIC, VERSION};
pub use example::{draw_snr, make_training_example, prepare_example, AugmentConfig, NoisePool};
pub use manifest::{load_manifest, parse_manifest, Manifest, ManifestEntry, ManifestRow, Split};
pub use synth::{generate_dataset, SynthSpec, SynthSummary};
pub use trainer::{accuracy, clean_examples, train, write_metrics_jsonl, EpochMetrics, TrainConfig, TrainOutcome};
