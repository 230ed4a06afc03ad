//! Mini-batch Adam training of the encoder plus a linear word classifier.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::checkpoint::Checkpoint;
use super::example::{prepare_example, AugmentConfig, NoisePool};
use super::manifest::{Manifest, Split};
use crate::audio::{load_wav, AudioClip};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Frontend, FrontendConfig};
use crate::mixer::{classify, loss_and_gradients_with, DropoutSeed, MixerConfig, MixerParams};
use crate::rng::{item_stream, seeded, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub snr_range_db: [f64; 2],
    pub noise_prob: f64,
    pub noise_dir: Option<PathBuf>,
    /// Reserved; room-impulse-response augmentation is not implemented.
    pub far_field: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            adam: AdamConfig::default(),
            seed: 0,
            snr_range_db: [4.0, 12.0],
            noise_prob: 1.0,
            noise_dir: None,
            far_field: false,
        }
    }
}

impl TrainConfig {
    pub fn augment(&self) -> AugmentConfig {
        AugmentConfig {
            noise_prob: self.noise_prob,
            snr_range_db: self.snr_range_db,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.far_field {
            return Err(Error::Unsupported("far-field augmentation is not implemented".into()));
        }
        self.augment().validate()?;
        if self.noise_prob > 0.0 && self.noise_dir.is_none() {
            return Err(Error::InvalidConfig("noise_prob > 0 requires noise_dir".into()));
        }
        Ok(())
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when the manifest has no valid split.
    pub valid_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best valid accuracy, ties broken by
    /// train loss. Without a valid split, the epoch with the lowest loss.
    pub checkpoint: Checkpoint,
    pub metrics: Vec<EpochMetrics>,
    pub best_epoch: usize,
}

/// Fraction of `examples` classified correctly.
pub fn accuracy(examples: &[(FeatureMatrix, usize)], params: &MixerParams<f32>, cfg: &MixerConfig) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let hits = examples
        .par_iter()
        .map(|(x, y)| classify(x.values.view(), params, cfg).map(|p| (p == *y) as usize))
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / examples.len() as f64)
}

/// Clean, deterministic features for a split: crop/pad uses a per-item
/// stream so the result is independent of the training seed's other uses.
pub fn clean_examples(
    clips: &[(AudioClip, usize)],
    frontend: &Frontend,
    seed: u64,
) -> Result<Vec<(FeatureMatrix, usize)>> {
    let aug = AugmentConfig {
        noise_prob: 0.0,
        ..Default::default()
    };
    clips
        .par_iter()
        .enumerate()
        .map(|(i, (clip, class))| {
            let mut rng = seeded(seed, item_stream(stream::VALID << 40, 0, i as u64));
            prepare_example(clip, &NoisePool::default(), &aug, frontend, &mut rng).map(|f| (f, *class))
        })
        .collect()
}

fn load_split(manifest: &Manifest, split: Split) -> Result<Vec<(AudioClip, usize)>> {
    manifest
        .split(split)
        .map(|e| load_wav(&e.audio_path).map(|c| (c, e.class)))
        .collect()
}

/// Trains on the manifest's train split. `on_epoch` sees each metrics row as
/// it is produced.
///
/// Randomness: parameter init, the epoch shuffle, each example's
/// augmentation and each step's dropout draw from separate streams of
/// `cfg.seed`, so the result does not depend on the rayon thread count.
pub fn train(
    manifest: &Manifest,
    cfg: &TrainConfig,
    mixer: &MixerConfig,
    frontend_cfg: &FrontendConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if manifest.num_classes() < 2 {
        return Err(Error::TooFewClasses(manifest.num_classes()));
    }
    let mixer = mixer.clone().with_classes(manifest.num_classes());
    mixer.validate()?;
    let frontend = Frontend::new(frontend_cfg.clone())?;
    let noise = match (&cfg.noise_dir, cfg.noise_prob > 0.0) {
        (Some(dir), true) => NoisePool::load_dir(dir)?,
        _ => NoisePool::default(),
    };

    let train_clips = load_split(manifest, Split::Train)?;
    if train_clips.is_empty() {
        return Err(Error::EmptyTrainSplit);
    }
    let valid = clean_examples(&load_split(manifest, Split::Valid)?, &frontend, cfg.seed)?;
    let aug = cfg.augment();

    let mut params = MixerParams::<f32>::init(&mixer, &mut seeded(cfg.seed, stream::INIT))?;
    let mut adam = AdamState::new(&params);
    let mut shuffle_rng = seeded(cfg.seed, stream::SHUFFLE);
    let mut order: Vec<usize> = (0..train_clips.len()).collect();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut best: Option<((f64, f64), usize, MixerParams<f32>)> = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let examples = chunk
                .par_iter()
                .map(|&i| {
                    let mut rng = seeded(cfg.seed, item_stream(stream::EXAMPLE_BASE, epoch as u64, i as u64));
                    let (clip, class) = &train_clips[i];
                    prepare_example(clip, &noise, &aug, &frontend, &mut rng).map(|f| (f, *class))
                })
                .collect::<Result<Vec<_>>>()?;
            let batch: Vec<_> = examples.iter().map(|(f, y)| (f.values.view(), *y)).collect();
            let step = adam.step + 1;
            let dropout = DropoutSeed {
                seed: cfg.seed,
                stream_base: (stream::DROPOUT << 48) + (step << 16),
            };
            let (loss, grads) = loss_and_gradients_with(&batch, &params, &mixer, Some(dropout)).map_err(|e| match e {
                Error::NonFinite(_) => Error::NonFiniteLoss { step },
                other => other,
            })?;
            adam_step(&mut params, &grads, &mut adam, &cfg.adam)?;
            if !params.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            loss_sum += loss as f64 * chunk.len() as f64;
        }

        let valid_acc = if valid.is_empty() {
            None
        } else {
            Some(accuracy(&valid, &params, &mixer)?)
        };
        let row = EpochMetrics {
            epoch: epoch + 1,
            train_loss: loss_sum / train_clips.len() as f64,
            valid_acc,
        };
        let row_loss = row.train_loss;
        on_epoch(&row);
        metrics.push(row);

        // higher valid accuracy wins; ties go to the lower train loss
        let key = (valid_acc.unwrap_or(0.0), -row_loss);
        let improved = match &best {
            None => true,
            Some((b, _, _)) => key.0 > b.0 || (key.0 == b.0 && key.1 > b.1),
        };
        if improved {
            best = Some((key, epoch + 1, params.clone()));
        }
    }

    let (best_epoch, params) = match best {
        Some((_, e, p)) => (e, p),
        None => (0, params),
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            mixer,
            frontend: frontend_cfg.clone(),
            labels: manifest.labels.clone(),
            step: adam.step,
            params,
        },
        metrics,
        best_epoch,
    })
}

/// One JSON object per line.
pub fn write_metrics_jsonl(metrics: &[EpochMetrics], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for m in metrics {
        serde_json::to_writer(&mut out, m).expect("serializable metrics");
        out.push(b'\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}
