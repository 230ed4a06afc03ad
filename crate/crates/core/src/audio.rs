//! Mono 16 kHz PCM clips: WAV I/O, duration standardization and SNR mixing.

use std::path::Path;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>) -> Self {
        Self {
            samples,
            sample_rate: SAMPLE_RATE,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean of squared samples.
    pub fn power(&self) -> f64 {
        mean_power(&self.samples)
    }
}

pub(crate) fn mean_power(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / samples.len() as f64
}

/// Reads a 16 kHz mono PCM16 WAV file.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    // Past a successful open, read failures mean the content is short or bad.
    let reader = hound::WavReader::new(std::io::BufReader::new(file))
        .map_err(|e| Error::MalformedWav(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedEncoding(format!(
            "{:?} {}-bit",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    if spec.channels != 1 {
        return Err(Error::UnsupportedChannelCount(spec.channels));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::UnsupportedSampleRate(spec.sample_rate));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f32 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::MalformedWav(format!("{}: {e}", path.display())))?;
    Ok(AudioClip::new(samples))
}

/// Writes a clip as 16 kHz mono PCM16, clamping to the int16 range.
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wrap = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::MalformedWav(other.to_string()),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wrap)?;
    for &s in &clip.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(wrap)?;
    }
    writer.finalize().map_err(wrap)
}

/// Crops or zero-pads `clip` to exactly `target_s` seconds.
///
/// Longer clips keep a uniformly random contiguous crop; shorter clips are
/// placed at a uniformly random left offset with zeros on both sides.
pub fn standardize_duration(clip: &AudioClip, target_s: f64, rng: &mut Rng) -> Result<AudioClip> {
    if clip.is_empty() {
        return Err(Error::EmptyClip);
    }
    if !(target_s > 0.0) {
        return Err(Error::InvalidConfig(format!("target duration {target_s} s")));
    }
    let target = (target_s * clip.sample_rate as f64).round() as usize;
    let n = clip.len();
    let samples = if n == target {
        clip.samples.clone()
    } else if n > target {
        let start = rng.random_range(0..=n - target);
        clip.samples[start..start + target].to_vec()
    } else {
        let left = rng.random_range(0..=target - n);
        let mut out = vec![0.0; target];
        out[left..left + n].copy_from_slice(&clip.samples);
        out
    };
    Ok(AudioClip {
        samples,
        sample_rate: clip.sample_rate,
    })
}

/// Result of [`mix_noise_at_snr`].
#[derive(Debug, Clone)]
pub struct NoiseMix {
    pub mixed: AudioClip,
    /// Scale applied to the noise segment.
    pub gain: f64,
    /// Start of the noise segment inside the noise clip.
    pub noise_offset: usize,
}

/// Adds a random aligned segment of `noise`, scaled so the signal-to-noise
/// ratio is `snr_db`.
pub fn mix_noise_at_snr(
    signal: &AudioClip,
    noise: &AudioClip,
    snr_db: f64,
    rng: &mut Rng,
) -> Result<NoiseMix> {
    let n = signal.len();
    if noise.len() < n {
        return Err(Error::NoiseTooShort {
            signal: n,
            noise: noise.len(),
        });
    }
    let p_signal = signal.power();
    if !(p_signal > 0.0) {
        return Err(Error::ZeroPower("signal"));
    }
    let noise_offset = rng.random_range(0..=noise.len() - n);
    let segment = &noise.samples[noise_offset..noise_offset + n];
    let p_noise = mean_power(segment);
    if !(p_noise > 0.0) {
        return Err(Error::ZeroPower("noise"));
    }
    let gain = snr_gain(p_signal, p_noise, snr_db);
    let samples = signal
        .samples
        .iter()
        .zip(segment)
        .map(|(&s, &v)| (s as f64 + gain * v as f64) as f32)
        .collect();
    Ok(NoiseMix {
        mixed: AudioClip {
            samples,
            sample_rate: signal.sample_rate,
        },
        gain,
        noise_offset,
    })
}

/// Noise gain giving `snr_db` for the given signal and noise powers.
pub fn snr_gain(p_signal: f64, p_noise: f64, snr_db: f64) -> f64 {
    (p_signal / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt()
}
