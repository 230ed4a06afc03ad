//! MFCC frontend and per-window cepstral mean/variance normalization.
//!
//! Pipeline for one 1 s window at 16 kHz:
//!
//! 1. pre-emphasis `y[n] = x[n] - a * x[n-1]`
//! 2. reflect padding of half a window on each side (centered frames)
//! 3. periodic Hann window, 400 samples, hop 200, zero-padded to the FFT size
//! 4. power spectrum
//! 5. triangular mel filterbank on the HTK mel scale
//! 6. natural log with a floor
//! 7. orthonormal DCT-II
//!
//! With the default configuration this yields exactly 81 frames of 81
//! coefficients.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontendConfig {
    pub sample_rate: u32,
    pub win_ms: f64,
    pub hop_ms: f64,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub fft_size: usize,
    pub preemphasis: f64,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub log_floor: f64,
    pub cmvn_eps: f64,
    /// Length in seconds of the audio consumed per feature matrix.
    pub clip_s: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            win_ms: 25.0,
            hop_ms: 12.5,
            n_mels: 81,
            n_mfcc: 81,
            fft_size: 512,
            preemphasis: 0.97,
            f_min_hz: 0.0,
            f_max_hz: 8_000.0,
            log_floor: 1e-10,
            cmvn_eps: 1e-8,
            clip_s: 1.0,
        }
    }
}

impl FrontendConfig {
    pub fn win_samples(&self) -> usize {
        (self.win_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.hop_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn clip_samples(&self) -> usize {
        (self.clip_s * self.sample_rate as f64).round() as usize
    }

    pub fn n_frames(&self) -> usize {
        let padded = self.clip_samples() + 2 * (self.win_samples() / 2);
        1 + (padded - self.win_samples()) / self.hop_samples()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_mfcc == 0 || self.n_mfcc > self.n_mels {
            return bad(format!("n_mfcc {} must be in 1..={}", self.n_mfcc, self.n_mels));
        }
        let win = self.win_samples();
        if win < 2 || self.hop_samples() == 0 {
            return bad("window and hop must be positive".into());
        }
        if self.fft_size < win {
            return bad(format!("fft_size {} shorter than window {win}", self.fft_size));
        }
        if self.clip_samples() < win {
            return bad("clip shorter than one window".into());
        }
        if !(self.f_min_hz >= 0.0 && self.f_min_hz < self.f_max_hz)
            || self.f_max_hz > self.sample_rate as f64 / 2.0
        {
            return bad(format!("mel range {}..{} Hz", self.f_min_hz, self.f_max_hz));
        }
        if !(self.log_floor > 0.0 && self.cmvn_eps > 0.0) {
            return bad("log_floor and cmvn_eps must be positive".into());
        }
        Ok(())
    }
}

/// Coefficient-by-frame feature grid: rows are cepstral coefficients,
/// columns are frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Array2<f32>,
}

impl FeatureMatrix {
    pub fn n_coeffs(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.values.ncols()
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Precomputed window, filterbank and DCT basis for one [`FrontendConfig`].
#[derive(Clone)]
pub struct Frontend {
    cfg: FrontendConfig,
    window: Vec<f64>,
    /// n_mels x (fft_size / 2 + 1)
    mel_basis: Array2<f64>,
    /// n_mfcc x n_mels
    dct: Array2<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl Frontend {
    pub fn new(cfg: FrontendConfig) -> Result<Self> {
        cfg.validate()?;
        let win = cfg.win_samples();
        let window = (0..win)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / win as f64).cos())
            .collect();
        let mel_basis = mel_filterbank(&cfg);
        let dct = dct2_orthonormal(cfg.n_mfcc, cfg.n_mels);
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Ok(Self {
            cfg,
            window,
            mel_basis,
            dct,
            fft,
        })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.cfg
    }

    /// Log mel energies, n_mels x n_frames, before the DCT.
    pub fn log_mel(&self, clip: &AudioClip) -> Result<Array2<f64>> {
        let cfg = &self.cfg;
        let expected = cfg.clip_samples();
        if clip.len() != expected {
            return Err(Error::WrongClipLength {
                expected,
                actual: clip.len(),
            });
        }
        let emphasized = preemphasize(&clip.samples, cfg.preemphasis);
        let pad = cfg.win_samples() / 2;
        let padded = reflect_pad(&emphasized, pad);
        let (win, hop) = (cfg.win_samples(), cfg.hop_samples());
        let n_frames = cfg.n_frames();
        let n_bins = cfg.fft_size / 2 + 1;

        let mut out = Array2::zeros((cfg.n_mels, n_frames));
        let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
        let mut power = vec![0.0; n_bins];
        for frame in 0..n_frames {
            let start = frame * hop;
            buf.fill(Complex::new(0.0, 0.0));
            for (i, slot) in buf.iter_mut().take(win).enumerate() {
                slot.re = padded[start + i] * self.window[i];
            }
            self.fft.process(&mut buf);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            for (m, row) in self.mel_basis.outer_iter().enumerate() {
                let energy: f64 = row.iter().zip(&power).map(|(w, p)| w * p).sum();
                out[[m, frame]] = energy.max(cfg.log_floor).ln();
            }
        }
        Ok(out)
    }

    pub fn mfcc(&self, clip: &AudioClip) -> Result<FeatureMatrix> {
        let log_mel = self.log_mel(clip)?;
        let cepstra = self.dct.dot(&log_mel);
        Ok(FeatureMatrix {
            values: cepstra.mapv(|v| v as f32),
        })
    }

    /// MFCC followed by CMVN: the encoder's input for one window.
    pub fn features(&self, clip: &AudioClip) -> Result<FeatureMatrix> {
        Ok(apply_cmvn(&self.mfcc(clip)?, self.cfg.cmvn_eps))
    }
}

/// One-shot MFCC; prefer [`Frontend`] when processing many clips.
pub fn compute_mfcc(clip: &AudioClip, cfg: &FrontendConfig) -> Result<FeatureMatrix> {
    Frontend::new(cfg.clone())?.mfcc(clip)
}

/// Normalizes each coefficient row to zero mean and unit variance over time.
pub fn apply_cmvn(feat: &FeatureMatrix, eps: f64) -> FeatureMatrix {
    let mut values = feat.values.clone();
    for mut row in values.axis_iter_mut(Axis(0)) {
        let n = row.len() as f64;
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        let inv = 1.0 / (var + eps).sqrt();
        row.mapv_inplace(|v| ((v as f64 - mean) * inv) as f32);
    }
    FeatureMatrix { values }
}

fn preemphasize(x: &[f32], coeff: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut prev = 0.0;
    for &s in x {
        let s = s as f64;
        out.push(s - coeff * prev);
        prev = s;
    }
    out
}

/// Mirror padding that does not repeat the edge sample.
fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    assert!(n > pad, "signal too short to reflect-pad");
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| x[i]));
    out.extend_from_slice(x);
    out.extend((0..pad).map(|i| x[n - 2 - i]));
    out
}

fn mel_filterbank(cfg: &FrontendConfig) -> Array2<f64> {
    let n_bins = cfg.fft_size / 2 + 1;
    let (lo, hi) = (hz_to_mel(cfg.f_min_hz), hz_to_mel(cfg.f_max_hz));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz = cfg.sample_rate as f64 / cfg.fft_size as f64;
    Array2::from_shape_fn((cfg.n_mels, n_bins), |(m, k)| {
        let f = k as f64 * bin_hz;
        let rise = (f - edges[m]) / (edges[m + 1] - edges[m]);
        let fall = (edges[m + 2] - f) / (edges[m + 2] - edges[m + 1]);
        rise.min(fall).max(0.0)
    })
}

fn dct2_orthonormal(n_out: usize, n_in: usize) -> Array2<f64> {
    let n = n_in as f64;
    Array2::from_shape_fn((n_out, n_in), |(k, i)| {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        scale * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos()
    })
}
