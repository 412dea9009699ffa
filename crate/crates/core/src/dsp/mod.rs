//! Audio I/O, STFT analysis/synthesis, log1p featurization, SNR-controlled
//! mixing, and the synthetic labeled mini-corpus generator.

mod corpus;
mod mix;
mod stft;
mod wav;

pub use corpus::{
    default_templates, frame_labels, generate_corpus, synth_noise, LabeledSegment, MiniCorpusSpec,
    SegmentKind, SegmentTemplate, Utterance,
};
pub use mix::{mix_at_snr, random_noise_offset};
pub use stft::{defeaturize, featurize, hamming, istft, stft};
pub use wav::{read_wav, write_wav, SampleFormat};

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by the DSP layer.
#[derive(Debug, Error)]
pub enum DspError {
    /// Malformed container or header.
    #[error("format error: {0}")]
    Format(String),
    /// Recognized container but unsupported encoding.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// Signal shorter than one analysis window.
    #[error("signal too short: {got} samples, need at least {need}")]
    TooShort { got: usize, need: usize },
    /// Zero-power signal where power is required.
    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),
    /// Dimension/shape mismatch between paired inputs.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// Invalid generator or parameter configuration.
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mono sampled audio. Samples are dimensionless amplitudes, nominally in
/// [-1, 1]; all internal arithmetic is double precision.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        assert!(sample_rate_hz > 0, "sample rate must be positive");
        Waveform { samples, sample_rate_hz }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean square over all samples.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }
}

/// Analysis window shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hamming,
}

/// STFT framing parameters. The default (512, 256, hamming, 512) realizes a
/// 32 ms window with a 16 ms hop at 16 kHz and yields 257 frequency bins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftParams {
    pub window_len: usize,
    pub hop: usize,
    pub window_kind: WindowKind,
    pub fft_len: usize,
}

impl Default for StftParams {
    fn default() -> Self {
        StftParams { window_len: 512, hop: 256, window_kind: WindowKind::Hamming, fft_len: 512 }
    }
}

impl StftParams {
    /// Frame count for a signal of `n` samples: T = 1 + floor((n - L) / H).
    /// Trailing samples shorter than one window are dropped.
    pub fn num_frames(&self, n: usize) -> Option<usize> {
        if n < self.window_len {
            None
        } else {
            Some(1 + (n - self.window_len) / self.hop)
        }
    }

    /// Retained bin count: fft_len / 2 + 1.
    pub fn num_bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    pub fn validate(&self) -> Result<(), DspError> {
        if self.window_len == 0 || self.hop == 0 || self.fft_len == 0 {
            return Err(DspError::Config("stft dims must be positive".into()));
        }
        if self.hop > self.window_len {
            return Err(DspError::Config("hop must not exceed window length".into()));
        }
        if self.fft_len < self.window_len {
            return Err(DspError::Config("fft length must cover the window".into()));
        }
        Ok(())
    }
}

/// Complex STFT frames, T x F row-major with F = fft_len/2 + 1 bins.
#[derive(Clone, Debug)]
pub struct ComplexSpectrogram {
    pub data: Vec<Complex64>,
    pub num_frames: usize,
    pub num_bins: usize,
    pub params: StftParams,
    pub original_len: usize,
    pub sample_rate_hz: u32,
}

impl ComplexSpectrogram {
    pub fn at(&self, t: usize, f: usize) -> Complex64 {
        self.data[t * self.num_bins + f]
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.num_bins..(t + 1) * self.num_bins]
    }

    /// Magnitude-squared energy summed over frames, counting the dropped
    /// conjugate-symmetric bins so Parseval comparisons work on half spectra.
    pub fn total_energy(&self) -> f64 {
        let nyquist = self.num_bins - 1;
        let mut e = 0.0;
        for t in 0..self.num_frames {
            for f in 0..self.num_bins {
                let m2 = self.at(t, f).norm_sqr();
                let weight = if f == 0 || f == nyquist { 1.0 } else { 2.0 };
                e += weight * m2;
            }
        }
        e / self.params.fft_len as f64
    }
}

/// Nonnegative log1p magnitude features, T x F row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub values: Vec<f64>,
    pub num_frames: usize,
    pub num_bins: usize,
    pub params: StftParams,
}

impl FeatureMatrix {
    pub fn at(&self, t: usize, f: usize) -> f64 {
        self.values[t * self.num_bins + f]
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.num_bins..(t + 1) * self.num_bins]
    }
}

/// Per-bin phase angles kept aside for resynthesis with noisy phase.
#[derive(Clone, Debug)]
pub struct PhaseMatrix {
    pub angles: Vec<f64>,
    pub num_frames: usize,
    pub num_bins: usize,
}
