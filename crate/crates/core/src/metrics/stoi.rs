//! Short-time objective intelligibility.
//!
//! Follows the published algorithm: 10 kHz internal rate, silent-frame
//! removal 40 dB below the clean peak, 256/128 Hann frames zero-padded to a
//! 512-point FFT, 15 one-third-octave band envelopes from 150 Hz, per-band
//! per-segment normalization and clipping at beta = -15 dB, and the average
//! of the clean/processed envelope correlations over 30-frame segments.
//! 16 kHz inputs are resampled internally through a 63-tap Kaiser-windowed
//! polyphase filter (ratio 5/8).

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::MetricsError;
use crate::dsp::Waveform;

/// The fixed constants of the metric, exposed read-only.
#[derive(Clone, Copy, Debug)]
pub struct StoiConfig {
    pub internal_rate_hz: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub fft_len: usize,
    pub num_bands: usize,
    pub first_center_hz: f64,
    pub segment_frames: usize,
    pub silence_range_db: f64,
    pub clip_beta_db: f64,
}

impl StoiConfig {
    pub const fn standard() -> Self {
        StoiConfig {
            internal_rate_hz: 10_000,
            frame_len: 256,
            hop: 128,
            fft_len: 512,
            num_bands: 15,
            first_center_hz: 150.0,
            segment_frames: 30,
            silence_range_db: 40.0,
            clip_beta_db: -15.0,
        }
    }
}

const CFG: StoiConfig = StoiConfig::standard();

/// STOI score of `processed` against the `clean` reference. Inputs must
/// share a rate of 10 or 16 kHz; the processed signal is truncated or
/// zero-padded to the clean length.
pub fn stoi(clean: &Waveform, processed: &Waveform) -> Result<f64, MetricsError> {
    if clean.sample_rate_hz != processed.sample_rate_hz {
        return Err(MetricsError::Shape(format!(
            "sample rate mismatch: {} vs {}",
            clean.sample_rate_hz, processed.sample_rate_hz
        )));
    }
    let mut proc_samples = processed.samples.clone();
    if proc_samples.len() != clean.samples.len() {
        eprintln!(
            "warning: stoi length mismatch ({} vs {}), adjusting processed signal",
            proc_samples.len(),
            clean.samples.len()
        );
        proc_samples.resize(clean.samples.len(), 0.0);
    }

    let (x, y) = match clean.sample_rate_hz {
        10_000 => (clean.samples.clone(), proc_samples),
        16_000 => (resample_16k_to_10k(&clean.samples), resample_16k_to_10k(&proc_samples)),
        other => {
            return Err(MetricsError::Unsupported(format!("sample rate {other} Hz")));
        }
    };

    let (x, y) = remove_silent_frames(&x, &y);
    if x.len() < CFG.frame_len {
        return Err(MetricsError::TooShort(format!(
            "{} samples of active speech",
            x.len()
        )));
    }

    let xs = band_envelopes(&x);
    let ys = band_envelopes(&y);
    let frames = xs.len() / CFG.num_bands;
    if frames < CFG.segment_frames {
        return Err(MetricsError::TooShort(format!(
            "{frames} frames of active speech, need {}",
            CFG.segment_frames
        )));
    }

    let n = CFG.segment_frames;
    let clip = 1.0 + 10f64.powf(-CFG.clip_beta_db / 20.0);
    let mut total = 0.0;
    let mut cells = 0usize;
    let mut xseg = vec![0.0; n];
    let mut yseg = vec![0.0; n];
    let mut clipped = vec![0.0; n];
    for m in n..=frames {
        for j in 0..CFG.num_bands {
            for (i, t) in (m - n..m).enumerate() {
                xseg[i] = xs[t * CFG.num_bands + j];
                yseg[i] = ys[t * CFG.num_bands + j];
            }
            let ex: f64 = xseg.iter().map(|v| v * v).sum();
            let ey: f64 = yseg.iter().map(|v| v * v).sum();
            if ex < 1e-20 {
                // no clean energy in this band segment: nothing to score
                continue;
            }
            if ey < 1e-20 {
                cells += 1; // clean energy vanished entirely from processed
                continue;
            }
            let alpha = (ex / ey).sqrt();
            for i in 0..n {
                clipped[i] = (alpha * yseg[i]).min(clip * xseg[i]);
            }
            let mx = xseg.iter().sum::<f64>() / n as f64;
            let my = clipped.iter().sum::<f64>() / n as f64;
            let mut num = 0.0;
            let mut vx = 0.0;
            let mut vy = 0.0;
            for i in 0..n {
                let dx = xseg[i] - mx;
                let dy = clipped[i] - my;
                num += dx * dy;
                vx += dx * dx;
                vy += dy * dy;
            }
            if vx < 1e-24 {
                continue; // constant clean envelope carries no information
            }
            let d = if vy < 1e-24 { 0.0 } else { num / (vx.sqrt() * vy.sqrt()) };
            total += d;
            cells += 1;
        }
    }
    if cells == 0 {
        return Err(MetricsError::TooShort("no scoreable band segments".into()));
    }
    Ok(total / cells as f64)
}

/// MATLAB-style Hann window without zero endpoints.
fn hanning(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * (i + 1) as f64 / (len + 1) as f64).cos()))
        .collect()
}

/// Drops frames whose clean energy falls more than 40 dB below the loudest
/// frame, overlap-adding the kept frames of both signals identically.
fn remove_silent_frames(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (n, hop) = (CFG.frame_len, CFG.hop);
    if x.len() < n {
        return (x.to_vec(), y.to_vec());
    }
    let w = hanning(n);
    let num_frames = (x.len() - n) / hop + 1;
    let mut energies = Vec::with_capacity(num_frames);
    for f in 0..num_frames {
        let start = f * hop;
        let e: f64 = (0..n).map(|i| (x[start + i] * w[i]).powi(2)).sum();
        energies.push(10.0 * (e / n as f64).max(1e-300).log10());
    }
    let peak = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let keep: Vec<usize> =
        (0..num_frames).filter(|&f| energies[f] - peak + CFG.silence_range_db > 0.0).collect();

    let out_len = if keep.is_empty() { 0 } else { (keep.len() - 1) * hop + n };
    let mut xo = vec![0.0; out_len];
    let mut yo = vec![0.0; out_len];
    for (count, &f) in keep.iter().enumerate() {
        let src = f * hop;
        let dst = count * hop;
        for i in 0..n {
            xo[dst + i] += x[src + i] * w[i];
            yo[dst + i] += y[src + i] * w[i];
        }
    }
    (xo, yo)
}

/// One-third-octave band edges: centers 150 * 2^(j/3), edges a factor of
/// 2^(1/6) each side.
fn band_edges() -> Vec<(f64, f64)> {
    (0..CFG.num_bands)
        .map(|j| {
            let cf = CFG.first_center_hz * 2f64.powf(j as f64 / 3.0);
            (cf / 2f64.powf(1.0 / 6.0), cf * 2f64.powf(1.0 / 6.0))
        })
        .collect()
}

/// (frames x bands) envelope matrix, row-major over frames.
fn band_envelopes(x: &[f64]) -> Vec<f64> {
    let (n, hop, k) = (CFG.frame_len, CFG.hop, CFG.fft_len);
    let w = hanning(n);
    let edges = band_edges();
    let bin_hz = CFG.internal_rate_hz as f64 / k as f64;
    let num_frames = if x.len() < n { 0 } else { (x.len() - n) / hop + 1 };

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(k);
    let mut buf = vec![Complex64::default(); k];
    let mut out = vec![0.0; num_frames * CFG.num_bands];
    for f in 0..num_frames {
        let start = f * hop;
        for i in 0..k {
            let v = if i < n { x[start + i] * w[i] } else { 0.0 };
            buf[i] = Complex64::new(v, 0.0);
        }
        fft.process(&mut buf);
        for (j, &(lo, hi)) in edges.iter().enumerate() {
            let mut e = 0.0;
            for (bin, b) in buf.iter().enumerate().take(k / 2 + 1) {
                let freq = bin as f64 * bin_hz;
                if freq >= lo && freq < hi {
                    e += b.norm_sqr();
                }
            }
            out[f * CFG.num_bands + j] = e.sqrt();
        }
    }
    out
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    for k in 1..32 {
        term *= (x / (2.0 * k as f64)).powi(2);
        sum += term;
        if term < 1e-16 * sum {
            break;
        }
    }
    sum
}

/// 16 kHz to 10 kHz polyphase resampler (up 5, down 8) with a 63-tap
/// Kaiser-windowed sinc lowpass, group delay compensated.
pub(crate) fn resample_16k_to_10k(x: &[f64]) -> Vec<f64> {
    const UP: usize = 5;
    const DOWN: usize = 8;
    const TAPS: usize = 63;
    const BETA: f64 = 8.0;
    let half = (TAPS / 2) as isize; // 31

    let fc = 0.5 / DOWN as f64; // cutoff in cycles/sample at the upsampled rate
    let i0b = bessel_i0(BETA);
    let h: Vec<f64> = (0..TAPS)
        .map(|i| {
            let d = i as isize - half;
            let sinc = if d == 0 {
                2.0 * fc
            } else {
                let pd = std::f64::consts::PI * d as f64;
                (2.0 * std::f64::consts::PI * fc * d as f64).sin() / pd
            };
            let r = d as f64 / half as f64;
            let kaiser = bessel_i0(BETA * (1.0 - r * r).max(0.0).sqrt()) / i0b;
            sinc * kaiser * UP as f64
        })
        .collect();

    let out_len = x.len() * UP / DOWN;
    let mut out = vec![0.0; out_len];
    for (n, o) in out.iter_mut().enumerate() {
        let center = (n * DOWN) as isize + half;
        let mut acc = 0.0;
        for (k, &hk) in h.iter().enumerate() {
            let up_idx = center - k as isize;
            if up_idx >= 0 && up_idx as usize % UP == 0 {
                let src = up_idx as usize / UP;
                if src < x.len() {
                    acc += hk * x[src];
                }
            }
        }
        *o = acc;
    }
    out
}
