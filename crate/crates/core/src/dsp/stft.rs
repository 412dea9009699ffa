//! STFT analysis/synthesis and the log1p feature mapping.
//!
//! Synthesis uses weighted overlap-add with squared-window normalization,
//! which reconstructs exactly for any window at any hop wherever the
//! normalizer is nonzero; the Hamming window at 50% overlap is not
//! constant-overlap-add on its own.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{ComplexSpectrogram, DspError, FeatureMatrix, PhaseMatrix, StftParams, Waveform};

/// Symmetric Hamming window.
pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Forward STFT. Frame t covers samples [t*hop, t*hop + window_len); bins
/// 0..fft_len/2 are retained.
pub fn stft(wave: &Waveform, params: StftParams) -> Result<ComplexSpectrogram, DspError> {
    params.validate()?;
    let n = wave.len();
    let num_frames = params
        .num_frames(n)
        .ok_or(DspError::TooShort { got: n, need: params.window_len })?;
    let num_bins = params.num_bins();
    let window = hamming(params.window_len);

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(params.fft_len);

    let mut data = vec![Complex64::default(); num_frames * num_bins];
    let mut buf = vec![Complex64::default(); params.fft_len];
    for t in 0..num_frames {
        let start = t * params.hop;
        for i in 0..params.fft_len {
            let v = if i < params.window_len { window[i] * wave.samples[start + i] } else { 0.0 };
            buf[i] = Complex64::new(v, 0.0);
        }
        fft.process(&mut buf);
        data[t * num_bins..(t + 1) * num_bins].copy_from_slice(&buf[..num_bins]);
    }

    Ok(ComplexSpectrogram {
        data,
        num_frames,
        num_bins,
        params,
        original_len: n,
        sample_rate_hz: wave.sample_rate_hz,
    })
}

/// Inverse STFT by weighted overlap-add. Samples where the squared-window
/// normalizer falls below 1e-8 are set to zero; the output is truncated to
/// the recorded original length.
pub fn istft(spec: &ComplexSpectrogram) -> Waveform {
    let p = spec.params;
    let window = hamming(p.window_len);
    let full_len = if spec.num_frames == 0 {
        0
    } else {
        (spec.num_frames - 1) * p.hop + p.window_len
    };

    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(p.fft_len);

    let mut acc = vec![0.0f64; full_len];
    let mut norm = vec![0.0f64; full_len];
    let mut buf = vec![Complex64::default(); p.fft_len];
    let scale = 1.0 / p.fft_len as f64;
    for t in 0..spec.num_frames {
        let frame = spec.frame(t);
        buf[..spec.num_bins].copy_from_slice(frame);
        // restore the conjugate-symmetric upper half
        for k in spec.num_bins..p.fft_len {
            buf[k] = frame[p.fft_len - k].conj();
        }
        ifft.process(&mut buf);
        let start = t * p.hop;
        for i in 0..p.window_len {
            acc[start + i] += buf[i].re * scale * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }

    let mut out = vec![0.0f64; spec.original_len];
    let copy_len = full_len.min(spec.original_len);
    for i in 0..copy_len {
        out[i] = if norm[i] < 1e-8 { 0.0 } else { acc[i] / norm[i] };
    }
    Waveform::new(out, spec.sample_rate_hz)
}

/// Splits a spectrogram into log1p magnitude features and phase angles.
pub fn featurize(spec: &ComplexSpectrogram) -> (FeatureMatrix, PhaseMatrix) {
    let mut values = Vec::with_capacity(spec.data.len());
    let mut angles = Vec::with_capacity(spec.data.len());
    for z in &spec.data {
        values.push(z.norm().ln_1p());
        angles.push(z.arg());
    }
    (
        FeatureMatrix {
            values,
            num_frames: spec.num_frames,
            num_bins: spec.num_bins,
            params: spec.params,
        },
        PhaseMatrix { angles, num_frames: spec.num_frames, num_bins: spec.num_bins },
    )
}

/// Inverts the log1p mapping and recombines with phase.
pub fn defeaturize(
    features: &FeatureMatrix,
    phase: &PhaseMatrix,
    original_len: usize,
    sample_rate_hz: u32,
) -> Result<ComplexSpectrogram, DspError> {
    if features.num_frames != phase.num_frames || features.num_bins != phase.num_bins {
        return Err(DspError::Shape(format!(
            "features {}x{} vs phase {}x{}",
            features.num_frames, features.num_bins, phase.num_frames, phase.num_bins
        )));
    }
    let data = features
        .values
        .iter()
        .zip(&phase.angles)
        .map(|(&v, &a)| {
            let mag = v.exp_m1().max(0.0);
            Complex64::from_polar(mag, a)
        })
        .collect();
    Ok(ComplexSpectrogram {
        data,
        num_frames: features.num_frames,
        num_bins: features.num_bins,
        params: features.params,
        original_len,
        sample_rate_hz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn noise(n: usize, seed: u64) -> Waveform {
        let mut rng = crate::rng::stream_rng(seed, "stft-test");
        Waveform::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), 16000)
    }

    #[test]
    fn frame_count_formula() {
        let p = StftParams::default();
        assert_eq!(p.num_frames(16000), Some(61));
        assert_eq!(p.num_frames(512), Some(1));
        assert_eq!(p.num_frames(511), None);
        assert_eq!(p.num_bins(), 257);
    }

    #[test]
    fn too_short_input_is_rejected() {
        let w = noise(100, 1);
        match stft(&w, StftParams::default()) {
            Err(DspError::TooShort { got: 100, need: 512 }) => {}
            other => panic!("expected TooShort, got {other:?}"),
        }
    }

    #[test]
    fn zero_input_gives_zero_spectrogram() {
        let w = Waveform::new(vec![0.0; 2048], 16000);
        let s = stft(&w, StftParams::default()).unwrap();
        assert!(s.data.iter().all(|z| z.norm() == 0.0));
        let back = istft(&s);
        assert!(back.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn pure_tone_peaks_at_expected_bin() {
        // 1 kHz at 16 kHz with a 512-point FFT lands on bin 1000/(16000/512) = 32.
        let w = Waveform::new(
            (0..16000)
                .map(|i| (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / 16000.0).sin())
                .collect(),
            16000,
        );
        let s = stft(&w, StftParams::default()).unwrap();
        let mut mean_mag = vec![0.0f64; s.num_bins];
        for t in 0..s.num_frames {
            for f in 0..s.num_bins {
                mean_mag[f] += s.at(t, f).norm();
            }
        }
        let argmax = mean_mag
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 32);

        // direct DFT oracle on the first frame
        let window = hamming(512);
        let mut oracle = vec![0.0f64; 257];
        for (k, o) in oracle.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for n in 0..512 {
                let x = window[n] * w.samples[n];
                let ang = -2.0 * std::f64::consts::PI * (k * n) as f64 / 512.0;
                re += x * ang.cos();
                im += x * ang.sin();
            }
            *o = (re * re + im * im).sqrt();
        }
        for f in 0..257 {
            assert!((oracle[f] - s.at(0, f).norm()).abs() < 1e-8, "bin {f}");
        }
    }

    #[test]
    fn round_trip_reconstructs_interior() {
        let p = StftParams::default();
        for seed in 0..3u64 {
            let w = noise(16000 + seed as usize * 777, seed);
            let s = stft(&w, p).unwrap();
            let back = istft(&s);
            assert_eq!(back.len(), w.len());
            let hi = w.len() - p.window_len;
            let max_err = (p.window_len..hi)
                .map(|i| (back.samples[i] - w.samples[i]).abs())
                .fold(0.0, f64::max);
            assert!(max_err < 1e-6, "seed {seed}: interior error {max_err}");
        }
    }

    #[test]
    fn single_frame_support_is_local() {
        let p = StftParams::default();
        let w = noise(4096, 9);
        let s = stft(&w, p).unwrap();
        let mut lone = s.clone();
        let keep = 3usize;
        for t in 0..lone.num_frames {
            if t != keep {
                for f in 0..lone.num_bins {
                    lone.data[t * lone.num_bins + f] = Complex64::default();
                }
            }
        }
        let back = istft(&lone);
        let (lo, hi) = (keep * p.hop, keep * p.hop + p.window_len);
        for (i, &x) in back.samples.iter().enumerate() {
            if i < lo || i >= hi {
                assert_eq!(x, 0.0, "leakage at sample {i}");
            }
        }
    }

    #[test]
    fn parseval_energy_matches_windowed_frames() {
        let p = StftParams::default();
        let w = noise(8000, 4);
        let s = stft(&w, p).unwrap();
        let window = hamming(p.window_len);
        let mut windowed_energy = 0.0;
        for t in 0..s.num_frames {
            for i in 0..p.window_len {
                let v = window[i] * w.samples[t * p.hop + i];
                windowed_energy += v * v;
            }
        }
        let spec_energy = s.total_energy();
        let rel = (spec_energy - windowed_energy).abs() / windowed_energy;
        assert!(rel < 0.01, "relative energy error {rel}");
    }

    #[test]
    fn featurize_round_trip() {
        let w = noise(4000, 5);
        let s = stft(&w, StftParams::default()).unwrap();
        let (feats, phase) = featurize(&s);
        assert!(feats.values.iter().all(|&v| v >= 0.0));
        let back = defeaturize(&feats, &phase, s.original_len, s.sample_rate_hz).unwrap();
        let max_err = back
            .data
            .iter()
            .zip(&s.data)
            .map(|(a, b)| (a.norm() - b.norm()).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-9, "magnitude error {max_err}");
    }

    #[test]
    fn log1p_fixed_points() {
        assert_eq!(0.0f64.ln_1p(), 0.0);
        let e_minus_1 = std::f64::consts::E - 1.0;
        assert!((e_minus_1.ln_1p() - 1.0).abs() < 1e-15);
        assert!((1.0f64.exp_m1() - e_minus_1).abs() < 1e-15);
    }

    #[test]
    fn defeaturize_shape_mismatch() {
        let w = noise(4000, 6);
        let s = stft(&w, StftParams::default()).unwrap();
        let (feats, mut phase) = featurize(&s);
        phase.num_frames -= 1;
        phase.angles.truncate(phase.num_frames * phase.num_bins);
        assert!(matches!(
            defeaturize(&feats, &phase, s.original_len, 16000),
            Err(DspError::Shape(_))
        ));
    }
}
