//! Synthetic labeled mini-corpus generator.
//!
//! Utterances are concatenations of labeled segments drawn from a small set
//! of spectrally distinct templates. Template names reuse TIMIT phone symbols
//! so the bundled manner/place tables cover them, and segment spans are
//! recorded exactly like TIMIT `.PHN` triplets (start_sample end_sample
//! label).

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{hamming, DspError, StftParams, Waveform};
use crate::threads;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// How a segment's audio is synthesized.
#[derive(Clone, Debug)]
pub enum SegmentKind {
    /// Harmonic stack with Gaussian formant envelopes: (center_hz, bandwidth_hz).
    FormantVoiced { f0_hz: f64, formants: Vec<(f64, f64)> },
    /// Band-limited white noise.
    BroadbandFricative { low_hz: f64, high_hz: f64, rms: f64 },
    /// Low-frequency harmonic murmur.
    LowBandNasal { f0_hz: f64, cutoff_hz: f64 },
    /// Closure silence followed by a short band-limited burst.
    BurstStop { burst_low_hz: f64, burst_high_hz: f64 },
    Silence,
}

#[derive(Clone, Debug)]
pub struct SegmentTemplate {
    pub phone: String,
    pub kind: SegmentKind,
}

impl SegmentTemplate {
    fn new(phone: &str, kind: SegmentKind) -> Self {
        SegmentTemplate { phone: phone.into(), kind }
    }
}

/// The default 17-phone template set, named after TIMIT counterparts:
/// 6 vowels, 5 fricatives, 2 nasals, 3 stops, and silence. Within-class
/// templates overlap spectrally (aa/ao, iy/ih, s/z, ...) so fine phone
/// identity degrades under noise much faster than the broad class does.
pub fn default_templates() -> Vec<SegmentTemplate> {
    use SegmentKind::*;
    vec![
        SegmentTemplate::new(
            "aa",
            FormantVoiced { f0_hz: 115.0, formants: vec![(730.0, 90.0), (1090.0, 110.0), (2440.0, 170.0)] },
        ),
        SegmentTemplate::new(
            "ao",
            FormantVoiced { f0_hz: 112.0, formants: vec![(570.0, 80.0), (840.0, 100.0), (2410.0, 170.0)] },
        ),
        SegmentTemplate::new(
            "iy",
            FormantVoiced { f0_hz: 125.0, formants: vec![(270.0, 60.0), (2290.0, 200.0), (3010.0, 220.0)] },
        ),
        SegmentTemplate::new(
            "ih",
            FormantVoiced { f0_hz: 122.0, formants: vec![(390.0, 70.0), (1990.0, 180.0), (2550.0, 200.0)] },
        ),
        SegmentTemplate::new(
            "uw",
            FormantVoiced { f0_hz: 105.0, formants: vec![(300.0, 65.0), (870.0, 110.0), (2240.0, 200.0)] },
        ),
        SegmentTemplate::new(
            "uh",
            FormantVoiced { f0_hz: 108.0, formants: vec![(440.0, 70.0), (1020.0, 120.0), (2230.0, 190.0)] },
        ),
        SegmentTemplate::new("s", BroadbandFricative { low_hz: 4500.0, high_hz: 7600.0, rms: 0.055 }),
        SegmentTemplate::new("z", BroadbandFricative { low_hz: 3800.0, high_hz: 7200.0, rms: 0.045 }),
        SegmentTemplate::new("sh", BroadbandFricative { low_hz: 2000.0, high_hz: 5500.0, rms: 0.065 }),
        SegmentTemplate::new("f", BroadbandFricative { low_hz: 1200.0, high_hz: 7000.0, rms: 0.032 }),
        SegmentTemplate::new("th", BroadbandFricative { low_hz: 1500.0, high_hz: 6600.0, rms: 0.028 }),
        SegmentTemplate::new("m", LowBandNasal { f0_hz: 110.0, cutoff_hz: 450.0 }),
        SegmentTemplate::new("n", LowBandNasal { f0_hz: 122.0, cutoff_hz: 520.0 }),
        SegmentTemplate::new("t", BurstStop { burst_low_hz: 2500.0, burst_high_hz: 7500.0 }),
        SegmentTemplate::new("k", BurstStop { burst_low_hz: 1000.0, burst_high_hz: 3200.0 }),
        SegmentTemplate::new("p", BurstStop { burst_low_hz: 700.0, burst_high_hz: 2400.0 }),
        SegmentTemplate::new("h#", Silence),
    ]
}

/// Generator parameters. The same seed always reproduces the corpus
/// bit-identically, including under parallel generation.
#[derive(Clone, Debug)]
pub struct MiniCorpusSpec {
    pub n_utterances: usize,
    pub phone_classes: Vec<SegmentTemplate>,
    pub segment_len_range_ms: (f64, f64),
    pub segments_per_utterance: (usize, usize),
    pub sample_rate_hz: u32,
    pub seed: u64,
}

impl Default for MiniCorpusSpec {
    fn default() -> Self {
        MiniCorpusSpec {
            n_utterances: 20,
            phone_classes: default_templates(),
            segment_len_range_ms: (90.0, 240.0),
            segments_per_utterance: (7, 11),
            sample_rate_hz: 16000,
            seed: 0,
        }
    }
}

/// A labeled span, isomorphic to a TIMIT `.PHN` line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledSegment {
    pub start_sample: usize,
    pub end_sample: usize,
    pub label: String,
}

#[derive(Clone, Debug)]
pub struct Utterance {
    pub id: String,
    pub wave: Waveform,
    pub segments: Vec<LabeledSegment>,
}

/// Generates the corpus. Utterances are synthesized in parallel from
/// per-utterance derived seeds.
pub fn generate_corpus(spec: &MiniCorpusSpec) -> Result<Vec<Utterance>, DspError> {
    if spec.phone_classes.is_empty() {
        return Err(DspError::Config("empty template list".into()));
    }
    if spec.segment_len_range_ms.0 <= 0.0 || spec.segment_len_range_ms.1 < spec.segment_len_range_ms.0 {
        return Err(DspError::Config("invalid segment length range".into()));
    }
    if spec.segments_per_utterance.0 == 0 || spec.segments_per_utterance.1 < spec.segments_per_utterance.0 {
        return Err(DspError::Config("invalid segments-per-utterance range".into()));
    }
    Ok(threads::ordered_map_idx(spec.n_utterances, |i| synth_utterance(spec, i)))
}

fn synth_utterance(spec: &MiniCorpusSpec, idx: usize) -> Utterance {
    let mut rng = crate::rng::indexed_rng(spec.seed, "corpus", idx as u64);
    let fs = spec.sample_rate_hz as f64;
    let silence_idx = spec.phone_classes.iter().position(|t| matches!(t.kind, SegmentKind::Silence));

    let n_segments = rng.random_range(spec.segments_per_utterance.0..=spec.segments_per_utterance.1);
    let mut samples: Vec<f64> = Vec::new();
    let mut segments: Vec<LabeledSegment> = Vec::new();

    for s in 0..n_segments {
        // bookend with silence when a silence template exists
        let tmpl_idx = match silence_idx {
            Some(si) if s == 0 || s == n_segments - 1 => si,
            _ => rng.random_range(0..spec.phone_classes.len()),
        };
        let tmpl = &spec.phone_classes[tmpl_idx];
        let len_ms = rng.random_range(spec.segment_len_range_ms.0..=spec.segment_len_range_ms.1);
        let len = (len_ms * fs / 1000.0).round() as usize;
        let start = samples.len();
        let seg = synth_segment(&tmpl.kind, len, fs, &mut rng);
        samples.extend_from_slice(&seg);
        segments.push(LabeledSegment {
            start_sample: start,
            end_sample: start + len,
            label: tmpl.phone.clone(),
        });
    }

    let peak = samples.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    if peak > 0.95 {
        let g = 0.95 / peak;
        for x in &mut samples {
            *x *= g;
        }
    }

    Utterance {
        id: format!("utt{idx:04}"),
        wave: Waveform::new(samples, spec.sample_rate_hz),
        segments,
    }
}

fn synth_segment(kind: &SegmentKind, len: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match kind {
        SegmentKind::Silence => vec![0.0; len],
        SegmentKind::FormantVoiced { f0_hz, formants } => {
            let f0 = f0_hz * rng.random_range(0.95..1.05);
            let mut out = vec![0.0; len];
            let mut h = 1;
            loop {
                let f = h as f64 * f0;
                if f > 4500.0 {
                    break;
                }
                let mut amp = 0.12 * (-f / 400.0).exp(); // low-frequency tilt keeps f0 audible
                for &(center, bw) in formants {
                    let d = (f - center) / bw;
                    amp += (-0.5 * d * d).exp();
                }
                let phase = rng.random_range(0.0..TWO_PI);
                let w = TWO_PI * f / fs;
                for (i, o) in out.iter_mut().enumerate() {
                    *o += amp * (w * i as f64 + phase).sin();
                }
                h += 1;
            }
            normalize_rms(&mut out, 0.13);
            apply_ramps(&mut out, fs);
            out
        }
        SegmentKind::BroadbandFricative { low_hz, high_hz, rms } => {
            let white: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let taps = fir_bandpass(101, *low_hz, *high_hz, fs);
            let mut out = convolve_same(&white, &taps);
            normalize_rms(&mut out, *rms);
            apply_ramps(&mut out, fs);
            out
        }
        SegmentKind::LowBandNasal { f0_hz, cutoff_hz } => {
            let f0 = f0_hz * rng.random_range(0.96..1.04);
            let mut out = vec![0.0; len];
            let mut h = 1;
            loop {
                let f = h as f64 * f0;
                if f > *cutoff_hz {
                    break;
                }
                let amp = 1.0 / h as f64;
                let phase = rng.random_range(0.0..TWO_PI);
                let w = TWO_PI * f / fs;
                for (i, o) in out.iter_mut().enumerate() {
                    *o += amp * (w * i as f64 + phase).sin();
                }
                h += 1;
            }
            normalize_rms(&mut out, 0.085);
            apply_ramps(&mut out, fs);
            out
        }
        SegmentKind::BurstStop { burst_low_hz, burst_high_hz } => {
            let mut out = vec![0.0; len];
            let closure = (len as f64 * rng.random_range(0.55..0.72)) as usize;
            let burst_len = ((0.025 * fs) as usize).min(len.saturating_sub(closure));
            if burst_len > 8 {
                let white: Vec<f64> = (0..burst_len).map(|_| rng.random_range(-1.0..1.0)).collect();
                let taps = fir_bandpass(61, *burst_low_hz, *burst_high_hz, fs);
                let mut burst = convolve_same(&white, &taps);
                normalize_rms(&mut burst, 0.14);
                let decay = 0.012 * fs;
                for (i, b) in burst.iter_mut().enumerate() {
                    let attack = (i as f64 / (0.002 * fs)).min(1.0);
                    *b *= attack * (-(i as f64) / decay).exp();
                }
                out[closure..closure + burst_len].copy_from_slice(&burst);
            }
            out
        }
    }
}

fn normalize_rms(x: &mut [f64], target: f64) {
    let p = x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
    if p > 0.0 {
        let g = target / p.sqrt();
        for v in x {
            *v *= g;
        }
    }
}

fn apply_ramps(x: &mut [f64], fs: f64) {
    let ramp = ((0.004 * fs) as usize).min(x.len() / 2);
    for i in 0..ramp {
        let g = 0.5 - 0.5 * (std::f64::consts::PI * i as f64 / ramp as f64).cos();
        x[i] *= g;
        let n = x.len();
        x[n - 1 - i] *= g;
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
    }
}

/// Hamming-windowed ideal bandpass FIR.
fn fir_bandpass(taps: usize, low_hz: f64, high_hz: f64, fs: f64) -> Vec<f64> {
    let m = (taps / 2) as f64;
    let (fl, fh) = (low_hz / fs, (high_hz / fs).min(0.4999));
    let win = hamming(taps);
    (0..taps)
        .map(|n| {
            let d = n as f64 - m;
            (2.0 * fh * sinc(2.0 * fh * d) - 2.0 * fl * sinc(2.0 * fl * d)) * win[n]
        })
        .collect()
}

fn convolve_same(x: &[f64], h: &[f64]) -> Vec<f64> {
    let m = h.len() / 2;
    let mut out = vec![0.0; x.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, &hk) in h.iter().enumerate() {
            let j = i as isize + m as isize - k as isize;
            if j >= 0 && (j as usize) < x.len() {
                acc += hk * x[j as usize];
            }
        }
        *o = acc;
    }
    out
}

/// Synthesizes a named noise signal with unit framework RMS of 0.1.
/// Known types: `white`, `pink`, `low`, `high`, `band`.
pub fn synth_noise(kind: &str, len: usize, fs: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, DspError> {
    let white: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut out = match kind {
        "white" => white,
        "pink" => {
            // three cascaded leaky integrators approximate a 1/f slope
            let (mut s1, mut s2, mut s3) = (0.0f64, 0.0f64, 0.0f64);
            white
                .iter()
                .map(|&w| {
                    s1 = 0.98 * s1 + w;
                    s2 = 0.83 * s2 + s1 * 0.4;
                    s3 = 0.52 * s3 + s2 * 0.3;
                    s3 * 0.05
                })
                .collect()
        }
        "low" => convolve_same(&white, &fir_bandpass(101, 0.0, 1200.0, fs)),
        "high" => convolve_same(&white, &fir_bandpass(101, 3000.0, fs * 0.4999, fs)),
        "band" => convolve_same(&white, &fir_bandpass(101, 800.0, 2800.0, fs)),
        other => return Err(DspError::Config(format!("unknown noise type '{other}'"))),
    };
    normalize_rms(&mut out, 0.1);
    Ok(out)
}

/// Frame-level labels under the given framing: frame `t` takes the label of
/// the segment containing its center sample `t*hop + window_len/2`.
pub fn frame_labels(
    segments: &[LabeledSegment],
    n_samples: usize,
    params: StftParams,
) -> Vec<String> {
    let Some(num_frames) = params.num_frames(n_samples) else {
        return Vec::new();
    };
    (0..num_frames)
        .map(|t| {
            let center = t * params.hop + params.window_len / 2;
            segments
                .iter()
                .find(|s| center >= s.start_sample && center < s.end_sample)
                .map(|s| s.label.clone())
                .unwrap_or_else(|| segments.last().map(|s| s.label.clone()).unwrap_or_default())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = MiniCorpusSpec { n_utterances: 4, seed: 7, ..Default::default() };
        let a = generate_corpus(&spec).unwrap();
        let b = generate_corpus(&spec).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.segments, y.segments);
            assert_eq!(x.wave.samples, y.wave.samples);
        }
    }

    #[test]
    fn silence_only_corpus_is_all_zero() {
        let spec = MiniCorpusSpec {
            n_utterances: 2,
            phone_classes: vec![SegmentTemplate::new("h#", SegmentKind::Silence)],
            seed: 1,
            ..Default::default()
        };
        let utts = generate_corpus(&spec).unwrap();
        for u in &utts {
            assert!(u.wave.samples.iter().all(|&x| x == 0.0));
            assert!(u.segments.iter().all(|s| s.label == "h#"));
        }
    }

    #[test]
    fn every_template_appears_in_a_large_corpus() {
        let spec = MiniCorpusSpec { n_utterances: 100, seed: 11, ..Default::default() };
        let utts = generate_corpus(&spec).unwrap();
        let seen: HashSet<&str> =
            utts.iter().flat_map(|u| u.segments.iter().map(|s| s.label.as_str())).collect();
        for t in default_templates() {
            assert!(seen.contains(t.phone.as_str()), "missing {}", t.phone);
        }
    }

    #[test]
    fn segments_tile_the_waveform() {
        let spec = MiniCorpusSpec { n_utterances: 3, seed: 3, ..Default::default() };
        for u in generate_corpus(&spec).unwrap() {
            assert_eq!(u.segments.first().unwrap().start_sample, 0);
            assert_eq!(u.segments.last().unwrap().end_sample, u.wave.len());
            for w in u.segments.windows(2) {
                assert_eq!(w[0].end_sample, w[1].start_sample);
            }
        }
    }

    #[test]
    fn frame_labels_follow_segment_spans() {
        let params = StftParams::default();
        let segments = vec![
            LabeledSegment { start_sample: 0, end_sample: 2000, label: "h#".into() },
            LabeledSegment { start_sample: 2000, end_sample: 6000, label: "aa".into() },
            LabeledSegment { start_sample: 6000, end_sample: 8000, label: "s".into() },
        ];
        let labels = frame_labels(&segments, 8000, params);
        assert_eq!(labels.len(), params.num_frames(8000).unwrap());
        assert_eq!(labels[0], "h#");
        // frame centered at 2304 is inside "aa"
        assert_eq!(labels[8], "aa");
        let last = labels.len() - 1;
        assert_eq!(labels[last], "s");
    }

    #[test]
    fn empty_template_list_is_config_error() {
        let spec = MiniCorpusSpec { phone_classes: vec![], ..Default::default() };
        assert!(matches!(generate_corpus(&spec), Err(DspError::Config(_))));
    }

    #[test]
    fn noise_types_are_distinct_and_normalized() {
        let mut rng = crate::rng::stream_rng(5, "noise-test");
        for kind in ["white", "pink", "low", "high", "band"] {
            let n = synth_noise(kind, 16000, 16000.0, &mut rng).unwrap();
            let rms = (n.iter().map(|x| x * x).sum::<f64>() / n.len() as f64).sqrt();
            assert!((rms - 0.1).abs() < 1e-9, "{kind} rms {rms}");
        }
        assert!(synth_noise("nope", 100, 16000.0, &mut rng).is_err());
    }
}
