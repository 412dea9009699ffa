//! Minimal RIFF/WAVE reader and writer (PCM16 and IEEE float32).

use std::fs;
use std::path::Path;

use super::{DspError, Waveform};

/// On-disk sample encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    Float32,
}

fn u16_at(b: &[u8], off: usize) -> Result<u16, DspError> {
    b.get(off..off + 2)
        .map(|s| u16::from_le_bytes([s[0], s[1]]))
        .ok_or_else(|| DspError::Format("unexpected end of file".into()))
}

fn u32_at(b: &[u8], off: usize) -> Result<u32, DspError> {
    b.get(off..off + 4)
        .map(|s| u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or_else(|| DspError::Format("unexpected end of file".into()))
}

struct Fmt {
    audio_format: u16,
    channels: u16,
    sample_rate: u32,
    bits_per_sample: u16,
}

/// Reads a WAV file and downmixes to mono (channel mean). PCM16 samples are
/// scaled by 1/32768.
pub fn read_wav(path: &Path) -> Result<Waveform, DspError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(DspError::Format("missing RIFF/WAVE header".into()));
    }

    let mut fmt: Option<Fmt> = None;
    let mut data: Option<(usize, usize)> = None; // (offset, len)
    let mut off = 12usize;
    while off + 8 <= bytes.len() {
        let id = &bytes[off..off + 4];
        let size = u32_at(&bytes, off + 4)? as usize;
        let body = off + 8;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(DspError::Format("fmt chunk too small".into()));
                }
                fmt = Some(Fmt {
                    audio_format: u16_at(&bytes, body)?,
                    channels: u16_at(&bytes, body + 2)?,
                    sample_rate: u32_at(&bytes, body + 4)?,
                    bits_per_sample: u16_at(&bytes, body + 14)?,
                });
            }
            b"data" => {
                if body + size > bytes.len() {
                    return Err(DspError::Format(format!(
                        "data chunk promises {} bytes but only {} remain",
                        size,
                        bytes.len().saturating_sub(body)
                    )));
                }
                data = Some((body, size));
            }
            _ => {}
        }
        // chunks are word-aligned
        off = body + size + (size & 1);
    }

    let fmt = fmt.ok_or_else(|| DspError::Format("missing fmt chunk".into()))?;
    let (data_off, data_len) = data.ok_or_else(|| DspError::Format("missing data chunk".into()))?;

    if fmt.channels == 0 || fmt.channels > 2 {
        return Err(DspError::Unsupported(format!("{} channels", fmt.channels)));
    }
    if fmt.sample_rate == 0 {
        return Err(DspError::Format("zero sample rate".into()));
    }

    let raw = &bytes[data_off..data_off + data_len];
    let channels = fmt.channels as usize;
    let interleaved: Vec<f64> = match (fmt.audio_format, fmt.bits_per_sample) {
        (1, 16) => raw
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
            .collect(),
        (3, 32) => raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        (f, b) => {
            return Err(DspError::Unsupported(format!("audio format {f} at {b} bits")));
        }
    };

    let frames = interleaved.len() / channels;
    let samples: Vec<f64> = if channels == 1 {
        interleaved
    } else {
        (0..frames)
            .map(|i| (interleaved[2 * i] + interleaved[2 * i + 1]) / 2.0)
            .collect()
    };

    Ok(Waveform::new(samples, fmt.sample_rate))
}

/// Writes a mono WAV file in the requested encoding.
pub fn write_wav(path: &Path, wave: &Waveform, format: SampleFormat) -> Result<(), DspError> {
    let n = wave.samples.len();
    let (audio_format, bits, data_len): (u16, u16, usize) = match format {
        SampleFormat::Pcm16 => (1, 16, n * 2),
        SampleFormat::Float32 => (3, 32, n * 4),
    };
    let bytes_per_frame = (bits / 8) as u32;

    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&audio_format.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&wave.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(wave.sample_rate_hz * bytes_per_frame).to_le_bytes());
    out.extend_from_slice(&(bytes_per_frame as u16).to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());

    match format {
        SampleFormat::Pcm16 => {
            for &s in &wave.samples {
                let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                out.extend_from_slice(&q.to_le_bytes());
            }
        }
        SampleFormat::Float32 => {
            for &s in &wave.samples {
                out.extend_from_slice(&(s as f32).to_le_bytes());
            }
        }
    }

    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm16_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tone.wav");
        let samples: Vec<f64> = (0..16000)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 16000.0).sin())
            .collect();
        let wave = Waveform::new(samples, 16000);
        write_wav(&path, &wave, SampleFormat::Pcm16).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.len(), 16000);
        assert_eq!(back.sample_rate_hz, 16000);
        let max_err = back
            .samples
            .iter()
            .zip(&wave.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1.0 / 32768.0, "quantization error {max_err}");
    }

    #[test]
    fn float32_round_trip_is_exact_at_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f32.wav");
        let samples: Vec<f64> = (0..100).map(|i| (i as f64 / 100.0) as f32 as f64).collect();
        let wave = Waveform::new(samples.clone(), 16000);
        write_wav(&path, &wave, SampleFormat::Float32).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.samples, samples);
    }

    #[test]
    fn stereo_downmixes_to_channel_mean() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        // hand-build a 2-channel PCM16 file: L = 0.5, R = -0.25
        let l = (0.5f64 * 32768.0) as i16;
        let r = (-0.25f64 * 32768.0) as i16;
        let n_frames = 8u32;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + n_frames * 4).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&2u16.to_le_bytes());
        out.extend_from_slice(&16000u32.to_le_bytes());
        out.extend_from_slice(&(16000u32 * 4).to_le_bytes());
        out.extend_from_slice(&4u16.to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(n_frames * 4).to_le_bytes());
        for _ in 0..n_frames {
            out.extend_from_slice(&l.to_le_bytes());
            out.extend_from_slice(&r.to_le_bytes());
        }
        std::fs::write(&path, out).unwrap();

        let wave = read_wav(&path).unwrap();
        assert_eq!(wave.len(), 8);
        let expect = (l as f64 / 32768.0 + r as f64 / 32768.0) / 2.0;
        for &s in &wave.samples {
            assert!((s - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn truncated_data_chunk_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.wav");
        let wave = Waveform::new(vec![0.1; 100], 16000);
        write_wav(&path, &wave, SampleFormat::Pcm16).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 50); // header still promises 200 bytes
        std::fs::write(&path, bytes).unwrap();
        match read_wav(&path) {
            Err(DspError::Format(_)) => {}
            other => panic!("expected Format error, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_codec_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("alaw.wav");
        let wave = Waveform::new(vec![0.0; 10], 16000);
        write_wav(&path, &wave, SampleFormat::Pcm16).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[20] = 6; // A-law
        std::fs::write(&path, bytes).unwrap();
        match read_wav(&path) {
            Err(DspError::Unsupported(_)) => {}
            other => panic!("expected Unsupported, got {other:?}"),
        }
    }
}
