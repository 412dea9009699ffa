//! SNR-controlled additive mixing.

use rand::Rng;

use super::{DspError, Waveform};

/// Draws a noise crop offset so that `clean_len` samples fit inside the noise.
pub fn random_noise_offset<R: Rng>(rng: &mut R, noise_len: usize, clean_len: usize) -> usize {
    if noise_len <= clean_len {
        0
    } else {
        rng.random_range(0..=noise_len - clean_len)
    }
}

/// Mixes `clean + alpha * noise[offset..]` with `alpha` chosen so the power
/// ratio over the overlap hits `snr_db` exactly. `snr_db = +inf` is the clean
/// passthrough sentinel.
pub fn mix_at_snr(
    clean: &Waveform,
    noise: &Waveform,
    snr_db: f64,
    noise_offset: usize,
) -> Result<Waveform, DspError> {
    if clean.sample_rate_hz != noise.sample_rate_hz {
        return Err(DspError::Shape(format!(
            "sample rate mismatch: clean {} vs noise {}",
            clean.sample_rate_hz, noise.sample_rate_hz
        )));
    }
    if snr_db.is_infinite() && snr_db > 0.0 {
        return Ok(clean.clone());
    }
    let n = clean.len();
    if noise_offset + n > noise.len() {
        return Err(DspError::Shape(format!(
            "noise too short: need {} samples at offset {}, have {}",
            n,
            noise_offset,
            noise.len()
        )));
    }
    let crop = &noise.samples[noise_offset..noise_offset + n];

    let p_clean = clean.power();
    let p_noise = crop.iter().map(|s| s * s).sum::<f64>() / n.max(1) as f64;
    if p_clean <= 0.0 {
        return Err(DspError::DegenerateSignal("clean signal has zero power".into()));
    }
    if p_noise <= 0.0 {
        return Err(DspError::DegenerateSignal("noise crop has zero power".into()));
    }

    // 10*log10(p_clean / (alpha^2 * p_noise)) = snr_db
    let alpha = (p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let samples = clean
        .samples
        .iter()
        .zip(crop)
        .map(|(&c, &x)| c + alpha * x)
        .collect();
    Ok(Waveform::new(samples, clean.sample_rate_hz))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::measure_snr;
    use rand::Rng;

    fn rand_wave(n: usize, seed: u64, scale: f64) -> Waveform {
        let mut rng = crate::rng::stream_rng(seed, "mix-test");
        Waveform::new((0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect(), 16000)
    }

    #[test]
    fn equal_power_at_zero_db_uses_unit_gain() {
        let clean = Waveform::new(vec![0.5, -0.5, 0.5, -0.5], 16000);
        let noise = Waveform::new(vec![-0.5, 0.5, -0.5, 0.5], 16000);
        let mixed = mix_at_snr(&clean, &noise, 0.0, 0).unwrap();
        for i in 0..4 {
            let expect = clean.samples[i] + noise.samples[i];
            assert!((mixed.samples[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn infinite_snr_passes_clean_through() {
        let clean = rand_wave(1000, 3, 0.3);
        let noise = rand_wave(1000, 4, 0.3);
        let mixed = mix_at_snr(&clean, &noise, f64::INFINITY, 0).unwrap();
        assert_eq!(mixed.samples, clean.samples);
    }

    #[test]
    fn measured_snr_matches_target() {
        let clean = rand_wave(8000, 5, 0.4);
        let noise = rand_wave(12000, 6, 0.2);
        for &target in &[-5.0, 0.0, 5.0, 10.0, 15.0] {
            let mixed = mix_at_snr(&clean, &noise, target, 123).unwrap();
            let measured = measure_snr(&clean, &mixed).unwrap();
            assert!(
                (measured - target).abs() < 0.01,
                "target {target} dB, measured {measured} dB"
            );
        }
    }

    #[test]
    fn degenerate_signals_are_rejected() {
        let zeros = Waveform::new(vec![0.0; 100], 16000);
        let noise = rand_wave(100, 7, 0.1);
        assert!(matches!(
            mix_at_snr(&zeros, &noise, 0.0, 0),
            Err(DspError::DegenerateSignal(_))
        ));
        assert!(matches!(
            mix_at_snr(&noise, &zeros, 0.0, 0),
            Err(DspError::DegenerateSignal(_))
        ));
    }

    #[test]
    fn offsets_crop_the_noise() {
        let clean = rand_wave(100, 8, 0.5);
        let noise = rand_wave(300, 9, 0.5);
        let m0 = mix_at_snr(&clean, &noise, 5.0, 0).unwrap();
        let m1 = mix_at_snr(&clean, &noise, 5.0, 200).unwrap();
        assert_ne!(m0.samples, m1.samples);
        assert!(mix_at_snr(&clean, &noise, 5.0, 201).is_err());
    }
}
