//! SNR measurement by subtraction.

use super::MetricsError;
use crate::dsp::Waveform;

/// 10*log10(sum clean^2 / sum (noisy - clean)^2). Returns +inf when the
/// residual is exactly zero.
pub fn measure_snr(clean: &Waveform, noisy: &Waveform) -> Result<f64, MetricsError> {
    if clean.len() != noisy.len() {
        return Err(MetricsError::Shape(format!(
            "length mismatch: clean {} vs noisy {}",
            clean.len(),
            noisy.len()
        )));
    }
    let p_clean: f64 = clean.samples.iter().map(|s| s * s).sum();
    let p_noise: f64 = clean
        .samples
        .iter()
        .zip(&noisy.samples)
        .map(|(c, n)| (n - c) * (n - c))
        .sum();
    if p_noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (p_clean / p_noise).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_signals_hit_the_infinity_sentinel() {
        let w = Waveform::new(vec![0.1, -0.2, 0.3], 16000);
        assert_eq!(measure_snr(&w, &w).unwrap(), f64::INFINITY);
    }

    #[test]
    fn equal_power_noise_measures_zero_db() {
        let clean = Waveform::new(vec![0.5, 0.5, 0.5, 0.5], 16000);
        let noisy = Waveform::new(vec![1.0, 0.0, 1.0, 0.0], 16000);
        let snr = measure_snr(&clean, &noisy).unwrap();
        assert!(snr.abs() < 1e-12, "snr {snr}");
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let a = Waveform::new(vec![0.1; 10], 16000);
        let b = Waveform::new(vec![0.1; 11], 16000);
        assert!(measure_snr(&a, &b).is_err());
    }
}
