//! Anchors: noisy STOI and oracle-resynthesis STOI per noise type at 0 dB.

use bpse_core::dsp::{
    defeaturize, featurize, generate_corpus, istft, mix_at_snr, stft, synth_noise, MiniCorpusSpec,
    StftParams, Waveform,
};
use bpse_core::metrics::stoi;
use bpse_core::rng::stream_rng;

fn main() {
    let spec = MiniCorpusSpec {
        n_utterances: 12,
        seed: 900,
        segments_per_utterance: (10, 14),
        ..Default::default()
    };
    let utts = generate_corpus(&spec).unwrap();
    let params = StftParams::default();

    for kind in ["white", "pink", "low", "high", "band"] {
        let mut rng = stream_rng(55, "anchor");
        let mut noisy_sum = 0.0;
        let mut oracle_sum = 0.0;
        let mut n = 0.0;
        for u in &utts {
            let noise =
                Waveform::new(synth_noise(kind, u.wave.len(), 16000.0, &mut rng).unwrap(), 16000);
            let noisy = mix_at_snr(&u.wave, &noise, 0.0, 0).unwrap();
            // oracle: clean magnitudes, noisy phase
            let clean_spec = stft(&u.wave, params).unwrap();
            let noisy_spec = stft(&noisy, params).unwrap();
            let (clean_feats, _) = featurize(&clean_spec);
            let (_, noisy_phase) = featurize(&noisy_spec);
            let oracle_spec =
                defeaturize(&clean_feats, &noisy_phase, noisy_spec.original_len, 16000).unwrap();
            let oracle = istft(&oracle_spec);

            noisy_sum += stoi(&u.wave, &noisy).unwrap();
            oracle_sum += stoi(&u.wave, &oracle).unwrap();
            n += 1.0;
        }
        println!(
            "{kind:>6}: noisy {:.4}, oracle(clean-mag + noisy-phase) {:.4}",
            noisy_sum / n,
            oracle_sum / n
        );
    }
}
