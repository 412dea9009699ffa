//! Ablation probe: which part of the enhancer stalls learning?

use bpse_core::dsp::{
    featurize, generate_corpus, mix_at_snr, stft, synth_noise, MiniCorpusSpec, StftParams, Waveform,
};
use bpse_core::enhance::{build_se_model, features_to_tensor, train_se, SeConfig, SePair, SeTrainOpts};
use bpse_core::rng::stream_rng;

fn main() {
    let spec = MiniCorpusSpec {
        n_utterances: 24,
        seed: 100,
        segments_per_utterance: (10, 14),
        ..Default::default()
    };
    let utts = generate_corpus(&spec).unwrap();
    let mut rng = stream_rng(7, "dbg-noise");
    let params = StftParams::default();
    let pairs: Vec<SePair> = utts
        .iter()
        .map(|u| {
            let noise =
                Waveform::new(synth_noise("white", u.wave.len(), 16000.0, &mut rng).unwrap(), 16000);
            let noisy = mix_at_snr(&u.wave, &noise, 0.0, 0).unwrap();
            let nf = featurize(&stft(&noisy, params).unwrap()).0;
            let cf = featurize(&stft(&u.wave, params).unwrap()).0;
            SePair { input: features_to_tensor(&nf), target: features_to_tensor(&cf) }
        })
        .collect();

    let opts = SeTrainOpts {
        epochs: 12,
        lr: 2e-3,
        lr_decay: 1.0,
        mse_warmup_epochs: 1000, // pure MSE
        batch_segments: 4,
        seed: 2,
        patience: None,
        segment_hop: Some(32),
    };

    for (name, cfg) in [
        ("conv-only (0 blocks)", SeConfig { n_blocks: 0, ..SeConfig::desk() }),
        ("1 block", SeConfig { n_blocks: 1, ..SeConfig::desk() }),
        ("4 blocks (desk)", SeConfig::desk()),
    ] {
        let mut model = build_se_model(cfg, false, 3).unwrap();
        let t = std::time::Instant::now();
        let hist = train_se(&mut model, &pairs, &[], opts).unwrap();
        let losses: Vec<String> =
            hist.epochs.iter().map(|e| format!("{:.4}", e.train_loss)).collect();
        println!("{name}: {} [{}] in {:?}", losses.last().unwrap(), losses.join(" "), t.elapsed());
    }
}
