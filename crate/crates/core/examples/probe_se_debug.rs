//! Debugging the SE output path: what does the trained model emit?

use bpse_core::dsp::{
    featurize, frame_labels, generate_corpus, mix_at_snr, stft, synth_noise, MiniCorpusSpec,
    StftParams, Waveform,
};
use bpse_core::enhance::{
    build_se_model, enhance_utterance, features_to_tensor, train_se, SeConfig, SePair, SeTrainOpts,
};
use bpse_core::metrics::stoi;
use bpse_core::rng::stream_rng;

fn main() {
    let spec = MiniCorpusSpec {
        n_utterances: 44,
        seed: 100,
        segments_per_utterance: (10, 14),
        ..Default::default()
    };
    let utts = generate_corpus(&spec).unwrap();
    let mut rng = stream_rng(7, "dbg-noise");
    let params = StftParams::default();

    let mut pairs = Vec::new();
    let mut test_clean = Vec::new();
    let mut test_noisy = Vec::new();
    for (i, u) in utts.iter().enumerate() {
        let noise = Waveform::new(synth_noise("white", u.wave.len(), 16000.0, &mut rng).unwrap(), 16000);
        let noisy = mix_at_snr(&u.wave, &noise, 0.0, 0).unwrap();
        let nf = featurize(&stft(&noisy, params).unwrap()).0;
        let cf = featurize(&stft(&u.wave, params).unwrap()).0;
        if i < 40 {
            pairs.push(SePair { input: features_to_tensor(&nf), target: features_to_tensor(&cf) });
        } else {
            test_clean.push(u.wave.clone());
            test_noisy.push(noisy);
        }
        if i == 0 {
            let c = features_to_tensor(&cf);
            let n = features_to_tensor(&nf);
            println!(
                "clean feat mean {:.4}, max {:.4}; noisy feat mean {:.4}",
                c.data().iter().sum::<f64>() / c.len() as f64,
                c.data().iter().cloned().fold(0.0, f64::max),
                n.data().iter().sum::<f64>() / n.len() as f64,
            );
        }
    }

    let mut model = build_se_model(SeConfig::desk(), false, 3).unwrap();
    // reference losses: predict-zero and predict-noisy
    {
        let mut mae0 = 0.0; let mut mse0 = 0.0; let mut maen = 0.0; let mut n = 0.0;
        for p in &pairs {
            for (x, t) in p.input.data().iter().zip(p.target.data()) {
                mae0 += t.abs(); mse0 += t * t; maen += (x - t).abs(); n += 1.0;
            }
        }
        println!("predict-0: mae {:.4} mse {:.4}; predict-noisy: mae {:.4}", mae0 / n, mse0 / n, maen / n);
    }
    let opts = SeTrainOpts {
        epochs: 30,
        lr: 1.5e-3,
        lr_decay: 0.93,
        mse_warmup_epochs: 10,
        batch_segments: 4,
        seed: 2,
        patience: None,
        segment_hop: Some(32),
    };
    let t0 = std::time::Instant::now();
    let hist = train_se(&mut model, &pairs, &[], opts).unwrap();
    println!("trained in {:?}", t0.elapsed());
    for e in &hist.epochs {
        println!("epoch {} loss {:.4}", e.epoch, e.train_loss);
    }

    for (clean, noisy) in test_clean.iter().zip(&test_noisy) {
        let enhanced = enhance_utterance(&model, noisy, None).unwrap();
        let nf = featurize(&stft(noisy, params).unwrap()).0;
        let out = model.infer(&features_to_tensor(&nf)).unwrap();
        let frac_zero = out.data().iter().filter(|&&v| v == 0.0).count() as f64 / out.len() as f64;
        println!(
            "enhanced: feat mean {:.4} zero-frac {:.3} | wave rms clean {:.4} noisy {:.4} enh {:.5}",
            out.data().iter().sum::<f64>() / out.len() as f64,
            frac_zero,
            (clean.power()).sqrt(),
            (noisy.power()).sqrt(),
            (enhanced.power()).sqrt(),
        );
        println!(
            "stoi noisy {:.4}, enhanced {:?}",
            stoi(clean, noisy).unwrap(),
            stoi(clean, &enhanced)
        );
    }
}
