//! Minimal probe: does a layernorm between encoder and head stall learning?

use bpse_core::dsp::{
    featurize, generate_corpus, mix_at_snr, stft, synth_noise, MiniCorpusSpec, StftParams, Waveform,
};
use bpse_core::enhance::features_to_tensor;
use bpse_core::nnsub::{
    Activation, AdamConfig, AdamState, Conv1dCausal, Dense, LayerNorm, ParamSet, Session, Tensor,
};
use bpse_core::rng::stream_rng;

fn main() {
    let spec = MiniCorpusSpec {
        n_utterances: 16,
        seed: 100,
        segments_per_utterance: (10, 14),
        ..Default::default()
    };
    let utts = generate_corpus(&spec).unwrap();
    let mut nrng = stream_rng(7, "dbg-noise");
    let params = StftParams::default();
    let pairs: Vec<(Tensor, Tensor)> = utts
        .iter()
        .map(|u| {
            let noise =
                Waveform::new(synth_noise("white", u.wave.len(), 16000.0, &mut nrng).unwrap(), 16000);
            let noisy = mix_at_snr(&u.wave, &noise, 0.0, 0).unwrap();
            let nf = featurize(&stft(&noisy, params).unwrap()).0;
            let cf = featurize(&stft(&u.wave, params).unwrap()).0;
            (features_to_tensor(&nf), features_to_tensor(&cf))
        })
        .collect();

    for (with_ln, lr) in [(true, 2e-3), (true, 5e-3), (true, 1e-2), (true, 2e-2)] {
        let mut rng = stream_rng(3, "ln-probe");
        let mut ps = ParamSet::new();
        let conv = Conv1dCausal::new(&mut ps, "conv", 3, 257, 64, &mut rng);
        let bridge = Dense::new(&mut ps, "bridge", 64, 128, &mut rng);
        *ps.get_mut(bridge.b) = Tensor::uniform(vec![128], 0.75, &mut rng);
        let ln = LayerNorm::new(&mut ps, "ln", 128);
        let head = Dense::new(&mut ps, "head", 128, 257, &mut rng);

        let mut adam = AdamState::new(AdamConfig::with_lr(lr), &ps);
        for epoch in 0..16 {
            let mut total = 0.0;
            let mut count = 0.0;
            for (input, target) in &pairs {
                let mut s = Session::new(&ps, true);
                let x = s.graph.leaf(input.clone(), false);
                let t = s.graph.leaf(target.clone(), false);
                let h = conv.forward(&mut s, x).unwrap();
                let h = Activation::LeakyRelu(0.01).apply(&mut s, h);
                let h = bridge.forward(&mut s, h).unwrap();
                let h = if with_ln { ln.forward(&mut s, h).unwrap() } else { h };
                let y = head.forward(&mut s, h).unwrap();
                let y = s.graph.relu(y);
                let loss = s.graph.mse(y, t);
                total += s.graph.value(loss).scalar_value();
                count += 1.0;
                s.graph.backward(loss).unwrap();
                let grads = s.param_grads();
                adam.step(&mut ps, &grads);
            }
            if epoch % 5 == 0 || epoch == 15 {
                println!("with_ln={with_ln} lr={lr} epoch {epoch} loss {:.4}", total / count);
            }
        }
    }
}
