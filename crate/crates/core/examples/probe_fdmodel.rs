//! Finite-difference check of the fully composed enhancer.

use bpse_core::enhance::{build_se_model, SeConfig};
use bpse_core::nnsub::{Session, Tensor};
use bpse_core::rng::stream_rng;

fn main() {
    let cfg = SeConfig {
        conv_channels: vec![7],
        conv_kernel: 3,
        n_blocks: 1,
        heads: 2,
        head_dim: 3,
        ff_hidden: 8,
        feature_dim: 6,
        cond_dim: 0,
        segment_frames: 5,
        leaky_slope: 0.01,
    };
    let model = build_se_model(cfg, false, 3).unwrap();
    let mut rng = stream_rng(9, "fd");
    let x = Tensor::uniform(vec![5, 6], 1.0, &mut rng);
    let target = Tensor::uniform(vec![5, 6], 1.0, &mut rng);

    let loss_of = |m: &bpse_core::enhance::SeModel, input: &Tensor| -> f64 {
        let mut s = Session::new(m.params(), false);
        let xid = s.graph.leaf(input.clone(), false);
        let t = s.graph.leaf(target.clone(), false);
        let y = m.forward(&mut s, xid).unwrap();
        let l = s.graph.mse(y, t);
        s.graph.value(l).scalar_value()
    };

    // analytic
    let mut s = Session::new(model.params(), true);
    let xid = s.graph.leaf(x.clone(), true);
    let t = s.graph.leaf(target.clone(), false);
    let y = model.forward(&mut s, xid).unwrap();
    let l = s.graph.mse(y, t);
    s.graph.backward(l).unwrap();
    let grads = s.param_grads();

    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut worst_name = String::new();
    let n_params = model.params().len();
    for pi in 0..n_params {
        let name = model.params().entry(pi).0.to_string();
        let len = model.params().entry(pi).1.len();
        // sample a few elements per parameter
        for j in (0..len).step_by((len / 7).max(1)) {
            let mut plus = model.params().clone();
            plus.entry_mut(pi).data_mut()[j] += h;
            let mut mp = build_se_model(model.cfg.clone(), false, 3).unwrap();
            mp.load_params(&plus).unwrap();
            let lp = loss_of(&mp, &x);
            let mut minus = model.params().clone();
            minus.entry_mut(pi).data_mut()[j] -= h;
            let mut mm = build_se_model(model.cfg.clone(), false, 3).unwrap();
            mm.load_params(&minus).unwrap();
            let lm = loss_of(&mm, &x);
            let numeric = (lp - lm) / (2.0 * h);
            let analytic = grads[pi].data()[j];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            if rel > worst {
                worst = rel;
                worst_name = format!("{name}[{j}] a={analytic:.3e} n={numeric:.3e}");
            }
        }
    }
    println!("worst rel err {worst:.3e} at {worst_name}");
}
