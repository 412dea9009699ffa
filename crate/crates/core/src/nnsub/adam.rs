//! Bias-corrected Adam.

use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Default::default() }
    }
}

/// Optimizer state: step count and per-parameter moment buffers, mirroring
/// the parameter shapes.
pub struct AdamState {
    pub cfg: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(cfg: AdamConfig, params: &ParamSet) -> Self {
        let m = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        let v = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        AdamState { cfg, step: 0, m, v }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over all parameters; `grads` aligns with the canonical
    /// parameter order.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) {
        assert_eq!(grads.len(), self.m.len(), "gradient count mismatch");
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.cfg.beta1.powf(t);
        let bc2 = 1.0 - self.cfg.beta2.powf(t);
        for (i, grad) in grads.iter().enumerate() {
            let p = params.get_mut(super::params::ParamId(i));
            assert_eq!(p.len(), grad.len(), "gradient shape mismatch at parameter {i}");
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let data = p.data_mut();
            for j in 0..data.len() {
                let g = grad.data()[j];
                m[j] = self.cfg.beta1 * m[j] + (1.0 - self.cfg.beta1) * g;
                v[j] = self.cfg.beta2 * v[j] + (1.0 - self.cfg.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                data[j] -= self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_param(value: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::new(vec![1], vec![value]));
        ps
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut ps = single_param(0.7);
        let mut adam = AdamState::new(AdamConfig::default(), &ps);
        adam.step(&mut ps, &[Tensor::zeros(vec![1])]);
        assert_eq!(ps.by_name("w").unwrap().data()[0], 0.7);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn constant_gradient_converges_to_lr_sized_sign_steps() {
        let mut ps = single_param(0.0);
        let cfg = AdamConfig { lr: 0.01, ..Default::default() };
        let mut adam = AdamState::new(cfg, &ps);
        let g = Tensor::new(vec![1], vec![2.5]);
        let mut prev = 0.0;
        let mut last_delta = 0.0;
        for _ in 0..500 {
            adam.step(&mut ps, &[g.clone()]);
            let cur = ps.by_name("w").unwrap().data()[0];
            last_delta = cur - prev;
            prev = cur;
        }
        // update settles at -lr * sign(g)
        assert!((last_delta + 0.01).abs() < 1e-4, "delta {last_delta}");
    }

    #[test]
    fn two_steps_match_closed_form() {
        let (lr, b1, b2, eps) = (0.1, 0.9, 0.999, 1e-8);
        let mut ps = single_param(1.0);
        let mut adam = AdamState::new(AdamConfig { lr, beta1: b1, beta2: b2, eps }, &ps);

        let g1 = 0.5;
        let g2 = -0.2;

        // closed-form oracle for two updates
        let m1 = (1.0 - b1) * g1;
        let v1 = (1.0 - b2) * g1 * g1;
        let theta1 = 1.0 - lr * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + eps);
        let m2 = b1 * m1 + (1.0 - b1) * g2;
        let v2 = b2 * v1 + (1.0 - b2) * g2 * g2;
        let theta2 = theta1
            - lr * (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + eps);

        adam.step(&mut ps, &[Tensor::new(vec![1], vec![g1])]);
        assert!((ps.by_name("w").unwrap().data()[0] - theta1).abs() < 1e-12);
        adam.step(&mut ps, &[Tensor::new(vec![1], vec![g2])]);
        assert!((ps.by_name("w").unwrap().data()[0] - theta2).abs() < 1e-12);
    }
}
