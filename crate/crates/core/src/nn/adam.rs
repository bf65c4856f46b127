use serde::{Deserialize, Serialize};

use super::ParamVector;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one [`ParamVector`].
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamVector) -> Self {
        let n = params.len();
        Self {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Bias-corrected update from the gradients currently stored in `params`.
    pub fn step(&mut self, params: &mut ParamVector) {
        assert_eq!(self.m.len(), params.len(), "optimizer bound to a different ParamVector");
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let mut off = 0;
        for seg in params.segments_mut() {
            let grad = seg.grad.data();
            let value = seg.value.data_mut();
            for (k, (w, g)) in value.iter_mut().zip(grad).enumerate() {
                let m = &mut self.m[off + k];
                let v = &mut self.v[off + k];
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            off += grad.len();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn pv(vals: Vec<f64>) -> ParamVector {
        let mut p = ParamVector::new();
        let n = vals.len();
        p.push("w", Tensor::from_vec(&[n], vals).unwrap());
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = pv(vec![1.0, -2.0]);
        let mut adam = Adam::new(AdamConfig::with_lr(1e-3), &p);
        adam.step(&mut p);
        assert_eq!(p.flatten(), vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let mut p = pv(vec![1.0, 1.0]);
        p.set_grad(&[0.5, -4.0]).unwrap();
        let cfg = AdamConfig::with_lr(0.01);
        let mut adam = Adam::new(cfg, &p);
        adam.step(&mut p);
        let expect = [1.0 - 0.01 * 0.5 / (0.5 + 1e-8), 1.0 + 0.01 * 4.0 / (4.0 + 1e-8)];
        for (a, b) in p.flatten().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn optimizers_do_not_share_state() {
        let mut a = pv(vec![0.0]);
        let mut b = pv(vec![0.0]);
        let mut oa = Adam::new(AdamConfig::with_lr(0.1), &a);
        let mut ob = Adam::new(AdamConfig::with_lr(0.1), &b);
        a.set_grad(&[1.0]).unwrap();
        oa.step(&mut a);
        oa.step(&mut a);
        b.set_grad(&[1.0]).unwrap();
        ob.step(&mut b);
        assert_eq!(ob.steps_taken(), 1);
        assert!((b.flatten()[0] + 0.1).abs() < 1e-6);
    }
}
