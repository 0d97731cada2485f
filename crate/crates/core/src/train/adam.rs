use serde::{Deserialize, Serialize};

use crate::nn::{Grads, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty added to the gradient before the moment updates.
    pub weight_decay: f64,
}

/// Adam with coupled (L2) weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.data.len()]).collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &Grads) {
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            eps,
            weight_decay: wd,
        } = self.config;
        self.step += 1;
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads.tensors()).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.data.len() {
                let gi = g[i] + wd * p.data[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p.data[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_each_weight_by_the_learning_rate() {
        // With bias correction the first update is lr · g / (|g| + eps).
        let mut ps = ParamSet::new();
        let id = ps.register("w".into(), vec![3], crate::nn::params::Init::Zeros, 0);
        let mut g = ps.zero_grads();
        g.get_mut(id).copy_from_slice(&[2.0, -0.5, 0.0]);
        let cfg = AdamConfig {
            learning_rate: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        };
        let mut adam = Adam::new(cfg, &ps);
        adam.step(&mut ps, &g);
        let w = ps.get(id);
        assert!((w[0] + 0.1).abs() < 1e-6 && (w[1] - 0.1).abs() < 1e-6 && w[2] == 0.0);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut ps = ParamSet::new();
        let id = ps.register("w".into(), vec![2], crate::nn::params::Init::Zeros, 0);
        let target = [3.0, -1.5];
        let cfg = AdamConfig {
            learning_rate: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        };
        let mut adam = Adam::new(cfg, &ps);
        for _ in 0..2000 {
            let mut g = ps.zero_grads();
            for i in 0..2 {
                g.get_mut(id)[i] = ps.get(id)[i] - target[i];
            }
            adam.step(&mut ps, &g);
        }
        assert!((ps.get(id)[0] - 3.0).abs() < 1e-3 && (ps.get(id)[1] + 1.5).abs() < 1e-3);
    }
}
