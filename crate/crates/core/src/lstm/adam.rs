use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam optimizer state over a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl Adam {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        Adam {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    /// One bias-corrected update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam state holds {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_each_coordinate_by_lr() {
        let mut p = vec![1.0, -2.0, 0.5, 3.0];
        let g = vec![0.3, -40.0, 1e-3, 0.0];
        let mut opt = Adam::new(4, AdamConfig::default());
        opt.step(&mut p, &g).unwrap();
        let lr = 1e-3;
        for (k, (&after, &before)) in p.iter().zip(&[1.0, -2.0, 0.5, 3.0]).enumerate() {
            let want = if g[k] == 0.0 { 0.0 } else { -lr * g[k] / (g[k].abs() + 1e-8) };
            assert!((after - before - want).abs() < 1e-12, "coordinate {k}");
        }
        assert!(((p[0] - 1.0) + lr).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut p = vec![0.25, -1.5];
        let mut opt = Adam::new(2, AdamConfig::default());
        for _ in 0..100 {
            opt.step(&mut p, &[0.0, 0.0]).unwrap();
        }
        assert_eq!(p, vec![0.25, -1.5]);
    }

    #[test]
    fn deterministic_updates() {
        let run = || {
            let mut p = vec![0.1, 0.2, 0.3];
            let mut opt = Adam::new(3, AdamConfig::default());
            for k in 0..10 {
                let g: Vec<f64> = p.iter().map(|v| v * k as f64 - 0.05).collect();
                opt.step(&mut p, &g).unwrap();
            }
            p
        };
        let (a, b) = (run(), run());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn shape_mismatch() {
        let mut opt = Adam::new(2, AdamConfig::default());
        assert!(opt.step(&mut [0.0; 3], &[0.0; 3]).is_err());
    }
}
