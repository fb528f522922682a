use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Params;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with decoupled weight decay over a flat view of the parameters.
/// Biases and layer-norm gains/shifts are not decayed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

fn decays(name: &str) -> bool {
    !matches!(name.rsplit('.').next(), Some("bias" | "gamma" | "beta"))
}

impl AdamW {
    pub fn new(config: AdamWConfig, num_params: usize) -> Self {
        Self {
            config,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn num_params(&self) -> usize {
        self.m.len()
    }

    pub fn update<P: Params>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let g = grads.to_flat();
        if g.len() != self.m.len() || params.num_params() != self.m.len() {
            return Err(Error::DimensionMismatch(format!(
                "optimizer holds {} moments, got {} parameters and {} gradients",
                self.m.len(),
                params.num_params(),
                g.len()
            )));
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericFailure(format!("non-finite gradient at flat index {i}")));
        }
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        let (m, v) = (&mut self.m, &mut self.v);
        let mut offset = 0;
        params.visit_mut("", &mut |name, slice| {
            let decay = decays(name);
            for (j, p) in slice.iter_mut().enumerate() {
                let i = offset + j;
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                if decay {
                    *p -= c.lr * c.weight_decay * *p;
                }
                *p -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
            offset += slice.len();
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::Linear;
    use ndarray::{array, Array1};

    fn linear(w: f64, b: f64) -> Linear {
        Linear {
            weight: array![[w]],
            bias: Array1::from_elem(1, b),
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut p = linear(1.0, 1.0);
        let mut opt = AdamW::new(cfg, 2);
        opt.update(&mut p, &linear(0.5, -2.0)).unwrap();
        assert!((p.weight[[0, 0]] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((p.bias[0] - (1.0 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn decay_skips_biases() {
        let cfg = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.5,
            ..AdamWConfig::default()
        };
        let mut p = linear(2.0, 2.0);
        let mut opt = AdamW::new(cfg, 2);
        opt.update(&mut p, &linear(0.0, 0.0)).unwrap();
        assert!((p.weight[[0, 0]] - 1.9).abs() < 1e-12);
        assert_eq!(p.bias[0], 2.0);
    }

    #[test]
    fn rejects_non_finite_gradients() {
        let mut p = linear(1.0, 1.0);
        let mut opt = AdamW::new(AdamWConfig::default(), 2);
        let err = opt.update(&mut p, &linear(f64::NAN, 0.0)).unwrap_err();
        assert!(err.is_numeric());
        assert_eq!(p, linear(1.0, 1.0));
    }
}
