use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::params::{join, slice, slice_mut, Params};

/// `y = x W + b` with `W` stored as `in × out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn new<R: Rng>(input: usize, output: usize, std: f64, rng: &mut R) -> Self {
        let weight = if std > 0.0 {
            let normal = Normal::new(0.0, std).expect("valid std");
            Array2::from_shape_fn((input, output), |_| normal.sample(rng))
        } else {
            Array2::zeros((input, output))
        };
        Self {
            weight,
            bias: Array1::zeros(output),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.weight += &x.t().dot(dy);
        grad.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight.t())
    }
}

impl Params for Linear {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&join(prefix, "weight"), slice(&self.weight));
        f(&join(prefix, "bias"), slice(&self.bias));
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&join(prefix, "weight"), slice_mut(&mut self.weight));
        f(&join(prefix, "bias"), slice_mut(&mut self.bias));
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

#[derive(Clone, Debug)]
pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
        let d = x.ncols() as f64;
        let mean = x.sum_axis(Axis(1)) / d;
        let centered = x - &mean.view().insert_axis(Axis(1));
        let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
        let inv_std = var.mapv(|v| 1.0 / (v + LAYER_NORM_EPS).sqrt());
        let xhat = centered * &inv_std.view().insert_axis(Axis(1));
        let y = &xhat * &self.gamma + &self.beta;
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: &Array2<f64>, grad: &mut LayerNorm) -> Array2<f64> {
        grad.gamma += &(dy * &cache.xhat).sum_axis(Axis(0));
        grad.beta += &dy.sum_axis(Axis(0));
        let dxhat = dy * &self.gamma;
        let d = dy.ncols() as f64;
        let mean_dxhat = dxhat.sum_axis(Axis(1)) / d;
        let mean_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(1)) / d;
        let mut dx = dxhat;
        Zip::from(dx.rows_mut())
            .and(cache.xhat.rows())
            .and(&cache.inv_std)
            .and(&mean_dxhat)
            .and(&mean_dxhat_xhat)
            .for_each(|mut row, xhat, &inv, &m1, &m2| {
                Zip::from(&mut row).and(&xhat).for_each(|g, &xh| {
                    *g = inv * (*g - m1 - xh * m2);
                });
            });
        dx
    }
}

impl Params for LayerNorm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&join(prefix, "gamma"), slice(&self.gamma));
        f(&join(prefix, "beta"), slice(&self.beta));
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&join(prefix, "gamma"), slice_mut(&mut self.gamma));
        f(&join(prefix, "beta"), slice_mut(&mut self.beta));
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn numeric_check(f: impl Fn(&Array2<f64>) -> f64, x: &Array2<f64>, analytic: &Array2<f64>) {
        let eps = 1e-6;
        for idx in 0..x.len() {
            let (r, c) = (idx / x.ncols(), idx % x.ncols());
            let mut plus = x.clone();
            plus[[r, c]] += eps;
            let mut minus = x.clone();
            minus[[r, c]] -= eps;
            let numeric = (f(&plus) - f(&minus)) / (2.0 * eps);
            assert!(
                (numeric - analytic[[r, c]]).abs() < 1e-7,
                "{numeric} vs {} at ({r}, {c})",
                analytic[[r, c]]
            );
        }
    }

    #[test]
    fn gelu_derivative() {
        for &x in &[-3.0, -0.5, 0.0, 0.3, 2.5] {
            let numeric = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
            assert!((numeric - gelu_grad(x)).abs() < 1e-8);
        }
        assert_eq!(gelu(0.0), 0.0);
    }

    #[test]
    fn layer_norm_input_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ln = LayerNorm::new(4);
        ln.gamma = array![1.0, 0.5, -2.0, 1.5];
        ln.beta = array![0.1, 0.0, 0.2, -0.3];
        let x = Linear::new(4, 4, 1.0, &mut rng).weight;
        let w = Linear::new(4, 4, 1.0, &mut rng).weight;
        let loss = |x: &Array2<f64>| (ln.forward(x).0 * &w).sum();
        let (_, cache) = ln.forward(&x);
        let mut grad = LayerNorm::new(4);
        let dx = ln.backward(&cache, &w, &mut grad);
        numeric_check(loss, &x, &dx);
    }

    #[test]
    fn linear_input_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lin = Linear::new(3, 2, 1.0, &mut rng);
        let x = Linear::new(4, 3, 1.0, &mut rng).weight;
        let w = Linear::new(4, 2, 1.0, &mut rng).weight;
        let loss = |x: &Array2<f64>| (lin.forward(x) * &w).sum();
        let mut grad = Linear::new(3, 2, 0.0, &mut rng);
        let dx = lin.backward(&x, &w, &mut grad);
        numeric_check(loss, &x, &dx);
        assert_eq!(grad.bias, w.sum_axis(Axis(0)));
    }
}
