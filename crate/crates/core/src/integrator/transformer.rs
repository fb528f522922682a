use ndarray::{s, Array2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::IntegratorConfig;
use super::layers::{gelu, gelu_grad, LayerNorm, LayerNormCache, Linear};
use super::mask::{build_attention_mask, AttentionMask};
use super::tokens::{RefinedOutputs, TokenSequence};
use crate::error::{Error, Result};
use crate::params::{join, Params};

/// Pre-norm transformer encoder layer: masked multi-head self-attention
/// followed by a GELU feed-forward block, each with a residual connection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderLayer {
    pub ln_attn: LayerNorm,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub out: Linear,
    pub ln_ff: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
}

#[derive(Clone, Debug)]
pub struct LayerCache {
    ln_attn: LayerNormCache,
    normed: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// One `n × n` matrix per head.
    weights: Vec<Array2<f64>>,
    heads_out: Array2<f64>,
    ln_ff: LayerNormCache,
    normed_ff: Array2<f64>,
    pre_act: Array2<f64>,
    act: Array2<f64>,
}

impl LayerCache {
    pub fn attention_weights(&self) -> &[Array2<f64>] {
        &self.weights
    }
}

fn masked_softmax_rows(scores: &mut Array2<f64>, mask: &AttentionMask) {
    Zip::from(scores.rows_mut())
        .and(mask.allowed.rows())
        .for_each(|mut row, allowed| {
            let max = row
                .iter()
                .zip(allowed.iter())
                .filter(|(_, &a)| a)
                .map(|(&v, _)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            Zip::from(&mut row).and(&allowed).for_each(|v, &a| {
                *v = if a { (*v - max).exp() } else { 0.0 };
                sum += *v;
            });
            row /= sum;
        });
}

impl EncoderLayer {
    pub fn new(dim: usize, ff_dim: usize, config: &IntegratorConfig, rng: &mut ChaCha8Rng) -> Self {
        let std = config.init_std;
        let residual_std = if config.zero_init_residual { 0.0 } else { std };
        Self {
            ln_attn: LayerNorm::new(dim),
            query: Linear::new(dim, dim, std, rng),
            key: Linear::new(dim, dim, std, rng),
            value: Linear::new(dim, dim, std, rng),
            out: Linear::new(dim, dim, residual_std, rng),
            ln_ff: LayerNorm::new(dim),
            ff_in: Linear::new(dim, ff_dim, std, rng),
            ff_out: Linear::new(ff_dim, dim, residual_std, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.query.weight.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>, mask: &AttentionMask, heads: usize) -> (Array2<f64>, LayerCache) {
        let dim = self.dim();
        let head_dim = dim / heads;
        let scale = 1.0 / (head_dim as f64).sqrt();
        let (normed, ln_attn) = self.ln_attn.forward(x);
        let q = self.query.forward(&normed);
        let k = self.key.forward(&normed);
        let v = self.value.forward(&normed);
        let mut heads_out = Array2::zeros(x.raw_dim());
        let mut weights = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = s![.., h * head_dim..(h + 1) * head_dim];
            let mut w = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            masked_softmax_rows(&mut w, mask);
            heads_out.slice_mut(cols).assign(&w.dot(&v.slice(cols)));
            weights.push(w);
        }
        let mid = x + &self.out.forward(&heads_out);
        let (normed_ff, ln_ff) = self.ln_ff.forward(&mid);
        let pre_act = self.ff_in.forward(&normed_ff);
        let act = pre_act.mapv(gelu);
        let y = &mid + &self.ff_out.forward(&act);
        let cache = LayerCache {
            ln_attn,
            normed,
            q,
            k,
            v,
            weights,
            heads_out,
            ln_ff,
            normed_ff,
            pre_act,
            act,
        };
        (y, cache)
    }

    /// Accumulates parameter gradients into `grad`; returns `dL/dx`.
    pub fn backward(&self, cache: &LayerCache, dy: &Array2<f64>, grad: &mut EncoderLayer) -> Array2<f64> {
        let heads = cache.weights.len();
        let head_dim = self.dim() / heads;
        let scale = 1.0 / (head_dim as f64).sqrt();

        // Feed-forward block.
        let d_act = self.ff_out.backward(&cache.act, dy, &mut grad.ff_out);
        let d_pre = d_act * &cache.pre_act.mapv(gelu_grad);
        let d_normed_ff = self.ff_in.backward(&cache.normed_ff, &d_pre, &mut grad.ff_in);
        let d_mid = dy + &self.ln_ff.backward(&cache.ln_ff, &d_normed_ff, &mut grad.ln_ff);

        // Attention block.
        let d_heads = self.out.backward(&cache.heads_out, &d_mid, &mut grad.out);
        let mut dq = Array2::zeros(cache.q.raw_dim());
        let mut dk = Array2::zeros(cache.k.raw_dim());
        let mut dv = Array2::zeros(cache.v.raw_dim());
        for (h, w) in cache.weights.iter().enumerate() {
            let cols = s![.., h * head_dim..(h + 1) * head_dim];
            let d_o = d_heads.slice(cols);
            dv.slice_mut(cols).assign(&w.t().dot(&d_o));
            let dw = d_o.dot(&cache.v.slice(cols).t());
            let row_dot = (&dw * w).sum_axis(Axis(1));
            let ds = (dw - &row_dot.insert_axis(Axis(1))) * w * scale;
            dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
        }
        let mut d_normed = self.query.backward(&cache.normed, &dq, &mut grad.query);
        d_normed += &self.key.backward(&cache.normed, &dk, &mut grad.key);
        d_normed += &self.value.backward(&cache.normed, &dv, &mut grad.value);
        d_mid + self.ln_attn.backward(&cache.ln_attn, &d_normed, &mut grad.ln_attn)
    }
}

impl Params for EncoderLayer {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        self.ln_attn.visit(&join(prefix, "ln_attn"), f);
        self.query.visit(&join(prefix, "query"), f);
        self.key.visit(&join(prefix, "key"), f);
        self.value.visit(&join(prefix, "value"), f);
        self.out.visit(&join(prefix, "out"), f);
        self.ln_ff.visit(&join(prefix, "ln_ff"), f);
        self.ff_in.visit(&join(prefix, "ff_in"), f);
        self.ff_out.visit(&join(prefix, "ff_out"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.ln_attn.visit_mut(&join(prefix, "ln_attn"), f);
        self.query.visit_mut(&join(prefix, "query"), f);
        self.key.visit_mut(&join(prefix, "key"), f);
        self.value.visit_mut(&join(prefix, "value"), f);
        self.out.visit_mut(&join(prefix, "out"), f);
        self.ln_ff.visit_mut(&join(prefix, "ln_ff"), f);
        self.ff_in.visit_mut(&join(prefix, "ff_in"), f);
        self.ff_out.visit_mut(&join(prefix, "ff_out"), f);
    }
}

/// The visual-primitive integrator: a stack of encoder layers over
/// `[C; I; t_A; t_O]` with no positional embeddings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Integrator {
    pub heads: usize,
    pub layers: Vec<EncoderLayer>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Clone, Debug)]
pub struct IntegratorPass {
    pub output: Array2<f64>,
    pub caches: Vec<LayerCache>,
}

impl IntegratorPass {
    pub fn refined_cls(&self) -> ndarray::ArrayView1<'_, f64> {
        self.output.row(0)
    }

    /// Attention weights of `layer`, one `n × n` matrix per head.
    pub fn attention_weights(&self, layer: usize) -> &[Array2<f64>] {
        self.caches[layer].attention_weights()
    }
}

impl Integrator {
    pub fn new(config: &IntegratorConfig, dim: usize, seed: u64) -> Result<Self> {
        config.validate(dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = (0..config.layers)
            .map(|_| EncoderLayer::new(dim, dim * config.ff_mult, config, &mut rng))
            .collect();
        Ok(Self {
            heads: config.heads,
            layers,
        })
    }

    pub fn dim(&self) -> usize {
        self.layers[0].dim()
    }

    pub fn forward(&self, seq: &TokenSequence, mask: &AttentionMask) -> Result<IntegratorPass> {
        if seq.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "token dim {} vs integrator dim {}",
                seq.dim(),
                self.dim()
            )));
        }
        let mut x = seq.tokens.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let (y, cache) = layer.forward(&x, mask, self.heads);
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::NumericFailure(format!(
                    "non-finite activation after integrator layer {i}"
                )));
            }
            caches.push(cache);
            x = y;
        }
        Ok(IntegratorPass { output: x, caches })
    }

    /// Backpropagates `d_output` (same shape as the token block) and
    /// accumulates parameter gradients into `grad`. Returns `dL/dM`.
    pub fn backward(&self, pass: &IntegratorPass, d_output: Array2<f64>, grad: &mut Integrator) -> Array2<f64> {
        let mut d = d_output;
        for ((layer, cache), g) in self
            .layers
            .iter()
            .zip(&pass.caches)
            .zip(grad.layers.iter_mut())
            .rev()
        {
            d = layer.backward(cache, &d, g);
        }
        d
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }
}

impl Params for Integrator {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        for (i, layer) in self.layers.iter().enumerate() {
            layer.visit(&join(prefix, &format!("layers.{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_mut(&join(prefix, &format!("layers.{i}")), f);
        }
    }
}

/// Runs the integrator with the mask implied by `config` and returns `C'`
/// together with every refined token.
pub fn integrator_forward(
    integrator: &Integrator,
    seq: &TokenSequence,
    config: &IntegratorConfig,
) -> Result<RefinedOutputs> {
    let mask = build_attention_mask(&config.mask, &seq.bounds);
    let pass = integrator.forward(seq, &mask)?;
    Ok(RefinedOutputs {
        cls: pass.refined_cls().to_owned(),
        tokens: Some(pass.output),
    })
}
