//! Encoder-call and FLOP accounting plus wall-clock measurement.
//!
//! FLOPs count a multiply-add as two operations. One integrator layer over
//! `n` tokens of width `d` costs `12·n·d² + 2·n²·d` (QKV, output and
//! feed-forward projections, attention scores and mixing). The synthetic
//! backbone costs `2·t·d_in·d` per projected token batch of `t` rows plus
//! `t·d_in` to average text tokens. Cosine scoring costs `6·d` per row
//! (dot product and norm).

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::SampleRecord;
use crate::encoder::Backbone;
use crate::error::{Error, Result};
use crate::model::{CompositionalModel, ModelKind};

pub const FLOP_FORMULA: &str = "integrator L*(12*n*d^2 + 2*n^2*d), n = 1 + P + |A| + |O|; \
text encoder per call (K+m)*d_in + 2*d_in*d; image encoder 2*(1+P)*d_in*d; scoring 6*d per text row";

pub fn transformer_layer_flops(n: usize, d: usize) -> f64 {
    let (n, d) = (n as f64, d as f64);
    12.0 * n * d * d + 2.0 * n * n * d
}

/// Text-encoder calls needed to score one image from scratch.
pub fn text_encode_calls(kind: ModelKind, num_attributes: usize, num_objects: usize) -> u64 {
    match kind {
        ModelKind::DualBranch => (num_attributes + num_objects) as u64,
        ModelKind::CompositionBranch => (num_attributes * num_objects) as u64,
    }
}

/// Shape of one inference, enough to price it analytically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceShape {
    pub kind: ModelKind,
    pub num_attributes: usize,
    pub num_objects: usize,
    pub num_patches: usize,
    pub context_len: usize,
    pub token_dim: usize,
    pub embed_dim: usize,
    pub projected: bool,
    /// Integrator layers; 0 when fusion is disabled.
    pub layers: usize,
    pub use_patches: bool,
}

impl InferenceShape {
    pub fn of_model(model: &CompositionalModel, num_patches: usize) -> Self {
        let integrator = &model.config.integrator;
        let fused = model.params.integrator.is_some();
        Self {
            kind: model.kind(),
            num_attributes: model.vocab.num_attributes(),
            num_objects: model.vocab.num_objects(),
            num_patches,
            context_len: model.config.context_len,
            token_dim: model.backbone.token_dim(),
            embed_dim: model.embed_dim(),
            projected: model.backbone.projection().is_some(),
            layers: if fused { integrator.layers } else { 0 },
            use_patches: integrator.use_patches,
        }
    }

    pub fn with_vocab(self, num_attributes: usize, num_objects: usize) -> Self {
        Self {
            num_attributes,
            num_objects,
            ..self
        }
    }

    pub fn sequence_len(&self) -> usize {
        let patches = if self.use_patches { self.num_patches } else { 0 };
        1 + patches + self.num_attributes + self.num_objects
    }

    pub fn text_calls(&self) -> u64 {
        text_encode_calls(self.kind, self.num_attributes, self.num_objects)
    }

    fn projection(&self, rows: usize) -> f64 {
        if self.projected {
            2.0 * rows as f64 * self.token_dim as f64 * self.embed_dim as f64
        } else {
            0.0
        }
    }

    pub fn flops(&self) -> FlopBreakdown {
        let d = self.embed_dim;
        let prompt_tokens = match self.kind {
            ModelKind::DualBranch => self.context_len + 1,
            ModelKind::CompositionBranch => self.context_len + 2,
        };
        let calls = self.text_calls() as f64;
        let per_call = (prompt_tokens * self.token_dim) as f64 + self.projection(1);
        let image = self.projection(1 + self.num_patches);
        let integrator = if self.kind == ModelKind::DualBranch {
            self.layers as f64 * transformer_layer_flops(self.sequence_len(), d)
        } else {
            0.0
        };
        let scoring = 6.0 * d as f64 * calls;
        FlopBreakdown {
            text_encoder: calls * per_call,
            image_encoder: image,
            integrator,
            scoring,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlopBreakdown {
    pub text_encoder: f64,
    pub image_encoder: f64,
    pub integrator: f64,
    pub scoring: f64,
}

impl FlopBreakdown {
    /// Per-image cost when the text table is rebuilt for every image.
    pub fn cold(&self) -> f64 {
        self.text_encoder + self.image_encoder + self.integrator + self.scoring
    }

    /// Per-image cost with the text table cached.
    pub fn cached(&self) -> f64 {
        self.image_encoder + self.integrator + self.scoring
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub runs: usize,
    pub median_ms: f64,
    pub mean_ms: f64,
}

fn timing(mut ms: Vec<f64>) -> TimingStats {
    let runs = ms.len();
    let mean_ms = ms.iter().sum::<f64>() / runs as f64;
    ms.sort_by(f64::total_cmp);
    let median_ms = if runs % 2 == 1 {
        ms[runs / 2]
    } else {
        0.5 * (ms[runs / 2 - 1] + ms[runs / 2])
    };
    TimingStats {
        runs,
        median_ms,
        mean_ms,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBench {
    pub kind: ModelKind,
    /// Counted on the backbone for one image scored from scratch.
    pub text_encode_calls: u64,
    pub image_encode_calls: u64,
    /// Text-encoder calls per image once the text table is cached.
    pub cached_text_encode_calls: u64,
    pub flops: FlopBreakdown,
    pub flops_per_image_cold: f64,
    pub flops_per_image_cached: f64,
    pub wall_cold: TimingStats,
    pub wall_cached: TimingStats,
}

/// Times `runs` single-image inferences after `warmup` untimed ones, both
/// rebuilding the text table per image and reusing a cached one.
pub fn bench_model(model: &CompositionalModel, samples: &[&SampleRecord], runs: usize, warmup: usize) -> Result<ModelBench> {
    if samples.is_empty() || runs == 0 {
        return Err(Error::EmptyInput("bench needs at least one sample and one run".into()));
    }
    let counters = model.backbone.counters();
    let pick = |i: usize| samples[i % samples.len()];

    let (t0, i0) = (counters.text_calls(), counters.image_calls());
    let table = model.text_table()?;
    model.scores(&table, pick(0))?;
    let text_encode_calls = counters.text_calls() - t0;
    let image_encode_calls = counters.image_calls() - i0;

    let t1 = counters.text_calls();
    model.scores(&table, pick(1))?;
    let cached_text_encode_calls = counters.text_calls() - t1;

    let mut cold = Vec::with_capacity(runs);
    for i in 0..warmup + runs {
        let start = Instant::now();
        let table = model.text_table()?;
        std::hint::black_box(model.scores(&table, pick(i))?);
        if i >= warmup {
            cold.push(start.elapsed().as_secs_f64() * 1e3);
        }
    }
    let mut cached = Vec::with_capacity(runs);
    for i in 0..warmup + runs {
        let start = Instant::now();
        std::hint::black_box(model.scores(&table, pick(i))?);
        if i >= warmup {
            cached.push(start.elapsed().as_secs_f64() * 1e3);
        }
    }

    let patches = model.image_tokens(pick(0))?.patches.nrows();
    let flops = InferenceShape::of_model(model, patches).flops();
    Ok(ModelBench {
        kind: model.kind(),
        text_encode_calls,
        image_encode_calls,
        cached_text_encode_calls,
        flops,
        flops_per_image_cold: flops.cold(),
        flops_per_image_cached: flops.cached(),
        wall_cold: timing(cold),
        wall_cached: timing(cached),
    })
}

/// Analytic accounting at an arbitrary vocabulary size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticAccounting {
    pub num_attributes: usize,
    pub num_objects: usize,
    pub dual_text_encode_calls: u64,
    pub baseline_text_encode_calls: u64,
    pub call_ratio: f64,
    pub dual_flops_cold: f64,
    pub baseline_flops_cold: f64,
}

pub fn analytic_accounting(dual: InferenceShape, num_attributes: usize, num_objects: usize) -> AnalyticAccounting {
    let dual = InferenceShape {
        kind: ModelKind::DualBranch,
        ..dual.with_vocab(num_attributes, num_objects)
    };
    let baseline = InferenceShape {
        kind: ModelKind::CompositionBranch,
        layers: 0,
        ..dual
    };
    let (dc, bc) = (dual.text_calls(), baseline.text_calls());
    AnalyticAccounting {
        num_attributes,
        num_objects,
        dual_text_encode_calls: dc,
        baseline_text_encode_calls: bc,
        call_ratio: bc as f64 / dc as f64,
        dual_flops_cold: dual.flops().cold(),
        baseline_flops_cold: baseline.flops().cold(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub num_attributes: usize,
    pub num_objects: usize,
    pub dual: ModelBench,
    pub baseline: Option<ModelBench>,
    /// Accounting at the `bench.num_attributes` / `bench.num_objects` sizes.
    pub analytic: AnalyticAccounting,
    pub peak_rss_kb: Option<u64>,
    pub flop_formula: String,
}

/// Peak resident set size of this process, where the OS reports it.
pub fn peak_rss_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmHWM:"))
        .and_then(|v| v.trim().trim_end_matches("kB").trim().parse().ok())
}
