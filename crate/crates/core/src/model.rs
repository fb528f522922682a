//! The dual-branch prompt-tuned model with visual-primitive fusion, and the
//! composition-branch baseline it is ablated against.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{PrimitiveVocab, SampleRecord};
use crate::encoder::{
    encode_pairs, encode_primitives, pair_context_grad, primitive_context_grad, word_vector, Backbone,
    Branch, ImageTokens, PrimitiveTextTable, PromptContext, SyntheticBackbone, VocabEmbedding,
};
use crate::error::{Error, Result};
use crate::integrator::{
    assemble_cls_only, assemble_tokens, build_attention_mask, cosine_rows, cosine_rows_backward,
    Integrator, IntegratorConfig, IntegratorPass, TokenSequence,
};
use crate::params::{add_scaled, join, Params};
use crate::training::{bce_row, ce_row};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Independent attribute and object prompts, fused by the integrator.
    DualBranch,
    /// One prompt per `⟨a, o⟩` pair, scored directly against the class token.
    CompositionBranch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptInit {
    /// Gaussian for the synthetic backbone, which has no pretrained phrase table.
    Auto,
    /// Word vectors of "a photo of a"; requires `context_len = 4`.
    Phrase,
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub context_len: usize,
    pub prompt_init: PromptInit,
    pub prompt_init_std: f64,
    pub integrator: IntegratorConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::DualBranch,
            context_len: 4,
            prompt_init: PromptInit::Auto,
            prompt_init_std: 0.02,
            integrator: IntegratorConfig::default(),
        }
    }
}

/// Everything the optimizer may touch. Gradients use the same type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainableParams {
    pub attribute_context: Option<PromptContext>,
    pub object_context: Option<PromptContext>,
    pub pair_context: Option<PromptContext>,
    pub integrator: Option<Integrator>,
}

impl Params for TrainableParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        if let Some(c) = &self.attribute_context {
            c.visit(&join(prefix, "attribute_prompt"), f);
        }
        if let Some(c) = &self.object_context {
            c.visit(&join(prefix, "object_prompt"), f);
        }
        if let Some(c) = &self.pair_context {
            c.visit(&join(prefix, "pair_prompt"), f);
        }
        if let Some(i) = &self.integrator {
            i.visit(&join(prefix, "integrator"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        if let Some(c) = &mut self.attribute_context {
            c.visit_mut(&join(prefix, "attribute_prompt"), f);
        }
        if let Some(c) = &mut self.object_context {
            c.visit_mut(&join(prefix, "object_prompt"), f);
        }
        if let Some(c) = &mut self.pair_context {
            c.visit_mut(&join(prefix, "pair_prompt"), f);
        }
        if let Some(i) = &mut self.integrator {
            i.visit_mut(&join(prefix, "integrator"), f);
        }
    }
}

impl TrainableParams {
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }
}

/// Raw cosine scores per branch; a missing branch is `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchScores {
    pub attr: Option<Array1<f64>>,
    pub obj: Option<Array1<f64>>,
    /// Attribute-major over `A × O`.
    pub pair: Option<Array1<f64>>,
}

/// Which loss terms contribute to a gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LossTerms {
    pub attr: bool,
    pub obj: bool,
}

impl LossTerms {
    pub const ALL: LossTerms = LossTerms { attr: true, obj: true };
    pub const ATTR: LossTerms = LossTerms { attr: true, obj: false };
    pub const OBJ: LossTerms = LossTerms { attr: false, obj: true };
}

/// Batch-mean branch losses. The composition baseline reports its pair
/// BCE in `attr` and leaves `obj` at zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BranchLosses {
    pub attr: f64,
    pub obj: f64,
}

impl BranchLosses {
    pub fn total(&self) -> f64 {
        self.attr + self.obj
    }
}

#[derive(Clone, Debug)]
pub struct BatchGradients {
    pub losses: BranchLosses,
    pub grads: TrainableParams,
}

struct SampleForward {
    refined: Array1<f64>,
    fused: Option<(TokenSequence, IntegratorPass)>,
}

struct SampleGrad {
    losses: BranchLosses,
    integrator: Option<Integrator>,
    d_attr: Array2<f64>,
    d_obj: Array2<f64>,
    d_pair: Option<Array2<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompositionalModel {
    pub config: ModelConfig,
    pub vocab: PrimitiveVocab,
    pub params: TrainableParams,
    pub embeddings: VocabEmbedding,
    pub backbone: SyntheticBackbone,
}

fn init_context(config: &ModelConfig, dim: usize, seed: u64, word_seed: u64) -> Result<PromptContext> {
    match config.prompt_init {
        PromptInit::Phrase => {
            if config.context_len != 4 {
                return Err(Error::InvalidConfig(
                    "phrase prompt initialization needs context_len = 4".into(),
                ));
            }
            let mut rows = Array2::zeros((4, dim));
            for (mut row, w) in rows.axis_iter_mut(Axis(0)).zip(["a", "photo", "of", "a"]) {
                row.assign(&word_vector(w, dim, word_seed));
            }
            Ok(PromptContext::from_rows(rows))
        }
        PromptInit::Auto | PromptInit::Gaussian => Ok(PromptContext::gaussian(
            config.context_len,
            dim,
            config.prompt_init_std,
            seed,
        )),
    }
}

impl CompositionalModel {
    pub fn new(
        config: ModelConfig,
        vocab: PrimitiveVocab,
        embeddings: VocabEmbedding,
        backbone: SyntheticBackbone,
        seed: u64,
    ) -> Result<Self> {
        if config.context_len == 0 {
            return Err(Error::InvalidConfig("model.context_len must be at least 1".into()));
        }
        if embeddings.dim() != backbone.token_dim() {
            return Err(Error::DimensionMismatch(format!(
                "vocabulary embeddings have dim {}, backbone expects {}",
                embeddings.dim(),
                backbone.token_dim()
            )));
        }
        if embeddings.num_attributes() != vocab.num_attributes() || embeddings.num_objects() != vocab.num_objects() {
            return Err(Error::DimensionMismatch(
                "vocabulary embeddings do not match the vocabulary".into(),
            ));
        }
        let e = embeddings.dim();
        let params = match config.kind {
            ModelKind::DualBranch => TrainableParams {
                attribute_context: Some(init_context(&config, e, seed ^ 0xA77, seed)?),
                object_context: Some(init_context(&config, e, seed ^ 0x0B1, seed)?),
                pair_context: None,
                integrator: if config.integrator.enabled {
                    Some(Integrator::new(&config.integrator, backbone.embed_dim(), seed ^ 0x1E7)?)
                } else {
                    None
                },
            },
            ModelKind::CompositionBranch => TrainableParams {
                attribute_context: None,
                object_context: None,
                pair_context: Some(init_context(&config, e, seed ^ 0xFA1, seed)?),
                integrator: None,
            },
        };
        config.integrator.validate(backbone.embed_dim())?;
        Ok(Self {
            config,
            vocab,
            params,
            embeddings,
            backbone,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn logit_scale(&self) -> f64 {
        self.config.integrator.logit_scale
    }

    pub fn embed_dim(&self) -> usize {
        self.backbone.embed_dim()
    }

    /// Encodes every text prompt the model needs: `|A| + |O|` encoder calls
    /// for the dual-branch model, `|A| × |O|` for the baseline.
    pub fn text_table(&self) -> Result<PrimitiveTextTable> {
        match self.config.kind {
            ModelKind::DualBranch => encode_primitives(
                &self.backbone,
                self.params.attribute_context.as_ref().expect("dual-branch attribute prompt"),
                self.params.object_context.as_ref().expect("dual-branch object prompt"),
                &self.embeddings,
            ),
            ModelKind::CompositionBranch => {
                let pairs = encode_pairs(
                    &self.backbone,
                    self.params.pair_context.as_ref().expect("composition prompt"),
                    &self.embeddings,
                )?;
                let d = self.embed_dim();
                let table = PrimitiveTextTable {
                    attributes: Array2::zeros((0, d)),
                    objects: Array2::zeros((0, d)),
                    pairs: Some(pairs),
                };
                table.validate()?;
                Ok(table)
            }
        }
    }

    pub fn image_tokens(&self, sample: &SampleRecord) -> Result<ImageTokens> {
        self.backbone.image_encode(sample)
    }

    fn fuse(&self, image: &ImageTokens, table: &PrimitiveTextTable) -> Result<SampleForward> {
        let Some(integrator) = &self.params.integrator else {
            return Ok(SampleForward {
                refined: image.cls.clone(),
                fused: None,
            });
        };
        let seq = if self.config.integrator.use_patches {
            assemble_tokens(image.cls.view(), image.patches.view(), table)?
        } else {
            assemble_cls_only(image.cls.view(), table)?
        };
        let mask = build_attention_mask(&self.config.integrator.mask, &seq.bounds);
        let pass = integrator.forward(&seq, &mask)?;
        Ok(SampleForward {
            refined: pass.refined_cls().to_owned(),
            fused: Some((seq, pass)),
        })
    }

    /// Branch scores for one sample against a precomputed text table.
    pub fn scores(&self, table: &PrimitiveTextTable, sample: &SampleRecord) -> Result<BranchScores> {
        let image = self.image_tokens(sample)?;
        self.scores_from_image(table, &image)
    }

    pub fn scores_from_image(&self, table: &PrimitiveTextTable, image: &ImageTokens) -> Result<BranchScores> {
        match self.config.kind {
            ModelKind::DualBranch => {
                let fwd = self.fuse(image, table)?;
                Ok(BranchScores {
                    attr: Some(cosine_rows(fwd.refined.view(), table.attributes.view())?),
                    obj: Some(cosine_rows(fwd.refined.view(), table.objects.view())?),
                    pair: None,
                })
            }
            ModelKind::CompositionBranch => {
                let pairs = table.pairs.as_ref().ok_or_else(|| {
                    Error::DimensionMismatch("text table has no pair rows".into())
                })?;
                Ok(BranchScores {
                    attr: None,
                    obj: None,
                    pair: Some(cosine_rows(image.cls.view(), pairs.view())?),
                })
            }
        }
    }

    fn sample_grad(
        &self,
        table: &PrimitiveTextTable,
        sample: &SampleRecord,
        logit_scale: f64,
        terms: LossTerms,
        batch: f64,
    ) -> Result<SampleGrad> {
        let image = self.image_tokens(sample)?;
        let label = &sample.label;
        let d = self.embed_dim();
        match self.config.kind {
            ModelKind::CompositionBranch => {
                let pairs = table.pairs.as_ref().expect("pair rows");
                let s_pair = cosine_rows(image.cls.view(), pairs.view())?;
                let mut targets = Array1::zeros(pairs.nrows());
                for p in label.expand_pairs() {
                    targets[p.flat_index(self.vocab.num_objects())] = 1.0;
                }
                let (loss, dz) = bce_row((&s_pair * logit_scale).view(), targets.view());
                let ds = if terms.attr { dz * (logit_scale / batch) } else { Array1::zeros(s_pair.len()) };
                let (_, d_rows) = cosine_rows_backward(image.cls.view(), pairs.view(), s_pair.view(), ds.view());
                Ok(SampleGrad {
                    losses: BranchLosses { attr: loss, obj: 0.0 },
                    integrator: None,
                    d_attr: Array2::zeros((0, d)),
                    d_obj: Array2::zeros((0, d)),
                    d_pair: Some(d_rows),
                })
            }
            ModelKind::DualBranch => {
                let fwd = self.fuse(&image, table)?;
                let refined = fwd.refined.view();
                let s_attr = cosine_rows(refined, table.attributes.view())?;
                let s_obj = cosine_rows(refined, table.objects.view())?;
                let mut y = Array1::zeros(s_attr.len());
                for a in label.attributes() {
                    y[a.0] = 1.0;
                }
                let (loss_a, dza) = bce_row((&s_attr * logit_scale).view(), y.view());
                let (loss_o, dzo) = ce_row((&s_obj * logit_scale).view(), label.object().0);
                let ds_attr = if terms.attr { dza * (logit_scale / batch) } else { Array1::zeros(s_attr.len()) };
                let ds_obj = if terms.obj { dzo * (logit_scale / batch) } else { Array1::zeros(s_obj.len()) };
                let (dc_a, mut d_attr) =
                    cosine_rows_backward(refined, table.attributes.view(), s_attr.view(), ds_attr.view());
                let (dc_o, mut d_obj) =
                    cosine_rows_backward(refined, table.objects.view(), s_obj.view(), ds_obj.view());
                let d_refined = dc_a + dc_o;
                let integrator_grad = match (&self.params.integrator, &fwd.fused) {
                    (Some(integrator), Some((seq, pass))) => {
                        let mut d_out = Array2::zeros(seq.tokens.raw_dim());
                        d_out.row_mut(0).assign(&d_refined);
                        let mut grad = integrator.zeros_like();
                        let d_tokens = integrator.backward(pass, d_out, &mut grad);
                        let b = seq.bounds;
                        d_attr += &d_tokens.slice(s![b.patch_end..b.attr_end, ..]);
                        d_obj += &d_tokens.slice(s![b.attr_end..b.obj_end, ..]);
                        Some(grad)
                    }
                    _ => None,
                };
                Ok(SampleGrad {
                    losses: BranchLosses { attr: loss_a, obj: loss_o },
                    integrator: integrator_grad,
                    d_attr,
                    d_obj,
                    d_pair: None,
                })
            }
        }
    }

    /// Batch-mean losses and their gradients w.r.t. every trainable tensor.
    /// Per-sample work runs in parallel; reduction happens in sample order,
    /// so results are bitwise reproducible.
    pub fn loss_and_grad(
        &self,
        samples: &[&SampleRecord],
        logit_scale: f64,
        terms: LossTerms,
    ) -> Result<BatchGradients> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("empty batch".into()));
        }
        let table = self.text_table()?;
        let batch = samples.len() as f64;
        let per_sample = samples
            .par_iter()
            .map(|s| self.sample_grad(&table, s, logit_scale, terms, batch))
            .collect::<Result<Vec<_>>>()?;

        let mut grads = self.params.zeros_like();
        let mut losses = BranchLosses::default();
        let d = self.embed_dim();
        let mut d_attr = Array2::zeros((table.num_attributes(), d));
        let mut d_obj = Array2::zeros((table.num_objects(), d));
        let mut d_pair = table.pairs.as_ref().map(|p| Array2::zeros(p.raw_dim()));
        for sg in &per_sample {
            losses.attr += sg.losses.attr / batch;
            losses.obj += sg.losses.obj / batch;
            d_attr += &sg.d_attr;
            d_obj += &sg.d_obj;
            if let (Some(acc), Some(g)) = (d_pair.as_mut(), sg.d_pair.as_ref()) {
                *acc += g;
            }
            if let (Some(acc), Some(g)) = (grads.integrator.as_mut(), sg.integrator.as_ref()) {
                add_scaled(acc, g, 1.0);
            }
        }
        if !losses.attr.is_finite() || !losses.obj.is_finite() {
            return Err(Error::NumericFailure(format!(
                "non-finite loss (attr {}, obj {})",
                losses.attr, losses.obj
            )));
        }
        if let Some(ctx) = &self.params.attribute_context {
            let g = primitive_context_grad(&self.backbone, ctx, &self.embeddings, Branch::Attribute, d_attr.view())?;
            grads.attribute_context.as_mut().expect("same layout").context = g;
        }
        if let Some(ctx) = &self.params.object_context {
            let g = primitive_context_grad(&self.backbone, ctx, &self.embeddings, Branch::Object, d_obj.view())?;
            grads.object_context.as_mut().expect("same layout").context = g;
        }
        if let (Some(ctx), Some(rows)) = (&self.params.pair_context, d_pair) {
            let g = pair_context_grad(&self.backbone, ctx, &self.embeddings, rows.view())?;
            grads.pair_context.as_mut().expect("same layout").context = g;
        }
        Ok(BatchGradients { losses, grads })
    }

    /// Forward-only batch losses.
    pub fn batch_losses(&self, samples: &[&SampleRecord], logit_scale: f64) -> Result<BranchLosses> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("empty batch".into()));
        }
        let table = self.text_table()?;
        let batch = samples.len() as f64;
        let per_sample = samples
            .par_iter()
            .map(|s| self.sample_losses(&table, s, logit_scale))
            .collect::<Result<Vec<_>>>()?;
        let mut losses = BranchLosses::default();
        for l in per_sample {
            losses.attr += l.attr / batch;
            losses.obj += l.obj / batch;
        }
        Ok(losses)
    }

    fn sample_losses(&self, table: &PrimitiveTextTable, sample: &SampleRecord, logit_scale: f64) -> Result<BranchLosses> {
        let scores = self.scores(table, sample)?;
        let label = &sample.label;
        let scaled = |v: &Array1<f64>| v * logit_scale;
        match self.config.kind {
            ModelKind::DualBranch => {
                let s_attr = scores.attr.as_ref().expect("attribute branch");
                let mut y = Array1::zeros(s_attr.len());
                for a in label.attributes() {
                    y[a.0] = 1.0;
                }
                let (la, _) = bce_row(scaled(s_attr).view(), y.view());
                let (lo, _) = ce_row(scaled(scores.obj.as_ref().expect("object branch")).view(), label.object().0);
                Ok(BranchLosses { attr: la, obj: lo })
            }
            ModelKind::CompositionBranch => {
                let s_pair = scores.pair.as_ref().expect("pair branch");
                let mut y = Array1::zeros(s_pair.len());
                for p in label.expand_pairs() {
                    y[p.flat_index(self.vocab.num_objects())] = 1.0;
                }
                let (l, _) = bce_row(scaled(s_pair).view(), y.view());
                Ok(BranchLosses { attr: l, obj: 0.0 })
            }
        }
    }

    /// SHA-256 over the frozen stores (vocabulary embeddings and backbone
    /// projection). Unchanged by training.
    pub fn frozen_fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        let mut feed = |v: ArrayView1<'_, f64>| {
            for x in v {
                hasher.update(x.to_le_bytes());
            }
        };
        for row in self.embeddings.attributes.rows() {
            feed(row);
        }
        for row in self.embeddings.objects.rows() {
            feed(row);
        }
        if let Some(p) = self.backbone.projection() {
            for row in p.rows() {
                feed(row);
            }
        }
        to_hex(&hasher.finalize())
    }
}

pub(crate) fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
