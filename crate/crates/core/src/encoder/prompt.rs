use ndarray::{concatenate, Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{AttributeId, LatentTruth, ObjectId, PrimitiveVocab};
use crate::error::{Error, Result};
use crate::params::{join, slice, slice_mut, Params};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Attribute,
    Object,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::Attribute => "attribute",
            Branch::Object => "object",
        }
    }
}

/// Learnable context vectors `p_1 … p_K`, shared by every primitive of a branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptContext {
    pub context: Array2<f64>,
}

impl PromptContext {
    pub fn gaussian(len: usize, dim: usize, std: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, std).expect("valid std");
        Self {
            context: Array2::from_shape_fn((len, dim), |_| normal.sample(&mut rng)),
        }
    }

    pub fn from_rows(context: Array2<f64>) -> Self {
        Self { context }
    }

    pub fn len(&self) -> usize {
        self.context.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.context.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.context.ncols()
    }
}

impl Params for PromptContext {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&join(prefix, "context"), slice(&self.context));
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&join(prefix, "context"), slice_mut(&mut self.context));
    }
}

/// Deterministic per-word vectors, `N(0, 1/dim)` per coordinate, keyed by
/// a hash of the seed and the word.
pub fn word_vector(word: &str, dim: usize, seed: u64) -> Array1<f64> {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(word.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 8];
    key.copy_from_slice(&digest[..8]);
    let mut rng = ChaCha8Rng::seed_from_u64(u64::from_le_bytes(key));
    let normal = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).expect("valid std");
    Array1::from_shape_fn(dim, |_| normal.sample(&mut rng))
}

/// Mean of the word vectors of a (possibly multi-word) name.
pub fn name_vector(name: &str, dim: usize, seed: u64) -> Array1<f64> {
    let words: Vec<&str> = name.split_whitespace().collect();
    let mut acc = Array1::zeros(dim);
    for w in &words {
        acc += &word_vector(w, dim, seed);
    }
    acc / words.len().max(1) as f64
}

/// Frozen per-primitive token embeddings `v_a`, `v_o`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocabEmbedding {
    pub attributes: Array2<f64>,
    pub objects: Array2<f64>,
}

impl VocabEmbedding {
    pub fn from_words(vocab: &PrimitiveVocab, dim: usize, seed: u64) -> Self {
        let build = |names: &[String]| {
            let mut out = Array2::zeros((names.len(), dim));
            for (mut row, name) in out.axis_iter_mut(Axis(0)).zip(names) {
                row.assign(&name_vector(name, dim, seed));
            }
            out
        };
        Self {
            attributes: build(vocab.attributes()),
            objects: build(vocab.objects()),
        }
    }

    /// Uses the generator's prototypes as word vectors, so text and image
    /// features start out aligned the way a pretrained backbone's are.
    pub fn from_latent(vocab: &PrimitiveVocab, truth: &LatentTruth) -> Result<Self> {
        if truth.attribute_prototypes.nrows() != vocab.num_attributes()
            || truth.object_prototypes.nrows() != vocab.num_objects()
        {
            return Err(Error::DimensionMismatch(
                "latent prototypes do not match the vocabulary".into(),
            ));
        }
        Ok(Self {
            attributes: truth.attribute_prototypes.clone(),
            objects: truth.object_prototypes.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.attributes.ncols()
    }

    pub fn num_attributes(&self) -> usize {
        self.attributes.nrows()
    }

    pub fn num_objects(&self) -> usize {
        self.objects.nrows()
    }

    pub fn attribute(&self, id: AttributeId) -> Result<ArrayView1<'_, f64>> {
        if id.0 >= self.attributes.nrows() {
            return Err(Error::OutOfRange {
                kind: "attribute",
                id: id.0,
                size: self.attributes.nrows(),
            });
        }
        Ok(self.attributes.row(id.0))
    }

    pub fn object(&self, id: ObjectId) -> Result<ArrayView1<'_, f64>> {
        if id.0 >= self.objects.nrows() {
            return Err(Error::OutOfRange {
                kind: "object",
                id: id.0,
                size: self.objects.nrows(),
            });
        }
        Ok(self.objects.row(id.0))
    }
}

fn append_rows(context: &PromptContext, rows: &[ArrayView1<'_, f64>]) -> Result<Array2<f64>> {
    let mut parts = vec![context.context.view()];
    let reshaped: Vec<_> = rows.iter().map(|r| r.insert_axis(Axis(0))).collect();
    for r in &reshaped {
        if r.ncols() != context.dim() {
            return Err(Error::DimensionMismatch(format!(
                "context dim {} vs vocabulary dim {}",
                context.dim(),
                r.ncols()
            )));
        }
        parts.push(r.view());
    }
    concatenate(Axis(0), &parts).map_err(|e| Error::DimensionMismatch(e.to_string()))
}

/// `[p_1 … p_K, v]` for one attribute or object.
pub fn build_primitive_prompt(
    context: &PromptContext,
    embeddings: &VocabEmbedding,
    branch: Branch,
    index: usize,
) -> Result<Array2<f64>> {
    let v = match branch {
        Branch::Attribute => embeddings.attribute(AttributeId(index))?,
        Branch::Object => embeddings.object(ObjectId(index))?,
    };
    append_rows(context, &[v])
}

/// `[p_1 … p_K, v_a, v_o]` for the composition-branch baseline.
pub fn build_pair_prompt(
    context: &PromptContext,
    embeddings: &VocabEmbedding,
    attribute: AttributeId,
    object: ObjectId,
) -> Result<Array2<f64>> {
    append_rows(
        context,
        &[embeddings.attribute(attribute)?, embeddings.object(object)?],
    )
}
