use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use super::backbone::Backbone;
use super::prompt::{build_pair_prompt, build_primitive_prompt, Branch, PromptContext, VocabEmbedding};
use crate::data::{AttributeId, ObjectId};
use crate::error::{Error, Result};

/// Encoded primitive texts `t_A` (`|A| × d`) and `t_O` (`|O| × d`), plus
/// the attribute-major pair table for the composition-branch baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimitiveTextTable {
    pub attributes: Array2<f64>,
    pub objects: Array2<f64>,
    pub pairs: Option<Array2<f64>>,
}

impl PrimitiveTextTable {
    pub fn dim(&self) -> usize {
        self.attributes.ncols()
    }

    pub fn num_attributes(&self) -> usize {
        self.attributes.nrows()
    }

    pub fn num_objects(&self) -> usize {
        self.objects.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let all = self
            .attributes
            .iter()
            .chain(self.objects.iter())
            .chain(self.pairs.iter().flat_map(|p| p.iter()));
        for v in all {
            if !v.is_finite() {
                return Err(Error::NumericFailure("non-finite text representation".into()));
            }
        }
        Ok(())
    }
}

/// Runs the text encoder once per prompt. Rows follow the prompt order.
pub fn encode_prompts(backbone: &dyn Backbone, prompts: &[Array2<f64>]) -> Result<Array2<f64>> {
    let rows = prompts
        .par_iter()
        .map(|p| backbone.text_encode(p.view()))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Array2::zeros((rows.len(), backbone.embed_dim()));
    for (mut dst, src) in out.axis_iter_mut(Axis(0)).zip(&rows) {
        dst.assign(src);
    }
    Ok(out)
}

fn primitive_prompts(
    context: &PromptContext,
    embeddings: &VocabEmbedding,
    branch: Branch,
) -> Result<Vec<Array2<f64>>> {
    let n = match branch {
        Branch::Attribute => embeddings.num_attributes(),
        Branch::Object => embeddings.num_objects(),
    };
    (0..n)
        .map(|i| build_primitive_prompt(context, embeddings, branch, i))
        .collect()
}

fn pair_prompts(context: &PromptContext, embeddings: &VocabEmbedding) -> Result<Vec<Array2<f64>>> {
    let mut out = Vec::with_capacity(embeddings.num_attributes() * embeddings.num_objects());
    for a in 0..embeddings.num_attributes() {
        for o in 0..embeddings.num_objects() {
            out.push(build_pair_prompt(context, embeddings, AttributeId(a), ObjectId(o))?);
        }
    }
    Ok(out)
}

/// Dual-branch encoding: exactly `|A| + |O|` text-encoder calls.
pub fn encode_primitives(
    backbone: &dyn Backbone,
    attribute_context: &PromptContext,
    object_context: &PromptContext,
    embeddings: &VocabEmbedding,
) -> Result<PrimitiveTextTable> {
    let attributes = encode_prompts(
        backbone,
        &primitive_prompts(attribute_context, embeddings, Branch::Attribute)?,
    )?;
    let objects = encode_prompts(
        backbone,
        &primitive_prompts(object_context, embeddings, Branch::Object)?,
    )?;
    let table = PrimitiveTextTable {
        attributes,
        objects,
        pairs: None,
    };
    table.validate()?;
    Ok(table)
}

/// Composition-branch encoding: exactly `|A| × |O|` calls, attribute-major.
pub fn encode_pairs(
    backbone: &dyn Backbone,
    pair_context: &PromptContext,
    embeddings: &VocabEmbedding,
) -> Result<Array2<f64>> {
    encode_prompts(backbone, &pair_prompts(pair_context, embeddings)?)
}

fn context_grad(
    backbone: &dyn Backbone,
    context: &PromptContext,
    prompts: &[Array2<f64>],
    row_grads: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    if row_grads.nrows() != prompts.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} row gradients for {} prompts",
            row_grads.nrows(),
            prompts.len()
        )));
    }
    let k = context.len();
    let mut grad = Array2::zeros(context.context.raw_dim());
    for (prompt, g) in prompts.iter().zip(row_grads.axis_iter(Axis(0))) {
        let tokens = backbone.text_encode_vjp(prompt.view(), g)?;
        grad += &tokens.slice(s![..k, ..]);
    }
    Ok(grad)
}

/// Gradient of the loss w.r.t. a branch context, given the gradient w.r.t.
/// every encoded primitive row.
pub fn primitive_context_grad(
    backbone: &dyn Backbone,
    context: &PromptContext,
    embeddings: &VocabEmbedding,
    branch: Branch,
    row_grads: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    let prompts = primitive_prompts(context, embeddings, branch)?;
    context_grad(backbone, context, &prompts, row_grads)
}

pub fn pair_context_grad(
    backbone: &dyn Backbone,
    context: &PromptContext,
    embeddings: &VocabEmbedding,
    row_grads: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    let prompts = pair_prompts(context, embeddings)?;
    context_grad(backbone, context, &prompts, row_grads)
}
