//! Assembles a model from a run configuration and a dataset.

use std::path::Path;

use crate::config::{BackboneKind, BackboneSection, RunConfig, VocabSource};
use crate::data::{DatasetManifest, LatentTruth};
use crate::encoder::{SyntheticBackbone, VocabEmbedding};
use crate::error::{Error, Result};
use crate::model::{CompositionalModel, ModelKind};

/// Width of the precomputed features in a synthetic manifest.
pub fn feature_dim(manifest: &DatasetManifest) -> Result<usize> {
    let first = manifest
        .samples()
        .first()
        .ok_or_else(|| Error::EmptyInput("manifest has no samples".into()))?;
    Ok(first.synthetic_features()?.dim())
}

pub fn build_backbone(section: &BackboneSection, feature_dim: usize) -> Result<SyntheticBackbone> {
    match section.kind {
        BackboneKind::External => Err(Error::Unsupported(
            "no external image-text backbone is bundled; use backbone.kind = \"synthetic\"".into(),
        )),
        BackboneKind::Synthetic => Ok(match section.embed_dim {
            None => SyntheticBackbone::identity(feature_dim),
            Some(e) => SyntheticBackbone::projected(feature_dim, e, section.projection_seed),
        }),
    }
}

pub fn build_embeddings(
    section: &BackboneSection,
    manifest: &DatasetManifest,
    latent: Option<&LatentTruth>,
    dim: usize,
) -> Result<VocabEmbedding> {
    match (section.vocab_source, latent) {
        (VocabSource::Latent | VocabSource::Auto, Some(truth)) => VocabEmbedding::from_latent(manifest.vocab(), truth),
        (VocabSource::Latent, None) => Err(Error::InvalidConfig(
            "backbone.vocab_source = \"latent\" needs data.latent".into(),
        )),
        (VocabSource::Words | VocabSource::Auto, _) => {
            Ok(VocabEmbedding::from_words(manifest.vocab(), dim, section.word_seed))
        }
    }
}

pub fn build_model(config: &RunConfig, manifest: &DatasetManifest, latent: Option<&LatentTruth>) -> Result<CompositionalModel> {
    build_model_of_kind(config, manifest, latent, config.model.kind)
}

pub fn build_model_of_kind(
    config: &RunConfig,
    manifest: &DatasetManifest,
    latent: Option<&LatentTruth>,
    kind: ModelKind,
) -> Result<CompositionalModel> {
    let dim = feature_dim(manifest)?;
    let backbone = build_backbone(&config.backbone, dim)?;
    let embeddings = build_embeddings(&config.backbone, manifest, latent, dim)?;
    let mut model_config = config.model_config();
    model_config.kind = kind;
    CompositionalModel::new(model_config, manifest.vocab().clone(), embeddings, backbone, config.seed)
}

pub fn load_latent(path: &Path) -> Result<LatentTruth> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_latent(latent: &LatentTruth, path: &Path) -> Result<()> {
    let json = serde_json::to_string(latent)?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}
