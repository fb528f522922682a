//! Fixtures shared by the criterion benches.

use primfuse_core::config::VocabSource;
use primfuse_core::data::{generate_synthetic, DatasetManifest, SynthConfig};
use primfuse_core::pipeline::build_model;
use primfuse_core::{CompositionalModel, ModelKind, RunConfig};

/// Synthetic manifest with the given vocabulary sizes and a small sample count.
pub fn manifest(num_attributes: usize, num_objects: usize) -> DatasetManifest {
    let synth = SynthConfig {
        num_attributes,
        num_objects,
        feature_dim: 32,
        train_samples: 128,
        val_samples: 0,
        test_samples: 32,
        num_compositions: (num_attributes * num_objects / 2).clamp(4, 48),
        min_attrs: 1,
        max_attrs: 2,
        ..SynthConfig::default()
    };
    generate_synthetic(&synth, 11).expect("bench manifest").0
}

pub fn model(manifest: &DatasetManifest, kind: ModelKind) -> CompositionalModel {
    let mut config = RunConfig::default();
    config.backbone.vocab_source = VocabSource::Words;
    config.model.kind = kind;
    build_model(&config, manifest, None).expect("bench model")
}
