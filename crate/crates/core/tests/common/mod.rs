#![allow(dead_code)]

use primfuse_core::config::VocabSource;
use primfuse_core::data::{generate_synthetic, DatasetManifest, LatentTruth, SampleRecord, Split, SynthConfig};
use primfuse_core::pipeline::build_model;
use primfuse_core::{CompositionalModel, ModelKind, RunConfig};

pub fn tiny_synth(dim: usize) -> SynthConfig {
    SynthConfig {
        num_attributes: 5,
        num_objects: 4,
        feature_dim: dim,
        train_samples: 40,
        val_samples: 0,
        test_samples: 24,
        num_compositions: 12,
        holdout_fraction: 0.25,
        min_attrs: 1,
        max_attrs: 2,
        distractor_patches: 2,
        noise: 0.1,
        ..SynthConfig::default()
    }
}

pub fn tiny_data(dim: usize, seed: u64) -> (DatasetManifest, LatentTruth) {
    generate_synthetic(&tiny_synth(dim), seed).expect("tiny synthetic data")
}

pub fn words_config() -> RunConfig {
    let mut config = RunConfig::default();
    config.backbone.vocab_source = VocabSource::Words;
    config
}

pub fn tiny_model(manifest: &DatasetManifest, config: &RunConfig, kind: ModelKind) -> CompositionalModel {
    let mut config = config.clone();
    config.model.kind = kind;
    build_model(&config, manifest, None).expect("model")
}

pub fn train_batch(manifest: &DatasetManifest, n: usize) -> Vec<&SampleRecord> {
    manifest.split(Split::Train).take(n).collect()
}
