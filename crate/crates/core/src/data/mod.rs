//! Vocabularies, labels, manifests, solution spaces, statistics and the
//! synthetic dataset generator.

mod label;
mod manifest;
mod space;
mod stats;
mod synth;
mod vocab;

pub use label::{expand_pairs, MultiAttrLabel, PairComposition};
pub use manifest::{
    load_manifest, DatasetManifest, FeaturePayload, ManifestFile, SampleEntry, SampleRecord, Split,
    SyntheticFeatures,
};
pub use space::{build_pair_seen_set, build_solution_space, PairSeenSet, PairSet, SolutionSpace, World};
pub use stats::{compute_stats, DatasetStats};
pub use synth::{generate_synthetic, LatentTruth, SynthConfig};
pub use vocab::{canonical_name, AttributeId, ObjectId, PrimitiveVocab};
