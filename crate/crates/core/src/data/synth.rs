//! Deterministic synthetic datasets with additive prototype geometry.
//!
//! Every attribute and object owns a random unit prototype. An image of
//! `⟨S, o⟩` has class feature `normalize(w_o + Σ_{a∈S} u_a + noise)` and one
//! patch `normalize(u_a + noise)` per attribute, plus pure-noise distractor
//! patches. A fraction of the composition pool is held out of training and
//! only shows up in val/test.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, Axis};
use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::label::MultiAttrLabel;
use super::manifest::{DatasetManifest, FeaturePayload, SampleRecord, Split, SyntheticFeatures};
use super::vocab::{AttributeId, ObjectId, PrimitiveVocab};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_attributes: usize,
    pub num_objects: usize,
    pub feature_dim: usize,
    pub train_samples: usize,
    pub val_samples: usize,
    pub test_samples: usize,
    /// Size of the pool of distinct `⟨S, o⟩` compositions.
    pub num_compositions: usize,
    /// Fraction of the pool held out of training.
    pub holdout_fraction: f64,
    /// Fraction of val/test samples drawn from held-out compositions.
    pub eval_unseen_fraction: f64,
    pub min_attrs: usize,
    pub max_attrs: usize,
    pub distractor_patches: usize,
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_attributes: 12,
            num_objects: 8,
            feature_dim: 32,
            train_samples: 2000,
            val_samples: 200,
            test_samples: 400,
            num_compositions: 120,
            holdout_fraction: 0.2,
            eval_unseen_fraction: 0.5,
            min_attrs: 1,
            max_attrs: 3,
            distractor_patches: 4,
            noise: 0.1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("synth: {msg}")));
        if self.num_attributes == 0 || self.num_objects == 0 || self.feature_dim == 0 {
            return bad("vocabulary sizes and feature_dim must be positive");
        }
        if self.train_samples == 0 || self.test_samples == 0 {
            return bad("train_samples and test_samples must be positive");
        }
        if self.num_compositions == 0 {
            return bad("num_compositions must be positive");
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return bad("holdout_fraction must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.eval_unseen_fraction) {
            return bad("eval_unseen_fraction must lie in [0, 1]");
        }
        if self.min_attrs == 0 || self.min_attrs > self.max_attrs || self.max_attrs > self.num_attributes {
            return bad("attribute count range must satisfy 1 <= min_attrs <= max_attrs <= num_attributes");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be a non-negative finite number");
        }
        Ok(())
    }

    /// Number of compositions held out of training.
    pub fn holdout_count(&self) -> usize {
        (self.holdout_fraction * self.num_compositions as f64).round() as usize
    }

    /// Number of distinct `⟨S, o⟩` with `min_attrs ≤ |S| ≤ max_attrs`.
    pub fn max_distinct_compositions(&self) -> f64 {
        let per_object: f64 = (self.min_attrs..=self.max_attrs)
            .map(|k| binomial(self.num_attributes, k))
            .sum();
        per_object * self.num_objects as f64
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Generator-side ground truth, written next to the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentTruth {
    pub seed: u64,
    pub config: SynthConfig,
    pub attribute_prototypes: Array2<f64>,
    pub object_prototypes: Array2<f64>,
    pub seen_compositions: Vec<MultiAttrLabel>,
    pub unseen_compositions: Vec<MultiAttrLabel>,
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Array1<f64> {
    Array1::from_iter((0..dim).map(|_| {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    }))
}

fn normalized(mut v: Array1<f64>) -> Array1<f64> {
    let norm = v.dot(&v).sqrt();
    if norm > 0.0 {
        v /= norm;
    }
    v
}

fn unit_rows(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Array2<f64> {
    let mut out = Array2::zeros((rows, dim));
    for mut row in out.axis_iter_mut(Axis(0)) {
        row.assign(&normalized(gaussian(rng, dim, 1.0)));
    }
    out
}

fn draw_pool(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<MultiAttrLabel>> {
    if (config.num_compositions as f64) > config.max_distinct_compositions() {
        return Err(Error::InfeasibleSynth(format!(
            "{} compositions requested but only {} are possible",
            config.num_compositions,
            config.max_distinct_compositions()
        )));
    }
    let mut pool = BTreeSet::new();
    let mut order = Vec::with_capacity(config.num_compositions);
    let max_attempts = 1000 * config.num_compositions.max(1);
    let mut attempts = 0;
    while order.len() < config.num_compositions {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::InfeasibleSynth(format!(
                "could not draw {} distinct compositions",
                config.num_compositions
            )));
        }
        let object = ObjectId(rng.random_range(0..config.num_objects));
        let size = rng.random_range(config.min_attrs..=config.max_attrs);
        let attrs = sample_indices(rng, config.num_attributes, size)
            .into_iter()
            .map(AttributeId);
        let label = MultiAttrLabel::new(attrs, object)?;
        if pool.insert(label.clone()) {
            order.push(label);
        }
    }
    Ok(order)
}

fn primitive_usage(config: &SynthConfig, labels: &[MultiAttrLabel]) -> Vec<bool> {
    let mut used = vec![false; config.num_attributes + config.num_objects];
    for label in labels {
        used[config.num_attributes + label.object().0] = true;
        for a in label.attributes() {
            used[a.0] = true;
        }
    }
    used
}

/// Splits the pool into seen and held-out compositions so that every
/// primitive used by the pool still occurs in some seen composition.
fn split_pool(
    config: &SynthConfig,
    pool: Vec<MultiAttrLabel>,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<MultiAttrLabel>, Vec<MultiAttrLabel>)> {
    let holdout = config.holdout_count();
    if holdout == 0 || holdout >= pool.len() {
        return Err(Error::InfeasibleSynth(format!(
            "holdout of {} from {} compositions leaves an empty partition",
            holdout,
            pool.len()
        )));
    }
    if pool.len() - holdout > config.train_samples {
        return Err(Error::InfeasibleSynth(format!(
            "{} seen compositions cannot all appear in {} training samples",
            pool.len() - holdout,
            config.train_samples
        )));
    }
    let needed = primitive_usage(config, &pool);
    let mut pool = pool;
    for _ in 0..100 {
        pool.shuffle(rng);
        let (unseen, seen) = pool.split_at(holdout);
        if primitive_usage(config, seen) == needed {
            return Ok((seen.to_vec(), unseen.to_vec()));
        }
    }
    Err(Error::InfeasibleSynth(
        "no holdout keeps every primitive in a seen composition".into(),
    ))
}

fn render(
    config: &SynthConfig,
    truth: &LatentTruth,
    label: &MultiAttrLabel,
    rng: &mut ChaCha8Rng,
) -> Result<SyntheticFeatures> {
    let dim = config.feature_dim;
    let mut signal = truth.object_prototypes.row(label.object().0).to_owned();
    for a in label.attributes() {
        signal += &truth.attribute_prototypes.row(a.0);
    }
    let cls = normalized(signal + gaussian(rng, dim, config.noise));

    let mut rows: Vec<Array1<f64>> = label
        .attributes()
        .iter()
        .map(|a| {
            let proto = truth.attribute_prototypes.row(a.0).to_owned();
            normalized(proto + gaussian(rng, dim, config.noise))
        })
        .collect();
    for _ in 0..config.distractor_patches {
        rows.push(normalized(gaussian(rng, dim, 1.0)));
    }
    rows.shuffle(rng);
    let mut patches = Array2::zeros((rows.len(), dim));
    for (mut dst, src) in patches.axis_iter_mut(Axis(0)).zip(&rows) {
        dst.assign(src);
    }
    SyntheticFeatures::new(cls, patches)
}

fn draw_labels(
    count: usize,
    unseen_fraction: f64,
    seen: &[MultiAttrLabel],
    unseen: &[MultiAttrLabel],
    rng: &mut ChaCha8Rng,
) -> Vec<MultiAttrLabel> {
    let n_unseen = (unseen_fraction * count as f64).round() as usize;
    let mut labels: Vec<MultiAttrLabel> = (0..count)
        .map(|i| {
            let source = if i < n_unseen { unseen } else { seen };
            source[rng.random_range(0..source.len())].clone()
        })
        .collect();
    labels.shuffle(rng);
    labels
}

/// Builds a manifest and its latent truth. Pure in `(config, seed)`.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<(DatasetManifest, LatentTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = PrimitiveVocab::new(
        (0..config.num_attributes).map(|i| format!("attr{i:02}")),
        (0..config.num_objects).map(|i| format!("obj{i:02}")),
    )?;
    let attribute_prototypes = unit_rows(&mut rng, config.num_attributes, config.feature_dim);
    let object_prototypes = unit_rows(&mut rng, config.num_objects, config.feature_dim);
    let pool = draw_pool(config, &mut rng)?;
    let (seen, unseen) = split_pool(config, pool, &mut rng)?;
    let truth = LatentTruth {
        seed,
        config: config.clone(),
        attribute_prototypes,
        object_prototypes,
        seen_compositions: seen,
        unseen_compositions: unseen,
    };

    // Every seen composition appears in train at least once so that the
    // derived C^s equals the designated seen set.
    let mut train_labels = truth.seen_compositions.clone();
    while train_labels.len() < config.train_samples {
        let pick = rng.random_range(0..truth.seen_compositions.len());
        train_labels.push(truth.seen_compositions[pick].clone());
    }
    train_labels.shuffle(&mut rng);
    let val_labels = draw_labels(
        config.val_samples,
        config.eval_unseen_fraction,
        &truth.seen_compositions,
        &truth.unseen_compositions,
        &mut rng,
    );
    let test_labels = draw_labels(
        config.test_samples,
        config.eval_unseen_fraction,
        &truth.seen_compositions,
        &truth.unseen_compositions,
        &mut rng,
    );

    let mut samples = Vec::with_capacity(config.train_samples + config.val_samples + config.test_samples);
    for (split, labels) in [
        (Split::Train, train_labels),
        (Split::Val, val_labels),
        (Split::Test, test_labels),
    ] {
        for (i, label) in labels.into_iter().enumerate() {
            let features = render(config, &truth, &label, &mut rng)?;
            samples.push(SampleRecord {
                id: format!("{split}-{i:05}"),
                payload: FeaturePayload::Synthetic(features),
                label,
                split,
            });
        }
    }
    let manifest = DatasetManifest::new(vocab, samples)?;
    Ok((manifest, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            train_samples: 200,
            val_samples: 20,
            test_samples: 40,
            num_compositions: 10,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let (a, _) = generate_synthetic(&small(), 7).unwrap();
        let (b, _) = generate_synthetic(&small(), 7).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let (c, _) = generate_synthetic(&small(), 8).unwrap();
        assert_ne!(a.to_json().unwrap(), c.to_json().unwrap());
    }

    #[test]
    fn split_counts_match_config() {
        let config = SynthConfig::default();
        let (m, _) = generate_synthetic(&config, 7).unwrap();
        assert_eq!(m.vocab().num_attributes(), 12);
        assert_eq!(m.vocab().num_objects(), 8);
        assert_eq!(m.split_len(Split::Train), 2000);
        assert_eq!(m.split_len(Split::Val), 200);
        assert_eq!(m.split_len(Split::Test), 400);
    }

    #[test]
    fn holdout_of_ten_leaves_two_unseen() {
        let (m, truth) = generate_synthetic(&small(), 3).unwrap();
        assert_eq!(truth.unseen_compositions.len(), 2);
        assert_eq!(truth.seen_compositions.len(), 8);
        let derived: Vec<_> = m.unseen_compositions().iter().cloned().collect();
        let mut expected = truth.unseen_compositions.clone();
        expected.sort();
        assert_eq!(derived, expected);
    }

    #[test]
    fn unseen_labels_never_in_train() {
        let (m, truth) = generate_synthetic(&SynthConfig::default(), 11).unwrap();
        for sample in m.split(Split::Train) {
            assert!(!truth.unseen_compositions.contains(&sample.label));
        }
        assert_eq!(m.seen_compositions().len(), truth.seen_compositions.len());
    }

    #[test]
    fn features_are_finite_and_shaped() {
        let config = small();
        let (m, _) = generate_synthetic(&config, 5).unwrap();
        for sample in m.samples() {
            let f = sample.synthetic_features().unwrap();
            assert_eq!(f.dim(), config.feature_dim);
            assert_eq!(
                f.num_patches(),
                sample.label.attributes().len() + config.distractor_patches
            );
            assert!((f.cls.dot(&f.cls) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn infeasible_pool_is_rejected() {
        let config = SynthConfig {
            num_attributes: 2,
            num_objects: 1,
            max_attrs: 2,
            num_compositions: 10,
            ..small()
        };
        assert_eq!(generate_synthetic(&config, 1).unwrap_err().code(), "E_INFEASIBLE_SYNTH");
        let tiny_holdout = SynthConfig {
            holdout_fraction: 0.01,
            ..small()
        };
        assert_eq!(generate_synthetic(&tiny_holdout, 1).unwrap_err().code(), "E_INFEASIBLE_SYNTH");
    }
}
