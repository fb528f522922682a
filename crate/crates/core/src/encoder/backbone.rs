use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::SampleRecord;
use crate::error::{Error, Result};

/// Monotone counts of encoder invocations.
#[derive(Debug, Default)]
pub struct CallCounters {
    image: AtomicU64,
    text: AtomicU64,
}

impl CallCounters {
    pub fn image_calls(&self) -> u64 {
        self.image.load(Ordering::Relaxed)
    }

    pub fn text_calls(&self) -> u64 {
        self.text.load(Ordering::Relaxed)
    }

    pub fn snapshot(&self) -> (u64, u64) {
        (self.image_calls(), self.text_calls())
    }

    pub fn record_image(&self) {
        self.image.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_text(&self) {
        self.text.fetch_add(1, Ordering::Relaxed);
    }
}

impl Clone for CallCounters {
    fn clone(&self) -> Self {
        Self {
            image: AtomicU64::new(self.image_calls()),
            text: AtomicU64::new(self.text_calls()),
        }
    }
}

/// Class token and patch tokens of one image in the joint embedding space.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTokens {
    pub cls: Array1<f64>,
    pub patches: Array2<f64>,
}

/// A frozen vision-language backbone.
///
/// `text_encode` maps a token-embedding sequence (`len × token_dim`) to one
/// vector of `embed_dim`. Prompt tuning needs the vector-Jacobian product of
/// the text encoder with respect to its input tokens, so adapters expose it
/// through `text_encode_vjp`; the backbone's own weights never receive
/// gradients.
pub trait Backbone: Send + Sync {
    fn embed_dim(&self) -> usize;

    fn token_dim(&self) -> usize;

    fn image_encode(&self, sample: &SampleRecord) -> Result<ImageTokens>;

    fn text_encode(&self, tokens: ArrayView2<'_, f64>) -> Result<Array1<f64>>;

    fn text_encode_vjp(
        &self,
        tokens: ArrayView2<'_, f64>,
        grad: ArrayView1<'_, f64>,
    ) -> Result<Array2<f64>>;

    fn counters(&self) -> &CallCounters;
}

/// Stand-in backbone over precomputed features.
///
/// Images return their stored class and patch vectors, text returns the mean
/// of its token embeddings. Both pass through the same fixed linear map,
/// which is the identity unless a projection was requested.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SyntheticBackbone {
    input_dim: usize,
    embed_dim: usize,
    projection: Option<Array2<f64>>,
    #[serde(skip)]
    counters: CallCounters,
}

impl SyntheticBackbone {
    pub fn identity(dim: usize) -> Self {
        Self {
            input_dim: dim,
            embed_dim: dim,
            projection: None,
            counters: CallCounters::default(),
        }
    }

    /// Random Gaussian projection `input_dim → embed_dim`, entries with
    /// variance `1 / input_dim`.
    pub fn projected(input_dim: usize, embed_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / (input_dim as f64).sqrt()).expect("valid std");
        let projection = Array2::from_shape_fn((input_dim, embed_dim), |_| normal.sample(&mut rng));
        Self {
            input_dim,
            embed_dim,
            projection: Some(projection),
            counters: CallCounters::default(),
        }
    }

    pub fn projection(&self) -> Option<&Array2<f64>> {
        self.projection.as_ref()
    }

    fn project_vec(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        match &self.projection {
            Some(p) => v.dot(p),
            None => v.to_owned(),
        }
    }

    fn check_input_dim(&self, dim: usize, what: &str) -> Result<()> {
        if dim != self.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "{what} has dim {dim}, backbone expects {}",
                self.input_dim
            )));
        }
        Ok(())
    }
}

impl Backbone for SyntheticBackbone {
    fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    fn token_dim(&self) -> usize {
        self.input_dim
    }

    fn image_encode(&self, sample: &SampleRecord) -> Result<ImageTokens> {
        let features = sample.synthetic_features()?;
        self.check_input_dim(features.dim(), "image feature")?;
        self.counters.record_image();
        let cls = self.project_vec(features.cls.view());
        let patches = match &self.projection {
            Some(p) => features.patches.dot(p),
            None => features.patches.clone(),
        };
        Ok(ImageTokens { cls, patches })
    }

    fn text_encode(&self, tokens: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        self.check_input_dim(tokens.ncols(), "token embedding")?;
        let mean = tokens
            .mean_axis(Axis(0))
            .ok_or_else(|| Error::EmptyInput("text encoder got an empty sequence".into()))?;
        self.counters.record_text();
        Ok(self.project_vec(mean.view()))
    }

    fn text_encode_vjp(
        &self,
        tokens: ArrayView2<'_, f64>,
        grad: ArrayView1<'_, f64>,
    ) -> Result<Array2<f64>> {
        self.check_input_dim(tokens.ncols(), "token embedding")?;
        if grad.len() != self.embed_dim {
            return Err(Error::DimensionMismatch(format!(
                "gradient has dim {}, expected {}",
                grad.len(),
                self.embed_dim
            )));
        }
        let len = tokens.nrows();
        if len == 0 {
            return Err(Error::EmptyInput("text encoder got an empty sequence".into()));
        }
        let back = match &self.projection {
            Some(p) => p.dot(&grad),
            None => grad.to_owned(),
        } / len as f64;
        let mut out = Array2::zeros((len, self.input_dim));
        for mut row in out.axis_iter_mut(Axis(0)) {
            row.assign(&back);
        }
        Ok(out)
    }

    fn counters(&self) -> &CallCounters {
        &self.counters
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeaturePayload, MultiAttrLabel, ObjectId, AttributeId, Split, SyntheticFeatures};
    use ndarray::array;

    fn sample() -> SampleRecord {
        SampleRecord {
            id: "s".into(),
            payload: FeaturePayload::Synthetic(
                SyntheticFeatures::new(array![1.0, 2.0, 3.0], array![[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]).unwrap(),
            ),
            label: MultiAttrLabel::new([AttributeId(0)], ObjectId(0)).unwrap(),
            split: Split::Train,
        }
    }

    #[test]
    fn identity_returns_stored_features() {
        let backbone = SyntheticBackbone::identity(3);
        let out = backbone.image_encode(&sample()).unwrap();
        assert_eq!(out.cls, array![1.0, 2.0, 3.0]);
        assert_eq!(out.patches.nrows(), 2);
        let again = backbone.image_encode(&sample()).unwrap();
        assert_eq!(out, again);
        assert_eq!(backbone.counters().image_calls(), 2);
    }

    #[test]
    fn projected_outputs_are_deterministic() {
        let a = SyntheticBackbone::projected(3, 5, 9);
        let b = SyntheticBackbone::projected(3, 5, 9);
        let x = a.image_encode(&sample()).unwrap();
        assert_eq!(x, b.image_encode(&sample()).unwrap());
        assert_eq!(x.cls.len(), 5);
        assert_eq!(x.patches.dim(), (2, 5));
    }

    #[test]
    fn image_path_payload_is_rejected() {
        let mut s = sample();
        s.payload = FeaturePayload::Image("x.jpg".into());
        let err = SyntheticBackbone::identity(3).image_encode(&s).unwrap_err();
        assert_eq!(err.code(), "E_MISSING_PAYLOAD");
    }

    #[test]
    fn text_vjp_matches_finite_differences() {
        let backbone = SyntheticBackbone::projected(3, 4, 1);
        let tokens = array![[0.1, -0.2, 0.3], [0.5, 0.4, -0.1]];
        let grad = array![1.0, -2.0, 0.5, 0.25];
        let analytic = backbone.text_encode_vjp(tokens.view(), grad.view()).unwrap();
        let eps = 1e-6;
        for i in 0..2 {
            for j in 0..3 {
                let mut plus = tokens.clone();
                plus[[i, j]] += eps;
                let mut minus = tokens.clone();
                minus[[i, j]] -= eps;
                let fp = backbone.text_encode(plus.view()).unwrap().dot(&grad);
                let fm = backbone.text_encode(minus.view()).unwrap().dot(&grad);
                let numeric = (fp - fm) / (2.0 * eps);
                assert!((numeric - analytic[[i, j]]).abs() < 1e-8);
            }
        }
    }
}
