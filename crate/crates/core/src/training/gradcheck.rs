use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SampleRecord;
use crate::error::Result;
use crate::model::{CompositionalModel, LossTerms, TrainableParams};
use crate::params::Params;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    pub tolerance: f64,
    /// Check this many randomly chosen parameters; `None` checks all.
    pub subset: Option<usize>,
    pub seed: u64,
    /// Lower bound on the relative-error denominator, so parameters whose
    /// true gradient is zero are judged by absolute error.
    pub denominator_floor: f64,
    pub logit_scale: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            tolerance: 1e-4,
            subset: None,
            seed: 0,
            denominator_floor: 1e-5,
            logit_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckEntry {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    pub worst: Option<GradCheckEntry>,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central finite differences of the total loss against analytic gradients.
pub fn grad_check(model: &CompositionalModel, batch: &[&SampleRecord], config: &GradCheckConfig) -> Result<GradCheckReport> {
    grad_check_with(model, batch, config, |_| {})
}

/// As [`grad_check`], with a hook that may tamper with the analytic
/// gradients before comparison.
pub fn grad_check_with(
    model: &CompositionalModel,
    batch: &[&SampleRecord],
    config: &GradCheckConfig,
    tamper: impl Fn(&mut TrainableParams),
) -> Result<GradCheckReport> {
    let mut analytic = model.loss_and_grad(batch, config.logit_scale, LossTerms::ALL)?.grads;
    tamper(&mut analytic);
    let analytic = analytic.to_flat();

    let mut names = Vec::with_capacity(analytic.len());
    for (name, len) in model.params.layout() {
        names.extend((0..len).map(|i| (name.clone(), i)));
    }
    let indices: Vec<usize> = match config.subset {
        Some(k) if k < analytic.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut picked = sample(&mut rng, analytic.len(), k).into_vec();
            picked.sort_unstable();
            picked
        }
        _ => (0..analytic.len()).collect(),
    };

    let base = model.params.to_flat();
    let mut probe = model.clone();
    let mut loss_at = |flat: &[f64]| -> Result<f64> {
        probe.params.load_flat(flat);
        Ok(probe.batch_losses(batch, config.logit_scale)?.total())
    };

    let mut worst: Option<GradCheckEntry> = None;
    for &i in &indices {
        let mut shifted = base.clone();
        shifted[i] = base[i] + config.epsilon;
        let plus = loss_at(&shifted)?;
        shifted[i] = base[i] - config.epsilon;
        let minus = loss_at(&shifted)?;
        let numeric = (plus - minus) / (2.0 * config.epsilon);
        let err = relative_error(analytic[i], numeric, config.denominator_floor);
        if worst.as_ref().is_none_or(|w| err > w.relative_error || err.is_nan()) {
            let (name, index) = names[i].clone();
            worst = Some(GradCheckEntry {
                name,
                index,
                analytic: analytic[i],
                numeric,
                relative_error: err,
            });
        }
    }
    let max = worst.as_ref().map_or(0.0, |w| w.relative_error);
    Ok(GradCheckReport {
        checked: indices.len(),
        max_relative_error: max,
        worst,
        passed: max < config.tolerance,
    })
}
