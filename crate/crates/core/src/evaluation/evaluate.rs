use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{aggregate_report, indicator, instance_metrics, AggregateMetrics, InstanceMetrics};
use super::rank::{combine_scores, rank_pairs};
use super::sweep::{bias_sweep_auc, SweepCandidate, SweepPoint};
use crate::data::{
    build_pair_seen_set, build_solution_space, AttributeId, DatasetManifest, MultiAttrLabel, PairComposition, SampleRecord, Split,
    World,
};
use crate::error::{Error, Result};
use crate::model::{BranchScores, CompositionalModel};

/// How Top1-P-attr and Top1-P-obj pick their prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveTop1 {
    /// Primitives of the rank-1 composition.
    #[default]
    Composition,
    /// Argmax of each branch; falls back to the composition when the model
    /// has no such branch.
    BranchArgmax,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalOptions {
    pub primitive_top1: PrimitiveTop1,
    /// Keep per-instance records in the output.
    pub keep_instances: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub sample_id: String,
    pub seen_partition: bool,
    pub truth: Vec<String>,
    pub top5: Vec<(String, f64)>,
    pub metrics: InstanceMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub world: World,
    pub split: Split,
    pub samples: usize,
    pub exact_match: f64,
    pub top1_p: f64,
    pub top5_r: f64,
    pub coverage: f64,
    pub top1_p_attr: f64,
    pub top1_p_obj: f64,
    pub mean_truth_size: f64,
    pub auc: f64,
    pub best_seen: f64,
    pub best_unseen: f64,
    /// Always `"endpoints"`: best_seen is taken at bias -inf and
    /// best_unseen at bias +inf.
    pub best_seen_unseen_rule: String,
    pub sweep_degenerate: bool,
    /// Metrics over samples whose label is in `C^s`, and over the rest.
    pub seen_partition: Option<AggregateMetrics>,
    pub unseen_partition: Option<AggregateMetrics>,
    pub sweep_curve: Vec<SweepPoint>,
    pub primitive_top1: PrimitiveTop1,
    pub solution_space_size: usize,
    pub seen_compositions: Vec<String>,
    pub seen_pairs: Vec<String>,
    pub config_hash: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOutput {
    pub report: MetricsReport,
    pub instances: Vec<InstanceRecord>,
}

/// Branch scores of one sample, ready for ranking.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredSample<'a> {
    pub id: &'a str,
    pub label: &'a MultiAttrLabel,
    pub scores: BranchScores,
}

fn argmax(v: &ndarray::Array1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

struct Scored {
    metrics: InstanceMetrics,
    candidate: SweepCandidate,
    record: Option<InstanceRecord>,
}

/// Ranks (bias 0), scores and sweeps precomputed branch scores. `split`
/// only labels the report.
pub fn evaluate_scores(
    samples: &[ScoredSample<'_>],
    manifest: &DatasetManifest,
    split: Split,
    world: World,
    logit_scale: f64,
    options: EvalOptions,
) -> Result<EvalOutput> {
    if samples.is_empty() {
        return Err(Error::EmptySplit(split));
    }
    let vocab = manifest.vocab();
    let (na, no) = (vocab.num_attributes(), vocab.num_objects());
    let space = build_solution_space(manifest, world);
    let pair_seen = build_pair_seen_set(manifest)?;

    let scored = samples
        .par_iter()
        .map(|s| {
            let truth: BTreeSet<PairComposition> = s.label.expand_pairs().into_iter().collect();
            let combined = combine_scores(&s.scores, na, no, logit_scale)?;
            let ranked = rank_pairs(combined.view(), no, &space, 0.0, &pair_seen)?;
            let mut metrics = instance_metrics(&ranked, &truth, &space)?;
            if options.primitive_top1 == PrimitiveTop1::BranchArgmax {
                if let Some(attr) = &s.scores.attr {
                    metrics.top1_p_attr = indicator(s.label.contains_attribute(AttributeId(argmax(attr))));
                }
                if let Some(obj) = &s.scores.obj {
                    metrics.top1_p_obj = indicator(argmax(obj) == s.label.object().0);
                }
            }
            let seen_partition = manifest.is_seen(s.label);
            let candidate = SweepCandidate::new(combined.view(), no, &space, &pair_seen, &truth, seen_partition);
            let record = options.keep_instances.then(|| InstanceRecord {
                sample_id: s.id.to_owned(),
                seen_partition,
                truth: truth.iter().map(|p| p.display(vocab)).collect(),
                top5: ranked.entries.iter().take(5).map(|e| (e.pair.display(vocab), e.score)).collect(),
                metrics,
            });
            Ok(Scored {
                metrics,
                candidate,
                record,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let all: Vec<InstanceMetrics> = scored.iter().map(|s| s.metrics).collect();
    let part = |seen: bool| -> Result<Option<AggregateMetrics>> {
        let m: Vec<InstanceMetrics> = scored
            .iter()
            .filter(|s| s.candidate.seen_partition == seen)
            .map(|s| s.metrics)
            .collect();
        if m.is_empty() {
            Ok(None)
        } else {
            aggregate_report(&m).map(Some)
        }
    };
    let overall = aggregate_report(&all)?;
    let candidates: Vec<SweepCandidate> = scored.iter().map(|s| s.candidate.clone()).collect();
    let sweep = bias_sweep_auc(&candidates);

    let report = MetricsReport {
        world,
        split,
        samples: overall.count,
        exact_match: overall.exact_match,
        top1_p: overall.top1_p,
        top5_r: overall.top5_r,
        coverage: overall.coverage,
        top1_p_attr: overall.top1_p_attr,
        top1_p_obj: overall.top1_p_obj,
        mean_truth_size: overall.mean_truth_size,
        auc: sweep.auc,
        best_seen: sweep.best_seen,
        best_unseen: sweep.best_unseen,
        best_seen_unseen_rule: "endpoints".into(),
        sweep_degenerate: sweep.degenerate,
        seen_partition: part(true)?,
        unseen_partition: part(false)?,
        sweep_curve: sweep.curve,
        primitive_top1: options.primitive_top1,
        solution_space_size: space.len(),
        seen_compositions: manifest.seen_compositions().iter().map(|l| l.display(vocab)).collect(),
        seen_pairs: pair_seen.pairs.iter().map(|p| p.display(vocab)).collect(),
        config_hash: None,
    };
    Ok(EvalOutput {
        report,
        instances: scored.into_iter().filter_map(|s| s.record).collect(),
    })
}

/// Branch scores for every sample of a split. Text representations are
/// encoded once and shared by all images.
pub fn score_split<'a>(
    model: &CompositionalModel,
    manifest: &'a DatasetManifest,
    split: Split,
) -> Result<Vec<ScoredSample<'a>>> {
    let samples: Vec<&SampleRecord> = manifest.split(split).collect();
    if samples.is_empty() {
        return Err(Error::EmptySplit(split));
    }
    let table = model.text_table()?;
    samples
        .par_iter()
        .map(|s| {
            Ok(ScoredSample {
                id: &s.id,
                label: &s.label,
                scores: model.scores(&table, s)?,
            })
        })
        .collect()
}

/// Encode, integrate, score, rank and measure one split in one world.
pub fn evaluate(
    model: &CompositionalModel,
    manifest: &DatasetManifest,
    split: Split,
    world: World,
    options: EvalOptions,
) -> Result<EvalOutput> {
    let scored = score_split(model, manifest, split)?;
    evaluate_scores(&scored, manifest, split, world, model.logit_scale(), options)
}
