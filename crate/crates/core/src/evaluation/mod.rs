//! Combined-score ranking, instance metrics, the seen/unseen bias sweep
//! and split-level evaluation.

mod evaluate;
mod metrics;
mod rank;
mod sweep;

pub use evaluate::{
    evaluate, evaluate_scores, score_split, EvalOptions, EvalOutput, InstanceRecord, MetricsReport, PrimitiveTop1,
    ScoredSample,
};
pub use metrics::{aggregate_report, instance_metrics, AggregateMetrics, InstanceMetrics};
pub use rank::{
    combine_and_rank, combine_scores, rank_pairs, ranking_order, scaled_softmax, RankedPrediction, ScoredPair,
};
pub use sweep::{bias_sweep_auc, candidate_biases, curve_auc, BiasSweep, SweepCandidate, SweepPoint};
