use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::rank::RankedPrediction;
use crate::data::{PairComposition, SolutionSpace};
use crate::error::{Error, Result};

/// The six per-instance metrics. Indicators are stored as 0.0 or 1.0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetrics {
    pub exact_match: f64,
    pub top1_p: f64,
    pub top5_r: f64,
    pub coverage: usize,
    pub top1_p_attr: f64,
    pub top1_p_obj: f64,
    pub truth_size: usize,
}

pub(crate) fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Scores one ranking against its true pairs. Every true pair must be in
/// the solution space the ranking was built over.
pub fn instance_metrics(
    ranked: &RankedPrediction,
    truth: &BTreeSet<PairComposition>,
    space: &SolutionSpace,
) -> Result<InstanceMetrics> {
    if truth.is_empty() {
        return Err(Error::InvalidLabel("empty truth set".into()));
    }
    if let Some(p) = truth.iter().find(|p| !space.contains(**p)) {
        return Err(Error::TruthOutsideSpace(format!(
            "true pair {p} is not in the {} solution space",
            space.world
        )));
    }
    let top = ranked.top().ok_or(Error::EmptySolutionSpace)?;
    let n = truth.len();
    let mut coverage = 0;
    let mut found = 0;
    let mut in_top5 = 0;
    for (rank, pair) in ranked.pairs().enumerate() {
        if truth.contains(&pair) {
            found += 1;
            if rank < 5 {
                in_top5 += 1;
            }
            if found == n {
                coverage = rank + 1;
                break;
            }
        }
    }
    if found < n {
        return Err(Error::TruthOutsideSpace("ranking is missing true pairs".into()));
    }
    Ok(InstanceMetrics {
        exact_match: indicator(coverage == n),
        top1_p: indicator(truth.contains(&top)),
        top5_r: in_top5 as f64 / n as f64,
        coverage,
        top1_p_attr: indicator(truth.iter().any(|p| p.attribute == top.attribute)),
        top1_p_obj: indicator(truth.iter().any(|p| p.object == top.object)),
        truth_size: n,
    })
}

/// Means of the per-instance metrics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub count: usize,
    pub exact_match: f64,
    pub top1_p: f64,
    pub top5_r: f64,
    pub coverage: f64,
    pub top1_p_attr: f64,
    pub top1_p_obj: f64,
    pub mean_truth_size: f64,
}

/// Order-independent mean: values are summed in sorted order.
fn mean(mut values: Vec<f64>) -> f64 {
    let n = values.len() as f64;
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / n
}

pub fn aggregate_report(records: &[InstanceMetrics]) -> Result<AggregateMetrics> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no instance records to aggregate".into()));
    }
    let field = |f: fn(&InstanceMetrics) -> f64| mean(records.iter().map(f).collect());
    Ok(AggregateMetrics {
        count: records.len(),
        exact_match: field(|r| r.exact_match),
        top1_p: field(|r| r.top1_p),
        top5_r: field(|r| r.top5_r),
        coverage: field(|r| r.coverage as f64),
        top1_p_attr: field(|r| r.top1_p_attr),
        top1_p_obj: field(|r| r.top1_p_obj),
        mean_truth_size: field(|r| r.truth_size as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AttributeId, ObjectId, PrimitiveVocab};
    use crate::evaluation::rank::ScoredPair;

    // attributes: red, ripe; objects: apple, car
    fn vocab() -> PrimitiveVocab {
        PrimitiveVocab::new(["red", "ripe"], ["apple", "car"]).unwrap()
    }

    fn pair(a: usize, o: usize) -> PairComposition {
        PairComposition::new(AttributeId(a), ObjectId(o))
    }

    fn ranking(pairs: &[PairComposition]) -> RankedPrediction {
        RankedPrediction {
            entries: pairs
                .iter()
                .enumerate()
                .map(|(i, &pair)| ScoredPair { pair, score: -(i as f64) })
                .collect(),
        }
    }

    #[test]
    fn perfect_ranking() {
        let truth = BTreeSet::from([pair(0, 0), pair(1, 0)]);
        let ranked = ranking(&[pair(0, 0), pair(1, 0), pair(0, 1)]);
        let m = instance_metrics(&ranked, &truth, &SolutionSpace::open(&vocab())).unwrap();
        assert_eq!(
            m,
            InstanceMetrics {
                exact_match: 1.0,
                top1_p: 1.0,
                top5_r: 1.0,
                coverage: 2,
                top1_p_attr: 1.0,
                top1_p_obj: 1.0,
                truth_size: 2,
            }
        );
    }

    #[test]
    fn false_pair_on_top() {
        let truth = BTreeSet::from([pair(0, 0), pair(1, 0)]);
        let ranked = ranking(&[pair(0, 1), pair(0, 0), pair(1, 0)]);
        let m = instance_metrics(&ranked, &truth, &SolutionSpace::open(&vocab())).unwrap();
        assert_eq!(m.exact_match, 0.0);
        assert_eq!(m.top1_p, 0.0);
        assert_eq!(m.coverage, 3);
        assert_eq!(m.top5_r, 1.0);
        assert_eq!(m.top1_p_attr, 1.0);
        assert_eq!(m.top1_p_obj, 0.0);
    }

    #[test]
    fn truth_outside_space_is_an_error() {
        let mut pairs = crate::data::PairSet::empty(&vocab());
        pairs.insert(pair(0, 0));
        let space = SolutionSpace { world: crate::data::World::Closed, pairs };
        let truth = BTreeSet::from([pair(1, 1)]);
        let err = instance_metrics(&ranking(&[pair(0, 0)]), &truth, &space).unwrap_err();
        assert!(matches!(err, Error::TruthOutsideSpace(_)));
    }

    #[test]
    fn aggregate_is_a_mean() {
        let base = InstanceMetrics {
            exact_match: 1.0,
            top1_p: 1.0,
            top5_r: 0.5,
            coverage: 2,
            top1_p_attr: 1.0,
            top1_p_obj: 1.0,
            truth_size: 2,
        };
        let other = InstanceMetrics { exact_match: 0.0, coverage: 4, ..base };
        let agg = aggregate_report(&[base, other]).unwrap();
        assert_eq!(agg.exact_match, 0.5);
        assert_eq!(agg.coverage, 3.0);
        assert_eq!(agg, aggregate_report(&[other, base]).unwrap());
        assert!(aggregate_report(&[]).is_err());
    }
}
