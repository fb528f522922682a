use std::collections::BTreeSet;

use ndarray::ArrayView1;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::rank::{ranking_order, ScoredPair};
use crate::data::{PairComposition, PairSeenSet, SolutionSpace};

/// What the sweep needs from one sample: its best-scoring seen and unseen
/// pairs within the solution space, and whether each is a true pair.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepCandidate {
    pub seen_partition: bool,
    pub best_seen: Option<(ScoredPair, bool)>,
    pub best_unseen: Option<(ScoredPair, bool)>,
}

impl SweepCandidate {
    pub fn new(
        combined: ArrayView1<'_, f64>,
        num_objects: usize,
        space: &SolutionSpace,
        pair_seen: &PairSeenSet,
        truth: &BTreeSet<PairComposition>,
        seen_partition: bool,
    ) -> Self {
        let mut best_seen: Option<ScoredPair> = None;
        let mut best_unseen: Option<ScoredPair> = None;
        for pair in space.pairs.iter() {
            let cand = ScoredPair {
                pair,
                score: combined[pair.flat_index(num_objects)],
            };
            let slot = if pair_seen.contains(pair) { &mut best_seen } else { &mut best_unseen };
            if slot.is_none_or(|b| ranking_order(&cand, &b).is_lt()) {
                *slot = Some(cand);
            }
        }
        let tag = |p: Option<ScoredPair>| p.map(|p| (p, truth.contains(&p.pair)));
        Self {
            seen_partition,
            best_seen: tag(best_seen),
            best_unseen: tag(best_unseen),
        }
    }

    /// `best_seen − best_unseen` when both exist.
    pub fn gap(&self) -> Option<f64> {
        match (&self.best_seen, &self.best_unseen) {
            (Some((s, _)), Some((u, _))) => Some(s.score - u.score),
            _ => None,
        }
    }

    /// Whether the rank-1 pair is correct after adding `bias` to unseen pairs.
    pub fn correct_at(&self, bias: f64) -> bool {
        match (&self.best_seen, &self.best_unseen) {
            (Some((s, s_ok)), Some((u, u_ok))) => {
                let shifted = ScoredPair {
                    pair: u.pair,
                    score: u.score + bias,
                };
                if ranking_order(&shifted, s).is_lt() {
                    *u_ok
                } else {
                    *s_ok
                }
            }
            (Some((_, ok)), None) | (None, Some((_, ok))) => *ok,
            (None, None) => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    #[serde(serialize_with = "ser_bias", deserialize_with = "de_bias")]
    pub bias: f64,
    pub seen_acc: f64,
    pub unseen_acc: f64,
}

/// Infinite biases are written as the strings `"-inf"` and `"inf"`.
fn ser_bias<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
    } else {
        s.serialize_f64(*v)
    }
}

fn de_bias<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }
    match Repr::deserialize(d)? {
        Repr::Num(v) => Ok(v),
        Repr::Text(t) => match t.as_str() {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            other => Err(serde::de::Error::custom(format!("invalid bias `{other}`"))),
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasSweep {
    /// Sorted by bias, from `-inf` to `inf`.
    pub curve: Vec<SweepPoint>,
    pub auc: f64,
    /// Seen-partition Top1-P at bias `-inf`.
    pub best_seen: f64,
    /// Unseen-partition Top1-P at bias `inf`.
    pub best_unseen: f64,
    /// Set when one partition is empty; `auc` is then 0.
    pub degenerate: bool,
    pub seen_count: usize,
    pub unseen_count: usize,
}

/// Biases at which every distinct outcome of the sweep is observed: the
/// two infinite endpoints and the midpoints between consecutive gaps.
pub fn candidate_biases(candidates: &[SweepCandidate]) -> Vec<f64> {
    let mut gaps: Vec<f64> = candidates.iter().filter_map(SweepCandidate::gap).collect();
    gaps.sort_by(f64::total_cmp);
    gaps.dedup();
    let mut biases = Vec::with_capacity(gaps.len() + 1);
    biases.push(f64::NEG_INFINITY);
    biases.extend(gaps.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    biases.push(f64::INFINITY);
    biases
}

/// Trapezoidal area under `(unseen_acc, seen_acc)`, sorted by unseen
/// accuracy and held flat back to `unseen_acc = 0`.
pub fn curve_auc(curve: &[SweepPoint]) -> f64 {
    let mut pts: Vec<(f64, f64)> = curve.iter().map(|p| (p.unseen_acc, p.seen_acc)).collect();
    if pts.is_empty() {
        return 0.0;
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let mut area = pts[0].0 * pts[0].1;
    for w in pts.windows(2) {
        area += (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1);
    }
    area
}

pub fn bias_sweep_auc(candidates: &[SweepCandidate]) -> BiasSweep {
    let seen: Vec<&SweepCandidate> = candidates.iter().filter(|c| c.seen_partition).collect();
    let unseen: Vec<&SweepCandidate> = candidates.iter().filter(|c| !c.seen_partition).collect();
    let acc = |part: &[&SweepCandidate], bias: f64| {
        if part.is_empty() {
            0.0
        } else {
            part.iter().filter(|c| c.correct_at(bias)).count() as f64 / part.len() as f64
        }
    };
    let curve: Vec<SweepPoint> = candidate_biases(candidates)
        .into_iter()
        .map(|bias| SweepPoint {
            bias,
            seen_acc: acc(&seen, bias),
            unseen_acc: acc(&unseen, bias),
        })
        .collect();
    let degenerate = seen.is_empty() || unseen.is_empty();
    BiasSweep {
        auc: if degenerate { 0.0 } else { curve_auc(&curve) },
        best_seen: acc(&seen, f64::NEG_INFINITY),
        best_unseen: acc(&unseen, f64::INFINITY),
        curve,
        degenerate,
        seen_count: seen.len(),
        unseen_count: unseen.len(),
    }
}
