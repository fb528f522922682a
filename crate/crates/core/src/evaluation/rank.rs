use std::cmp::Ordering;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data::{PairComposition, PairSeenSet, SolutionSpace};
use crate::error::{Error, Result};
use crate::model::BranchScores;

/// One entry of a ranking.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub pair: PairComposition,
    pub score: f64,
}

/// Pairs of the active solution space in descending score order, ties
/// broken by `(attribute, object)` ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedPrediction {
    pub entries: Vec<ScoredPair>,
}

impl RankedPrediction {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn top(&self) -> Option<PairComposition> {
        self.entries.first().map(|e| e.pair)
    }

    pub fn pairs(&self) -> impl Iterator<Item = PairComposition> + '_ {
        self.entries.iter().map(|e| e.pair)
    }
}

/// The ranking order: higher score first, then lower `(attribute, object)`.
pub fn ranking_order(a: &ScoredPair, b: &ScoredPair) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.pair.cmp(&b.pair))
}

/// `softmax(τ · s)`.
pub fn scaled_softmax(scores: ArrayView1<'_, f64>, logit_scale: f64) -> Array1<f64> {
    let max = scores.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(logit_scale * v));
    let exp = scores.mapv(|v| (logit_scale * v - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// Flat attribute-major table of `P(a|x) + P(o|x) [+ P((a,o)|x)]`. Branches
/// that are absent contribute nothing.
pub fn combine_scores(
    scores: &BranchScores,
    num_attributes: usize,
    num_objects: usize,
    logit_scale: f64,
) -> Result<Array1<f64>> {
    let mut combined = Array1::zeros(num_attributes * num_objects);
    if let Some(s) = &scores.attr {
        check_len(s.len(), num_attributes, "attribute")?;
        let p = scaled_softmax(s.view(), logit_scale);
        for (i, v) in combined.iter_mut().enumerate() {
            *v += p[i / num_objects];
        }
    }
    if let Some(s) = &scores.obj {
        check_len(s.len(), num_objects, "object")?;
        let p = scaled_softmax(s.view(), logit_scale);
        for (i, v) in combined.iter_mut().enumerate() {
            *v += p[i % num_objects];
        }
    }
    if let Some(s) = &scores.pair {
        check_len(s.len(), num_attributes * num_objects, "pair")?;
        combined += &scaled_softmax(s.view(), logit_scale);
    }
    if scores.attr.is_none() && scores.obj.is_none() && scores.pair.is_none() {
        return Err(Error::EmptyInput("no branch scores to combine".into()));
    }
    Ok(combined)
}

fn check_len(got: usize, want: usize, what: &str) -> Result<()> {
    if got != want {
        return Err(Error::DimensionMismatch(format!(
            "{what} scores have length {got}, vocabulary has {want}"
        )));
    }
    Ok(())
}

/// Ranks a flat combined table over the solution space, adding `bias` to
/// every pair outside `pair_seen`.
pub fn rank_pairs(
    combined: ArrayView1<'_, f64>,
    num_objects: usize,
    space: &SolutionSpace,
    bias: f64,
    pair_seen: &PairSeenSet,
) -> Result<RankedPrediction> {
    if space.is_empty() {
        return Err(Error::EmptySolutionSpace);
    }
    let mut entries: Vec<ScoredPair> = space
        .pairs
        .iter()
        .map(|pair| {
            let base = combined[pair.flat_index(num_objects)];
            let score = if bias != 0.0 && !pair_seen.contains(pair) { base + bias } else { base };
            ScoredPair { pair, score }
        })
        .collect();
    entries.sort_by(ranking_order);
    Ok(RankedPrediction { entries })
}

pub fn combine_and_rank(
    scores: &BranchScores,
    num_attributes: usize,
    num_objects: usize,
    space: &SolutionSpace,
    bias: f64,
    pair_seen: &PairSeenSet,
    logit_scale: f64,
) -> Result<RankedPrediction> {
    let combined = combine_scores(scores, num_attributes, num_objects, logit_scale)?;
    rank_pairs(combined.view(), num_objects, space, bias, pair_seen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AttributeId, ObjectId, PairSet, PrimitiveVocab, World};
    use ndarray::array;

    fn vocab() -> PrimitiveVocab {
        PrimitiveVocab::new(["a0", "a1"], ["o0", "o1"]).unwrap()
    }

    fn pair(a: usize, o: usize) -> PairComposition {
        PairComposition::new(AttributeId(a), ObjectId(o))
    }

    fn seen(pairs: &[(usize, usize)]) -> PairSeenSet {
        let mut set = PairSet::empty(&vocab());
        for &(a, o) in pairs {
            set.insert(pair(a, o));
        }
        PairSeenSet { pairs: set }
    }

    #[test]
    fn factorized_sum_ranks_first() {
        let combined = array![0.7 + 0.6, 0.7 + 0.4, 0.3 + 0.6, 0.3 + 0.4];
        let ranked = rank_pairs(combined.view(), 2, &SolutionSpace::open(&vocab()), 0.0, &seen(&[])).unwrap();
        assert_eq!(ranked.top(), Some(pair(0, 0)));
        assert!((ranked.entries[0].score - 1.3).abs() < 1e-12);
        assert_eq!(ranked.len(), 4);
    }

    #[test]
    fn ties_break_by_ids() {
        let combined = array![1.0, 2.0, 2.0, 1.0];
        let ranked = rank_pairs(combined.view(), 2, &SolutionSpace::open(&vocab()), 0.0, &seen(&[])).unwrap();
        let order: Vec<_> = ranked.pairs().collect();
        assert_eq!(order, vec![pair(0, 1), pair(1, 0), pair(0, 0), pair(1, 1)]);
    }

    #[test]
    fn infinite_bias_moves_unseen_first_or_last() {
        let combined = array![0.9, 0.1, 0.2, 0.3];
        let s = seen(&[(0, 0), (1, 1)]);
        let space = SolutionSpace::open(&vocab());
        let up = rank_pairs(combined.view(), 2, &space, f64::INFINITY, &s).unwrap();
        assert!(!s.contains(up.top().unwrap()));
        let down = rank_pairs(combined.view(), 2, &space, f64::NEG_INFINITY, &s).unwrap();
        assert!(s.contains(down.top().unwrap()));
        assert!(!s.contains(down.entries[3].pair));
    }

    #[test]
    fn restricts_to_space() {
        let mut pairs = PairSet::empty(&vocab());
        pairs.insert(pair(1, 1));
        pairs.insert(pair(0, 1));
        let space = SolutionSpace { world: World::Closed, pairs };
        let combined = array![5.0, 1.0, 4.0, 2.0];
        let ranked = rank_pairs(combined.view(), 2, &space, 0.0, &seen(&[])).unwrap();
        assert_eq!(ranked.pairs().collect::<Vec<_>>(), vec![pair(1, 1), pair(0, 1)]);
    }

    #[test]
    fn empty_space_is_an_error() {
        let space = SolutionSpace { world: World::Closed, pairs: PairSet::empty(&vocab()) };
        let err = rank_pairs(array![0.0, 0.0, 0.0, 0.0].view(), 2, &space, 0.0, &seen(&[])).unwrap_err();
        assert!(matches!(err, Error::EmptySolutionSpace));
    }

    #[test]
    fn combine_sums_softmaxes() {
        let scores = BranchScores {
            attr: Some(array![0.0, 0.0]),
            obj: Some(array![(3.0f64).ln(), 0.0]),
            pair: None,
        };
        let c = combine_scores(&scores, 2, 2, 1.0).unwrap();
        let expected = [0.5 + 0.75, 0.5 + 0.25, 0.5 + 0.75, 0.5 + 0.25];
        for (got, want) in c.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12);
        }
    }
}
