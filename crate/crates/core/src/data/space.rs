use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::label::PairComposition;
use super::manifest::{DatasetManifest, Split};
use super::vocab::PrimitiveVocab;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum World {
    Closed,
    Open,
}

impl fmt::Display for World {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            World::Closed => "closed",
            World::Open => "open",
        })
    }
}

impl FromStr for World {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed" => Ok(World::Closed),
            "open" => Ok(World::Open),
            other => Err(Error::InvalidConfig(format!("unknown world `{other}`"))),
        }
    }
}

/// Dense membership set over `A × O`, iterated in attribute-major order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairSet {
    num_objects: usize,
    member: Vec<bool>,
    len: usize,
}

impl PairSet {
    pub fn empty(vocab: &PrimitiveVocab) -> Self {
        Self {
            num_objects: vocab.num_objects(),
            member: vec![false; vocab.num_pairs()],
            len: 0,
        }
    }

    pub fn full(vocab: &PrimitiveVocab) -> Self {
        Self {
            num_objects: vocab.num_objects(),
            member: vec![true; vocab.num_pairs()],
            len: vocab.num_pairs(),
        }
    }

    pub fn insert(&mut self, pair: PairComposition) -> bool {
        let slot = &mut self.member[pair.flat_index(self.num_objects)];
        let fresh = !*slot;
        if fresh {
            *slot = true;
            self.len += 1;
        }
        fresh
    }

    pub fn contains(&self, pair: PairComposition) -> bool {
        pair.object.0 < self.num_objects
            && self
                .member
                .get(pair.flat_index(self.num_objects))
                .copied()
                .unwrap_or(false)
    }

    pub fn contains_flat(&self, index: usize) -> bool {
        self.member[index]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn universe_size(&self) -> usize {
        self.member.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = PairComposition> + '_ {
        self.member
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| PairComposition::from_flat_index(i, self.num_objects))
    }

    pub fn is_subset(&self, other: &PairSet) -> bool {
        self.member.len() == other.member.len()
            && self
                .member
                .iter()
                .zip(&other.member)
                .all(|(&a, &b)| !a || b)
    }
}

/// Candidate pairs for ranking in a given world setting.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolutionSpace {
    pub world: World,
    pub pairs: PairSet,
}

impl SolutionSpace {
    pub fn open(vocab: &PrimitiveVocab) -> Self {
        Self {
            world: World::Open,
            pairs: PairSet::full(vocab),
        }
    }

    pub fn contains(&self, pair: PairComposition) -> bool {
        self.pairs.contains(pair)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Open world is `A × O`. Closed world is every pair expanded from a
/// composition in `C^s ∪ C^u`.
pub fn build_solution_space(manifest: &DatasetManifest, world: World) -> SolutionSpace {
    let vocab = manifest.vocab();
    match world {
        World::Open => SolutionSpace::open(vocab),
        World::Closed => {
            let mut pairs = PairSet::empty(vocab);
            for label in manifest
                .seen_compositions()
                .iter()
                .chain(manifest.unseen_compositions())
            {
                for pair in label.expand_pairs() {
                    pairs.insert(pair);
                }
            }
            SolutionSpace {
                world: World::Closed,
                pairs,
            }
        }
    }
}

/// Pairs occurring in at least one training label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairSeenSet {
    pub pairs: PairSet,
}

impl PairSeenSet {
    pub fn contains(&self, pair: PairComposition) -> bool {
        self.pairs.contains(pair)
    }

    pub fn contains_flat(&self, index: usize) -> bool {
        self.pairs.contains_flat(index)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn build_pair_seen_set(manifest: &DatasetManifest) -> Result<PairSeenSet> {
    let mut pairs = PairSet::empty(manifest.vocab());
    let mut any = false;
    for sample in manifest.split(Split::Train) {
        any = true;
        for pair in sample.label.expand_pairs() {
            pairs.insert(pair);
        }
    }
    if !any {
        return Err(Error::EmptySplit(Split::Train));
    }
    Ok(PairSeenSet { pairs })
}
