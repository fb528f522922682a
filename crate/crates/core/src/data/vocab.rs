use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of an attribute in a [`PrimitiveVocab`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeId(pub usize);

/// Index of an object in a [`PrimitiveVocab`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub usize);

impl fmt::Display for AttributeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "o{}", self.0)
    }
}

/// Lowercase and collapse runs of whitespace into single spaces.
pub fn canonical_name(name: &str) -> String {
    name.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// The attribute and object sets. Position in each list is the primitive id.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "VocabRepr", into = "VocabRepr")]
pub struct PrimitiveVocab {
    attributes: Vec<String>,
    objects: Vec<String>,
    attribute_index: HashMap<String, usize>,
    object_index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    attributes: Vec<String>,
    objects: Vec<String>,
}

impl TryFrom<VocabRepr> for PrimitiveVocab {
    type Error = Error;

    fn try_from(repr: VocabRepr) -> Result<Self> {
        PrimitiveVocab::new(repr.attributes, repr.objects)
    }
}

impl From<PrimitiveVocab> for VocabRepr {
    fn from(vocab: PrimitiveVocab) -> Self {
        VocabRepr {
            attributes: vocab.attributes,
            objects: vocab.objects,
        }
    }
}

impl PartialEq for PrimitiveVocab {
    fn eq(&self, other: &Self) -> bool {
        self.attributes == other.attributes && self.objects == other.objects
    }
}

impl Eq for PrimitiveVocab {}

fn index_names(kind: &str, names: &[String]) -> Result<HashMap<String, usize>> {
    if names.is_empty() {
        return Err(Error::InvalidVocab(format!("{kind} list is empty")));
    }
    let mut index = HashMap::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        if name.is_empty() {
            return Err(Error::InvalidVocab(format!("empty {kind} name at index {i}")));
        }
        if index.insert(name.clone(), i).is_some() {
            return Err(Error::InvalidVocab(format!("duplicate {kind} `{name}`")));
        }
    }
    Ok(index)
}

impl PrimitiveVocab {
    /// Builds a vocabulary from raw names. Names are canonicalized first;
    /// two names that canonicalize to the same string are duplicates.
    pub fn new<A, O>(attributes: A, objects: O) -> Result<Self>
    where
        A: IntoIterator,
        A::Item: AsRef<str>,
        O: IntoIterator,
        O::Item: AsRef<str>,
    {
        let attributes: Vec<String> = attributes
            .into_iter()
            .map(|n| canonical_name(n.as_ref()))
            .collect();
        let objects: Vec<String> = objects
            .into_iter()
            .map(|n| canonical_name(n.as_ref()))
            .collect();
        let attribute_index = index_names("attribute", &attributes)?;
        let object_index = index_names("object", &objects)?;
        Ok(Self {
            attributes,
            objects,
            attribute_index,
            object_index,
        })
    }

    pub fn num_attributes(&self) -> usize {
        self.attributes.len()
    }

    pub fn num_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn objects(&self) -> &[String] {
        &self.objects
    }

    pub fn attribute_name(&self, id: AttributeId) -> &str {
        &self.attributes[id.0]
    }

    pub fn object_name(&self, id: ObjectId) -> &str {
        &self.objects[id.0]
    }

    pub fn attribute_id(&self, name: &str) -> Option<AttributeId> {
        self.attribute_index
            .get(&canonical_name(name))
            .copied()
            .map(AttributeId)
    }

    pub fn object_id(&self, name: &str) -> Option<ObjectId> {
        self.object_index
            .get(&canonical_name(name))
            .copied()
            .map(ObjectId)
    }

    pub fn check_attribute(&self, id: AttributeId) -> Result<()> {
        if id.0 < self.attributes.len() {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                kind: "attribute",
                id: id.0,
                size: self.attributes.len(),
            })
        }
    }

    pub fn check_object(&self, id: ObjectId) -> Result<()> {
        if id.0 < self.objects.len() {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                kind: "object",
                id: id.0,
                size: self.objects.len(),
            })
        }
    }

    pub fn attribute_ids(&self) -> impl Iterator<Item = AttributeId> + '_ {
        (0..self.attributes.len()).map(AttributeId)
    }

    pub fn object_ids(&self) -> impl Iterator<Item = ObjectId> + '_ {
        (0..self.objects.len()).map(ObjectId)
    }

    /// Number of pairs in `A × O`.
    pub fn num_pairs(&self) -> usize {
        self.attributes.len() * self.objects.len()
    }
}
