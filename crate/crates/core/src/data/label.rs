use std::fmt;

use serde::{Deserialize, Serialize};

use super::vocab::{AttributeId, ObjectId, PrimitiveVocab};
use crate::error::{Error, Result};

/// A single attribute-object pair `⟨a, o⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairComposition {
    pub attribute: AttributeId,
    pub object: ObjectId,
}

impl PairComposition {
    pub fn new(attribute: AttributeId, object: ObjectId) -> Self {
        Self { attribute, object }
    }

    /// Attribute-major flat index into `A × O`.
    pub fn flat_index(&self, num_objects: usize) -> usize {
        self.attribute.0 * num_objects + self.object.0
    }

    pub fn from_flat_index(index: usize, num_objects: usize) -> Self {
        Self {
            attribute: AttributeId(index / num_objects),
            object: ObjectId(index % num_objects),
        }
    }

    pub fn display(&self, vocab: &PrimitiveVocab) -> String {
        format!(
            "({}, {})",
            vocab.attribute_name(self.attribute),
            vocab.object_name(self.object)
        )
    }
}

impl fmt::Display for PairComposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.attribute, self.object)
    }
}

/// A multi-attribute composition `⟨S, o⟩`. The attribute set is kept sorted
/// and deduplicated, so two labels with the same set compare equal.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiAttrLabel {
    attributes: Vec<AttributeId>,
    object: ObjectId,
}

impl MultiAttrLabel {
    pub fn new(attributes: impl IntoIterator<Item = AttributeId>, object: ObjectId) -> Result<Self> {
        let mut attributes: Vec<AttributeId> = attributes.into_iter().collect();
        attributes.sort_unstable();
        attributes.dedup();
        if attributes.is_empty() {
            return Err(Error::InvalidLabel("attribute set is empty".into()));
        }
        Ok(Self { attributes, object })
    }

    pub fn validate(&self, vocab: &PrimitiveVocab) -> Result<()> {
        vocab.check_object(self.object)?;
        self.attributes
            .iter()
            .try_for_each(|&a| vocab.check_attribute(a))
    }

    pub fn attributes(&self) -> &[AttributeId] {
        &self.attributes
    }

    pub fn object(&self) -> ObjectId {
        self.object
    }

    pub fn contains_attribute(&self, attribute: AttributeId) -> bool {
        self.attributes.binary_search(&attribute).is_ok()
    }

    /// `{⟨a, o⟩ : a ∈ S}`, in ascending attribute order.
    pub fn expand_pairs(&self) -> Vec<PairComposition> {
        self.attributes
            .iter()
            .map(|&a| PairComposition::new(a, self.object))
            .collect()
    }

    pub fn display(&self, vocab: &PrimitiveVocab) -> String {
        let names: Vec<&str> = self.attributes.iter().map(|&a| vocab.attribute_name(a)).collect();
        format!("({{{}}}, {})", names.join(", "), vocab.object_name(self.object))
    }
}

/// Free-function form of [`MultiAttrLabel::expand_pairs`].
pub fn expand_pairs(label: &MultiAttrLabel) -> Vec<PairComposition> {
    label.expand_pairs()
}
