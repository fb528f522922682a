use ndarray::Array2;

use super::config::MaskFlags;
use super::tokens::SegmentBounds;

/// `allowed[[q, k]]` is true when query `q` may attend to key `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttentionMask {
    pub allowed: Array2<bool>,
}

impl AttentionMask {
    pub fn masked_count(&self) -> usize {
        self.allowed.iter().filter(|&&a| !a).count()
    }

    pub fn is_allowed(&self, query: usize, key: usize) -> bool {
        self.allowed[[query, key]]
    }
}

/// Applies the interaction flags symmetrically. Only edges between two
/// primitive text tokens are ever removed, and a token always keeps its own
/// diagonal entry, so every row has at least one allowed key.
pub fn build_attention_mask(flags: &MaskFlags, bounds: &SegmentBounds) -> AttentionMask {
    let n = bounds.len();
    let allowed = Array2::from_shape_fn((n, n), |(q, k)| {
        if q == k || !bounds.is_primitive(q) || !bounds.is_primitive(k) {
            return true;
        }
        if !flags.all_primitives {
            return false;
        }
        let cross = (bounds.is_attribute(q) && bounds.is_object(k))
            || (bounds.is_object(q) && bounds.is_attribute(k));
        if cross && !flags.attr_obj {
            return false;
        }
        if bounds.is_attribute(q) && bounds.is_attribute(k) && !flags.attr_attr {
            return false;
        }
        true
    });
    AttentionMask { allowed }
}
