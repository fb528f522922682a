use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::encoder::PrimitiveTextTable;
use crate::error::{Error, Result};

/// End offsets of the `[C; I; t_A; t_O]` segments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SegmentBounds {
    pub cls_end: usize,
    pub patch_end: usize,
    pub attr_end: usize,
    pub obj_end: usize,
}

impl SegmentBounds {
    pub fn new(num_patches: usize, num_attributes: usize, num_objects: usize) -> Self {
        let patch_end = 1 + num_patches;
        let attr_end = patch_end + num_attributes;
        Self {
            cls_end: 1,
            patch_end,
            attr_end,
            obj_end: attr_end + num_objects,
        }
    }

    pub fn len(&self) -> usize {
        self.obj_end
    }

    pub fn is_empty(&self) -> bool {
        self.obj_end == 0
    }

    pub fn as_tuple(&self) -> (usize, usize, usize, usize) {
        (self.cls_end, self.patch_end, self.attr_end, self.obj_end)
    }

    pub fn is_attribute(&self, i: usize) -> bool {
        (self.patch_end..self.attr_end).contains(&i)
    }

    pub fn is_object(&self, i: usize) -> bool {
        (self.attr_end..self.obj_end).contains(&i)
    }

    pub fn is_primitive(&self, i: usize) -> bool {
        (self.patch_end..self.obj_end).contains(&i)
    }
}

/// The fused token block `M = [C; I; T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSequence {
    pub tokens: Array2<f64>,
    pub bounds: SegmentBounds,
}

impl TokenSequence {
    pub fn dim(&self) -> usize {
        self.tokens.ncols()
    }

    pub fn len(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.nrows() == 0
    }

    pub fn cls(&self) -> ArrayView1<'_, f64> {
        self.tokens.row(0)
    }
}

fn assemble(
    cls: ArrayView1<'_, f64>,
    patches: ArrayView2<'_, f64>,
    table: &PrimitiveTextTable,
) -> Result<TokenSequence> {
    let d = cls.len();
    for (what, dim) in [
        ("patches", patches.ncols()),
        ("attribute texts", table.attributes.ncols()),
        ("object texts", table.objects.ncols()),
    ] {
        if dim != d && !(what == "patches" && patches.nrows() == 0) {
            return Err(Error::DimensionMismatch(format!(
                "{what} have dim {dim}, class token has dim {d}"
            )));
        }
    }
    let cls_row = cls.insert_axis(Axis(0));
    let mut parts = vec![cls_row.view()];
    if patches.nrows() > 0 {
        parts.push(patches.view());
    }
    parts.push(table.attributes.view());
    parts.push(table.objects.view());
    let tokens =
        concatenate(Axis(0), &parts).map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    Ok(TokenSequence {
        tokens,
        bounds: SegmentBounds::new(patches.nrows(), table.num_attributes(), table.num_objects()),
    })
}

/// Concatenates `[C; I; t_A; t_O]`. At least one patch is required.
pub fn assemble_tokens(
    cls: ArrayView1<'_, f64>,
    patches: ArrayView2<'_, f64>,
    table: &PrimitiveTextTable,
) -> Result<TokenSequence> {
    if patches.nrows() == 0 {
        return Err(Error::EmptyInput("patch segment is empty".into()));
    }
    assemble(cls, patches, table)
}

/// `[C; t_A; t_O]` for the class-token-only ablation.
pub fn assemble_cls_only(cls: ArrayView1<'_, f64>, table: &PrimitiveTextTable) -> Result<TokenSequence> {
    let empty = Array2::<f64>::zeros((0, cls.len()));
    assemble(cls, empty.view(), table)
}

/// Output of the integrator: the refined class token `C'`, and optionally
/// every refined token for diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinedOutputs {
    pub cls: Array1<f64>,
    pub tokens: Option<Array2<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, s};

    fn table() -> PrimitiveTextTable {
        PrimitiveTextTable {
            attributes: array![[1.0, 0.0], [0.0, 1.0]],
            objects: array![[1.0, 1.0]],
            pairs: None,
        }
    }

    #[test]
    fn layout_and_bounds() {
        let cls = array![0.5, 0.5];
        let patches = array![[1.0, 2.0], [3.0, 4.0]];
        let seq = assemble_tokens(cls.view(), patches.view(), &table()).unwrap();
        assert_eq!(seq.len(), 6);
        assert_eq!(seq.bounds.as_tuple(), (1, 3, 5, 6));
        assert_eq!(seq.tokens.row(0), cls);
        assert_eq!(seq.tokens.slice(s![3..5, ..]), table().attributes);
    }

    #[test]
    fn empty_patches_rejected() {
        let cls = array![0.5, 0.5];
        let patches = Array2::<f64>::zeros((0, 2));
        assert!(assemble_tokens(cls.view(), patches.view(), &table()).is_err());
        let seq = assemble_cls_only(cls.view(), &table()).unwrap();
        assert_eq!(seq.bounds.as_tuple(), (1, 1, 3, 4));
    }

    #[test]
    fn dimension_mismatch() {
        let cls = array![0.5, 0.5, 0.0];
        let patches = array![[1.0, 2.0, 0.0]];
        let err = assemble_tokens(cls.view(), patches.view(), &table()).unwrap_err();
        assert_eq!(err.code(), "E_DIMENSION");
    }

    #[test]
    fn permuting_attributes_touches_only_their_segment() {
        let cls = array![0.5, 0.5];
        let patches = array![[1.0, 2.0]];
        let mut swapped = table();
        swapped.attributes = array![[0.0, 1.0], [1.0, 0.0]];
        let a = assemble_tokens(cls.view(), patches.view(), &table()).unwrap();
        let b = assemble_tokens(cls.view(), patches.view(), &swapped).unwrap();
        assert_eq!(a.tokens.slice(s![..2, ..]), b.tokens.slice(s![..2, ..]));
        assert_eq!(a.tokens.slice(s![4.., ..]), b.tokens.slice(s![4.., ..]));
        assert_eq!(a.tokens.row(2), b.tokens.row(3));
        assert_eq!(a.tokens.row(3), b.tokens.row(2));
    }
}
