//! Flat views over trainable tensors.

use ndarray::{ArrayBase, DataMut, Dimension};

/// Visits every trainable tensor as a contiguous slice, in a fixed order.
pub trait Params {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64]));

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, s| n += s.len());
        n
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit("", &mut |_, s| out.extend_from_slice(s));
        out
    }

    /// Overwrites every tensor from a flat vector produced by [`Params::to_flat`].
    fn load_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        self.visit_mut("", &mut |_, s| {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        });
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    /// `(name, length)` for every tensor, in visiting order.
    fn layout(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, s| out.push((name.to_owned(), s.len())));
        out
    }

    fn fill(&mut self, value: f64) {
        self.visit_mut("", &mut |_, s| s.fill(value));
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_owned()
    } else {
        format!("{prefix}.{name}")
    }
}

pub(crate) fn slice<S, D>(a: &ArrayBase<S, D>) -> &[f64]
where
    S: ndarray::Data<Elem = f64>,
    D: Dimension,
{
    a.as_slice().expect("parameter tensors are contiguous")
}

pub(crate) fn slice_mut<S, D>(a: &mut ArrayBase<S, D>) -> &mut [f64]
where
    S: DataMut<Elem = f64>,
    D: Dimension,
{
    a.as_slice_mut().expect("parameter tensors are contiguous")
}

/// Adds `scale * src` into `dst`, tensor by tensor.
pub fn add_scaled<P: Params>(dst: &mut P, src: &P, scale: f64) {
    let flat = src.to_flat();
    let mut offset = 0;
    dst.visit_mut("", &mut |_, s| {
        for (d, v) in s.iter_mut().zip(&flat[offset..]) {
            *d += scale * v;
        }
        offset += s.len();
    });
}
