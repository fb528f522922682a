//! Attribute BCE, object cross-entropy and pair BCE, each with its
//! gradient with respect to the logits. Reductions are mean over the batch
//! and sum over classes.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::data::MultiAttrLabel;
use crate::error::{Error, Result};

/// Per-sample binary attribute targets; every row has a positive.
#[derive(Clone, Debug, PartialEq)]
pub struct AttrTargets {
    targets: Array2<f64>,
}

impl AttrTargets {
    pub fn new(targets: Array2<f64>) -> Result<Self> {
        for (i, row) in targets.axis_iter(Axis(0)).enumerate() {
            if row.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidLabel(format!("row {i} has a non-binary target")));
            }
            if !row.iter().any(|&v| v == 1.0) {
                return Err(Error::InvalidLabel(format!("row {i} has no positive target")));
            }
        }
        Ok(Self { targets })
    }

    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a MultiAttrLabel>, num_attributes: usize) -> Result<Self> {
        let labels: Vec<&MultiAttrLabel> = labels.into_iter().collect();
        let mut targets = Array2::zeros((labels.len(), num_attributes));
        for (mut row, label) in targets.axis_iter_mut(Axis(0)).zip(&labels) {
            for a in label.attributes() {
                if a.0 >= num_attributes {
                    return Err(Error::OutOfRange {
                        kind: "attribute",
                        id: a.0,
                        size: num_attributes,
                    });
                }
                row[a.0] = 1.0;
            }
        }
        Self::new(targets)
    }

    /// Expanded pair targets over the attribute-major `A × O` table.
    pub fn pairs_from_labels<'a>(
        labels: impl IntoIterator<Item = &'a MultiAttrLabel>,
        num_attributes: usize,
        num_objects: usize,
    ) -> Result<Self> {
        let labels: Vec<&MultiAttrLabel> = labels.into_iter().collect();
        let mut targets = Array2::zeros((labels.len(), num_attributes * num_objects));
        for (mut row, label) in targets.axis_iter_mut(Axis(0)).zip(&labels) {
            for pair in label.expand_pairs() {
                row[pair.flat_index(num_objects)] = 1.0;
            }
        }
        Self::new(targets)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.targets.view()
    }
}

fn log_sigmoid(z: f64) -> f64 {
    // log σ(z) = -softplus(-z)
    -((-z).max(0.0) + (-z.abs()).exp().ln_1p())
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Summed binary cross-entropy of one sample and its logit gradient.
pub fn bce_row(logits: ArrayView1<'_, f64>, targets: ArrayView1<'_, f64>) -> (f64, Array1<f64>) {
    let mut loss = 0.0;
    let grad = Array1::from_iter(logits.iter().zip(targets).map(|(&z, &y)| {
        loss -= y * log_sigmoid(z) + (1.0 - y) * log_sigmoid(-z);
        sigmoid(z) - y
    }));
    (loss, grad)
}

/// Cross-entropy of one sample and its logit gradient.
pub fn ce_row(logits: ArrayView1<'_, f64>, target: usize) -> (f64, Array1<f64>) {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exp = logits.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    let loss = sum.ln() + max - logits[target];
    let mut grad = exp / sum;
    grad[target] -= 1.0;
    (loss, grad)
}

fn check_shape(logits: ArrayView2<'_, f64>, rows: usize, cols: usize) -> Result<()> {
    if logits.dim() != (rows, cols) {
        return Err(Error::DimensionMismatch(format!(
            "logits have shape {:?}, targets need ({rows}, {cols})",
            logits.dim()
        )));
    }
    if rows == 0 {
        return Err(Error::EmptyInput("empty batch".into()));
    }
    Ok(())
}

fn bce_batch(logits: ArrayView2<'_, f64>, targets: &AttrTargets) -> Result<(f64, Array2<f64>)> {
    let t = targets.view();
    check_shape(logits, t.nrows(), t.ncols())?;
    let b = logits.nrows() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    for ((z, y), mut g) in logits
        .axis_iter(Axis(0))
        .zip(t.axis_iter(Axis(0)))
        .zip(grad.axis_iter_mut(Axis(0)))
    {
        let (l, dz) = bce_row(z, y);
        total += l;
        g.assign(&(dz / b));
    }
    Ok((total / b, grad))
}

/// Attribute-branch BCE over `batch × |A|` logits.
pub fn attr_bce_loss(logits: ArrayView2<'_, f64>, targets: &AttrTargets) -> Result<f64> {
    bce_batch(logits, targets).map(|(l, _)| l)
}

pub fn attr_bce_loss_with_grad(logits: ArrayView2<'_, f64>, targets: &AttrTargets) -> Result<(f64, Array2<f64>)> {
    bce_batch(logits, targets)
}

/// Composition-branch BCE over `batch × |A||O|` logits.
pub fn pair_bce_loss(logits: ArrayView2<'_, f64>, targets: &AttrTargets) -> Result<f64> {
    bce_batch(logits, targets).map(|(l, _)| l)
}

pub fn pair_bce_loss_with_grad(logits: ArrayView2<'_, f64>, targets: &AttrTargets) -> Result<(f64, Array2<f64>)> {
    bce_batch(logits, targets)
}

pub fn obj_ce_loss_with_grad(logits: ArrayView2<'_, f64>, targets: &[usize]) -> Result<(f64, Array2<f64>)> {
    check_shape(logits, targets.len(), logits.ncols())?;
    let b = logits.nrows() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    for ((z, &y), mut g) in logits.axis_iter(Axis(0)).zip(targets).zip(grad.axis_iter_mut(Axis(0))) {
        if y >= z.len() {
            return Err(Error::OutOfRange {
                kind: "object",
                id: y,
                size: z.len(),
            });
        }
        let (l, dz) = ce_row(z, y);
        total += l;
        g.assign(&(dz / b));
    }
    Ok((total / b, grad))
}

/// Object-branch cross-entropy over `batch × |O|` logits.
pub fn obj_ce_loss(logits: ArrayView2<'_, f64>, targets: &[usize]) -> Result<f64> {
    obj_ce_loss_with_grad(logits, targets).map(|(l, _)| l)
}

/// `L = L_a + L_o`.
pub fn total_loss(attr_loss: f64, obj_loss: f64) -> Result<f64> {
    if !attr_loss.is_finite() || !obj_loss.is_finite() {
        return Err(Error::NumericFailure(format!(
            "non-finite branch loss (attr {attr_loss}, obj {obj_loss})"
        )));
    }
    Ok(attr_loss + obj_loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::f64::consts::LN_2;

    #[test]
    fn bce_at_zero_is_ln2() {
        let t = AttrTargets::new(array![[1.0]]).unwrap();
        let l = attr_bce_loss(array![[0.0]].view(), &t).unwrap();
        assert!((l - LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_saturates() {
        let t = AttrTargets::new(array![[1.0, 0.0]]).unwrap();
        let l = attr_bce_loss(array![[800.0, -800.0]].view(), &t).unwrap();
        assert!(l < 1e-300);
        assert!(l >= 0.0);
    }

    #[test]
    fn bce_batch_mean() {
        let one = AttrTargets::new(array![[1.0, 0.0, 1.0]]).unwrap();
        let two = AttrTargets::new(array![[1.0, 0.0, 1.0], [1.0, 0.0, 1.0]]).unwrap();
        let z1 = array![[0.3, -1.0, 2.0]];
        let z2 = array![[0.3, -1.0, 2.0], [0.3, -1.0, 2.0]];
        let a = attr_bce_loss(z1.view(), &one).unwrap();
        let b = attr_bce_loss(z2.view(), &two).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn ce_uniform_is_ln_classes() {
        let l = obj_ce_loss(array![[0.7, 0.7, 0.7, 0.7]].view(), &[2]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
        let margin = obj_ce_loss(array![[3.0, 0.0, 0.0, 0.0]].view(), &[0]).unwrap();
        assert!(margin < 4f64.ln());
        let shifted = obj_ce_loss(array![[13.0, 10.0, 10.0, 10.0]].view(), &[0]).unwrap();
        assert!((margin - shifted).abs() < 1e-12);
        assert!(obj_ce_loss(array![[0.0, 0.0]].view(), &[2]).is_err());
    }

    #[test]
    fn pair_bce_hand_computed() {
        // 4 pairs, 2 positive, all logits zero: each term contributes ln 2.
        let t = AttrTargets::new(array![[1.0, 0.0, 1.0, 0.0]]).unwrap();
        let l = pair_bce_loss(array![[0.0, 0.0, 0.0, 0.0]].view(), &t).unwrap();
        assert!((l - 4.0 * LN_2).abs() < 1e-12);
        assert!(AttrTargets::new(array![[0.0, 0.0, 0.0, 0.0]]).is_err());
        let perfect = pair_bce_loss(array![[900.0, -900.0, 900.0, -900.0]].view(), &t).unwrap();
        assert!(perfect < 1e-300);
    }

    #[test]
    fn shape_mismatch() {
        let t = AttrTargets::new(array![[1.0, 0.0]]).unwrap();
        assert_eq!(attr_bce_loss(array![[0.0, 0.0, 0.0]].view(), &t).unwrap_err().code(), "E_DIMENSION");
    }

    #[test]
    fn total_is_sum() {
        assert_eq!(total_loss(0.5, 1.0).unwrap(), 1.5);
        assert_eq!(total_loss(0.0, 0.0).unwrap(), 0.0);
        assert!(total_loss(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let z = array![[0.3, -1.2, 2.0], [1.1, 0.0, -0.4]];
        let t = AttrTargets::new(array![[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]]).unwrap();
        let (_, g) = attr_bce_loss_with_grad(z.view(), &t).unwrap();
        let (_, gc) = obj_ce_loss_with_grad(z.view(), &[2, 0]).unwrap();
        let eps = 1e-6;
        for i in 0..2 {
            for j in 0..3 {
                let mut p = z.clone();
                p[[i, j]] += eps;
                let mut m = z.clone();
                m[[i, j]] -= eps;
                let nb = (attr_bce_loss(p.view(), &t).unwrap() - attr_bce_loss(m.view(), &t).unwrap()) / (2.0 * eps);
                let nc = (obj_ce_loss(p.view(), &[2, 0]).unwrap() - obj_ce_loss(m.view(), &[2, 0]).unwrap()) / (2.0 * eps);
                assert!((nb - g[[i, j]]).abs() < 1e-8);
                assert!((nc - gc[[i, j]]).abs() < 1e-8);
            }
        }
    }
}
