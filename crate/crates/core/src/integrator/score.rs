use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::encoder::PrimitiveTextTable;
use crate::error::{Error, Result};

fn norm(v: ArrayView1<'_, f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// Cosine similarity between `query` and every row of `rows`.
pub fn cosine_rows(query: ArrayView1<'_, f64>, rows: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    if rows.ncols() != query.len() {
        return Err(Error::DimensionMismatch(format!(
            "query dim {} vs row dim {}",
            query.len(),
            rows.ncols()
        )));
    }
    let qn = norm(query);
    if qn == 0.0 {
        return Err(Error::NumericFailure("zero-norm query in cosine score".into()));
    }
    rows.axis_iter(Axis(0))
        .enumerate()
        .map(|(i, r)| {
            let rn = norm(r);
            if rn == 0.0 {
                Err(Error::NumericFailure(format!("zero-norm text row {i} in cosine score")))
            } else {
                Ok(query.dot(&r) / (qn * rn))
            }
        })
        .collect()
}

/// Backward of [`cosine_rows`]: given `dL/ds`, returns `(dL/dquery, dL/drows)`.
pub fn cosine_rows_backward(
    query: ArrayView1<'_, f64>,
    rows: ArrayView2<'_, f64>,
    scores: ArrayView1<'_, f64>,
    d_scores: ArrayView1<'_, f64>,
) -> (Array1<f64>, Array2<f64>) {
    let qn = norm(query);
    let mut d_query = Array1::zeros(query.len());
    let mut d_rows = Array2::zeros(rows.raw_dim());
    Zip::from(rows.rows())
        .and(d_rows.rows_mut())
        .and(&scores)
        .and(&d_scores)
        .for_each(|r, mut dr, &s, &g| {
            if g == 0.0 {
                return;
            }
            let rn = norm(r);
            let inv = 1.0 / (qn * rn);
            d_query.scaled_add(g * inv, &r);
            d_query.scaled_add(-g * s / (qn * qn), &query);
            dr.scaled_add(g * inv, &query);
            dr.scaled_add(-g * s / (rn * rn), &r);
        });
    (d_query, d_rows)
}

/// Cosine scores of the refined class token against the original
/// (pre-integrator) attribute and object text rows.
pub fn score_primitives(
    refined_cls: ArrayView1<'_, f64>,
    table: &PrimitiveTextTable,
) -> Result<(Array1<f64>, Array1<f64>)> {
    Ok((
        cosine_rows(refined_cls, table.attributes.view())?,
        cosine_rows(refined_cls, table.objects.view())?,
    ))
}
