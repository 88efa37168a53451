//! Row-sparse linear maps between face feature matrices.
//!
//! Pooling and unpooling only ever average feature rows, so their effect on
//! features is a sparse linear map. Keeping it explicit gives the backward
//! pass for free: it is the transpose.

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::{Error, Result};

pub type SparseRow = Vec<(u32, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMap {
    rows: Vec<SparseRow>,
    cols: usize,
}

impl SparseMap {
    pub fn identity(n: usize) -> Self {
        SparseMap {
            rows: (0..n as u32).map(|i| vec![(i, 1.0)]).collect(),
            cols: n,
        }
    }

    /// Rows must hold ascending, in-range column ids.
    pub fn from_rows(rows: Vec<SparseRow>, cols: usize) -> Self {
        debug_assert!(rows
            .iter()
            .all(|r| r.windows(2).all(|w| w[0].0 < w[1].0) && r.iter().all(|e| (e.0 as usize) < cols)));
        SparseMap { rows, cols }
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    /// `self * x`
    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.cols {
            return Err(Error::shape(format!(
                "sparse map expects {} rows, got {}",
                self.cols,
                x.nrows()
            )));
        }
        let c = x.ncols();
        let mut out = Array2::zeros((self.rows.len(), c));
        for (r, row) in self.rows.iter().enumerate() {
            let mut o = out.row_mut(r);
            for &(j, w) in row {
                o.scaled_add(w, &x.row(j as usize));
            }
        }
        Ok(out)
    }

    /// `self^T * g`
    pub fn apply_transpose(&self, g: &Array2<f64>) -> Result<Array2<f64>> {
        if g.nrows() != self.rows.len() {
            return Err(Error::shape(format!(
                "sparse map transpose expects {} rows, got {}",
                self.rows.len(),
                g.nrows()
            )));
        }
        let mut out = Array2::zeros((self.cols, g.ncols()));
        for (r, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                out.row_mut(j as usize).scaled_add(w, &g.row(r));
            }
        }
        Ok(out)
    }
}

/// Uniform average of several sparse rows.
pub fn mean_of_rows<'a>(rows: impl IntoIterator<Item = &'a SparseRow>) -> SparseRow {
    let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
    let mut n = 0usize;
    for row in rows {
        n += 1;
        for &(j, w) in row {
            *acc.entry(j).or_insert(0.0) += w;
        }
    }
    if n == 0 {
        return Vec::new();
    }
    let inv = 1.0 / n as f64;
    acc.into_iter().map(|(j, w)| (j, w * inv)).collect()
}
