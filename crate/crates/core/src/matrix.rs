//! Dense row-major matrices with document ids attached to rows (and columns).

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ngram::KernelKind;

/// Block of pairwise kernel values between two document lists.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    row_ids: Vec<String>,
    col_ids: Vec<String>,
    values: Vec<f64>,
    kind: KernelKind,
    n: usize,
}

impl KernelMatrix {
    pub fn new(
        row_ids: Vec<String>,
        col_ids: Vec<String>,
        values: Vec<f64>,
        kind: KernelKind,
        n: usize,
    ) -> Result<Self> {
        if values.len() != row_ids.len() * col_ids.len() {
            return Err(Error::arg(format!(
                "{} values for a {}x{} kernel matrix",
                values.len(),
                row_ids.len(),
                col_ids.len()
            )));
        }
        Ok(KernelMatrix {
            row_ids,
            col_ids,
            values,
            kind,
            n,
        })
    }

    pub fn rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn cols(&self) -> usize {
        self.col_ids.len()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn col_ids(&self) -> &[String] {
        &self.col_ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    /// n-gram length; 0 for the linear kernel.
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn is_square(&self) -> bool {
        self.row_ids == self.col_ids
    }

    /// Exact (bitwise) symmetry.
    pub fn is_symmetric(&self) -> bool {
        if self.rows() != self.cols() {
            return false;
        }
        let m = self.rows();
        (0..m).all(|i| (0..i).all(|j| self.get(i, j).to_bits() == self.get(j, i).to_bits()))
    }

    pub fn diagonal(&self) -> Option<Vec<f64>> {
        if self.rows() != self.cols() {
            return None;
        }
        Some((0..self.rows()).map(|i| self.get(i, i)).collect())
    }

    pub fn transpose(&self) -> KernelMatrix {
        let (r, c) = (self.rows(), self.cols());
        let mut values = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                values[j * r + i] = self.get(i, j);
            }
        }
        KernelMatrix {
            row_ids: self.col_ids.clone(),
            col_ids: self.row_ids.clone(),
            values,
            kind: self.kind,
            n: self.n,
        }
    }

    pub fn scaled(&self, factor: f64) -> KernelMatrix {
        KernelMatrix {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    pub(crate) fn into_parts(self) -> (Vec<String>, Vec<String>, Vec<f64>, KernelKind, usize) {
        (self.row_ids, self.col_ids, self.values, self.kind, self.n)
    }
}

/// Explicit feature vectors, one row per document.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    row_ids: Vec<String>,
    dim: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(row_ids: Vec<String>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != row_ids.len() * dim {
            return Err(Error::arg(format!(
                "{} values for {} rows of dimension {}",
                values.len(),
                row_ids.len(),
                dim
            )));
        }
        Ok(DenseMatrix {
            row_ids,
            dim,
            values,
        })
    }

    pub fn from_rows(row_ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::arg(format!(
                "ragged rows: dimension {} vs {}",
                dim,
                r.len()
            )));
        }
        let values = rows.into_iter().flatten().collect();
        DenseMatrix::new(row_ids, dim, values)
    }

    pub fn rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Rows for `ids`, in that order.
    pub fn select(&self, ids: &[String]) -> Result<DenseMatrix> {
        let index: HashMap<&str, usize> = self
            .row_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let mut values = Vec::with_capacity(ids.len() * self.dim);
        for id in ids {
            let &i = index
                .get(id.as_str())
                .ok_or_else(|| Error::Validation(format!("no feature row for document {id:?}")))?;
            values.extend_from_slice(self.row(i));
        }
        DenseMatrix::new(ids.to_vec(), self.dim, values)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `A·Bᵀ` as a linear-kernel block.
pub fn linear_kernel(a: &DenseMatrix, b: &DenseMatrix) -> Result<KernelMatrix> {
    if a.dim != b.dim && a.rows() > 0 && b.rows() > 0 {
        return Err(Error::arg(format!(
            "feature dimensions differ ({} vs {})",
            a.dim, b.dim
        )));
    }
    let cols = b.rows();
    let mut values = vec![0.0; a.rows() * cols];
    if cols > 0 {
        values.par_chunks_mut(cols).enumerate().for_each(|(i, out)| {
            let x = a.row(i);
            for (j, slot) in out.iter_mut().enumerate() {
                *slot = dot(x, b.row(j));
            }
        });
    }
    KernelMatrix::new(
        a.row_ids.clone(),
        b.row_ids.clone(),
        values,
        KernelKind::Linear,
        0,
    )
}
