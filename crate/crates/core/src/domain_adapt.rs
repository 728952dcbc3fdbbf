//! Unsupervised domain adaptation by similarity features.
//!
//! Every source vector `x` is extended with its dot products to the `r`
//! unlabeled target vectors `z_1..z_r`, giving `[x ‖ ⟨x,z_1⟩ … ⟨x,z_r⟩]`.
//! For string kernels the feature space is implicit, so the similarities are
//! base-kernel values `K(x, z_l)` and the augmented Gram matrix is
//! `K' = K + S_a S_bᵀ`, which is exactly the Gram matrix of the augmented
//! vectors.
//!
//! Nothing here accepts target labels.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{dot, linear_kernel, DenseMatrix, KernelMatrix};

/// Similarities between source documents (rows) and target documents (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityBlock {
    pub source_ids: Vec<String>,
    pub target_ids: Vec<String>,
    values: Vec<f64>,
}

impl SimilarityBlock {
    pub fn new(source_ids: Vec<String>, target_ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() != source_ids.len() * target_ids.len() {
            return Err(Error::arg(format!(
                "{} values for a {}x{} similarity block",
                values.len(),
                source_ids.len(),
                target_ids.len()
            )));
        }
        Ok(SimilarityBlock {
            source_ids,
            target_ids,
            values,
        })
    }

    /// Uses a kernel block (rows = source docs, cols = target docs) as similarities.
    pub fn from_kernel(k: KernelMatrix) -> Self {
        let (source_ids, target_ids, values, _, _) = k.into_parts();
        SimilarityBlock {
            source_ids,
            target_ids,
            values,
        }
    }

    pub fn sources(&self) -> usize {
        self.source_ids.len()
    }

    pub fn targets(&self) -> usize {
        self.target_ids.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let r = self.targets();
        &self.values[i * r..(i + 1) * r]
    }
}

/// `X · Zᵀ`.
pub fn similarity_block(x: &DenseMatrix, z: &DenseMatrix) -> Result<SimilarityBlock> {
    if x.dim() != z.dim() && x.rows() > 0 && z.rows() > 0 {
        return Err(Error::arg(format!(
            "source dimension {} differs from target dimension {}",
            x.dim(),
            z.dim()
        )));
    }
    Ok(SimilarityBlock::from_kernel(linear_kernel(x, z)?))
}

pub fn augment_features(x: &DenseMatrix, sim: &SimilarityBlock) -> Result<DenseMatrix> {
    augment_features_scaled(x, sim, 1.0)
}

/// Like [`augment_features`] with the appended block multiplied by `scale`.
pub fn augment_features_scaled(x: &DenseMatrix, sim: &SimilarityBlock, scale: f64) -> Result<DenseMatrix> {
    if sim.source_ids != x.row_ids() {
        return Err(Error::arg("similarity rows do not match the feature rows"));
    }
    let r = sim.targets();
    if r == 0 {
        return Ok(x.clone());
    }
    let p = x.dim();
    let mut values = Vec::with_capacity(x.rows() * (p + r));
    for i in 0..x.rows() {
        values.extend_from_slice(x.row(i));
        values.extend(sim.row(i).iter().map(|v| v * scale));
    }
    DenseMatrix::new(x.row_ids().to_vec(), p + r, values)
}

pub fn augment_gram(k: &KernelMatrix, sim_rows: &SimilarityBlock, sim_cols: &SimilarityBlock) -> Result<KernelMatrix> {
    augment_gram_scaled(k, sim_rows, sim_cols, 1.0)
}

/// `K'[a][b] = K[a][b] + scale² Σ_l S_a[a][l] S_b[b][l]`.
///
/// When `K` is square and both similarity blocks are equal, the result is
/// computed on the upper triangle and mirrored.
pub fn augment_gram_scaled(
    k: &KernelMatrix,
    sim_rows: &SimilarityBlock,
    sim_cols: &SimilarityBlock,
    scale: f64,
) -> Result<KernelMatrix> {
    if sim_rows.target_ids != sim_cols.target_ids {
        return Err(Error::arg("row and column similarity blocks use different targets"));
    }
    if sim_rows.source_ids != k.row_ids() || sim_cols.source_ids != k.col_ids() {
        return Err(Error::arg("similarity blocks do not align with the kernel ids"));
    }
    if sim_rows.targets() == 0 {
        return Ok(k.clone());
    }
    let s2 = scale * scale;
    let cols = k.cols();
    let symmetric = k.is_square() && sim_rows == sim_cols;
    let mut values = k.values().to_vec();
    if cols > 0 {
        values.par_chunks_mut(cols).enumerate().for_each(|(a, out)| {
            let sa = sim_rows.row(a);
            let start = if symmetric { a } else { 0 };
            for (b, slot) in out.iter_mut().enumerate().skip(start) {
                *slot += s2 * dot(sa, sim_cols.row(b));
            }
        });
    }
    if symmetric {
        for a in 0..cols {
            for b in 0..a {
                values[a * cols + b] = values[b * cols + a];
            }
        }
    }
    KernelMatrix::new(
        k.row_ids().to_vec(),
        k.col_ids().to_vec(),
        values,
        k.kind(),
        k.n(),
    )
}
