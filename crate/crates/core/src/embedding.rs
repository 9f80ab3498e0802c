//! Latent coordinates from a recovered squared-distance matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{BmcError, Result};
use crate::linalg::{self, DistanceMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    /// One row per point, coordinate `c` paired with the `c`-th largest
    /// Gram eigenvalue.
    pub coords: DMatrix<f64>,
    pub p: usize,
    /// Full descending eigen-spectrum of `Gram(L)` before clamping.
    pub spectrum: DVector<f64>,
}

/// Classical scaling: `coords = V_p diag(sqrt(max(λ_p, 0)))`.
///
/// Gram(L) is symmetric, so its SVD and eigendecomposition coincide when it
/// is PSD; the eigendecomposition is used and negative eigenvalues are
/// clamped to zero. Each eigenvector is flipped so that its largest-magnitude
/// entry (first one on ties) is positive.
pub fn embed(l: &DistanceMatrix, p: usize) -> Result<Embedding> {
    let n = l.n();
    if p == 0 || p > n {
        return Err(BmcError::Parameter(format!("embedding dimension p = {p} must lie in 1..={n}")));
    }
    let spec = if n == 1 {
        linalg::Spectrum {
            values: DVector::zeros(1),
            vectors: DMatrix::identity(1, 1),
        }
    } else {
        linalg::symmetric_eig(linalg::gramian(l.as_matrix())?.as_matrix())?
    };
    let mut coords = DMatrix::zeros(n, p);
    for c in 0..p {
        let v = spec.vectors.column(c);
        let pivot = v.iter().fold(0.0f64, |best, &x| if x.abs() > best.abs() { x } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        let scale = sign * spec.values[c].max(0.0).sqrt();
        coords.set_column(c, &(v * scale));
    }
    Ok(Embedding {
        coords,
        p,
        spectrum: spec.values,
    })
}

/// `100 σ_j / Σ_{i<top_k} σ_i` over the first `top_k` values. Missing
/// entries (fewer than `top_k` values) count as zero, as do negative ones,
/// and an all-zero head yields all zeros.
pub fn normalized_sv_percent(values: &[f64], top_k: usize) -> Vec<f64> {
    let head: Vec<f64> = (0..top_k)
        .map(|j| values.get(j).copied().unwrap_or(0.0).max(0.0))
        .collect();
    let total: f64 = head.iter().sum();
    if total <= 0.0 {
        return vec![0.0; top_k];
    }
    head.iter().map(|v| 100.0 * v / total).collect()
}
