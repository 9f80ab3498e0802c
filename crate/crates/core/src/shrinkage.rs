//! Shrinkage operators: singular-value soft thresholding, the PSD
//! eigenvalue shrinkage of a Gramian, and the bound-violation operator.

use nalgebra::{DMatrix, DVector};

use crate::error::{BmcError, Result};
use crate::linalg::{self, DistanceMatrix, GramMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageResult {
    /// The shrunk matrix (for the PSD path, the shrunk Gramian).
    pub matrix: DMatrix<f64>,
    pub spectrum_before: DVector<f64>,
    pub spectrum_after: DVector<f64>,
    /// Amount subtracted from every value before flooring at zero.
    pub threshold: f64,
}

/// Singular-value soft thresholding `U max(Σ - ν, 0) V^T`, the minimizer of
/// `ν‖L‖_* + ½‖L - G‖²_F`.
pub fn sv_shrink(g: &DMatrix<f64>, nu: f64) -> Result<ShrinkageResult> {
    if nu.is_nan() || nu < 0.0 {
        return Err(BmcError::Parameter(format!(
            "shrinkage threshold must be >= 0, got {nu}"
        )));
    }
    let dec = linalg::svd(g)?;
    let shrunk = dec.values.map(|s| (s - nu).max(0.0));
    let matrix = &dec.u * DMatrix::from_diagonal(&shrunk) * dec.v.transpose();
    Ok(ShrinkageResult {
        matrix,
        spectrum_before: dec.values,
        spectrum_after: shrunk,
        threshold: nu,
    })
}

fn check_shapes(lower: &DMatrix<f64>, upper: &DMatrix<f64>, k: &DMatrix<f64>) {
    assert_eq!(lower.shape(), k.shape(), "lower bound shape mismatch");
    assert_eq!(upper.shape(), k.shape(), "upper bound shape mismatch");
}

/// Signed distance of each entry of `K` to its `[lower, upper]` interval;
/// zero inside the interval.
pub fn bound_violation(lower: &DMatrix<f64>, upper: &DMatrix<f64>, k: &DMatrix<f64>) -> DMatrix<f64> {
    check_shapes(lower, upper, k);
    DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| {
        let v = k[(i, j)];
        if v < lower[(i, j)] {
            v - lower[(i, j)]
        } else if v > upper[(i, j)] {
            v - upper[(i, j)]
        } else {
            0.0
        }
    })
}

/// Derivative of [`bound_violation`] with respect to `K`: 1 strictly
/// outside the interval, 0 inside and on its boundary.
pub fn bound_violation_deriv(
    lower: &DMatrix<f64>,
    upper: &DMatrix<f64>,
    k: &DMatrix<f64>,
) -> DMatrix<f64> {
    check_shapes(lower, upper, k);
    DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| {
        let v = k[(i, j)];
        if v < lower[(i, j)] || v > upper[(i, j)] {
            1.0
        } else {
            0.0
        }
    })
}

/// Shrinks the eigenvalues of `Gram(G)` by `ν* = 1/ρ - min(λ_min, 0)` and
/// floors them at zero, returning the PSD Gramian `U F*(Λ) U^T`.
pub fn psd_eig_shrink(g: &DMatrix<f64>, rho_zeta: f64) -> Result<ShrinkageResult> {
    if rho_zeta.is_nan() || rho_zeta <= 0.0 || !rho_zeta.is_finite() {
        return Err(BmcError::Parameter(format!(
            "penalty must be positive and finite, got {rho_zeta}"
        )));
    }
    let gram = linalg::gramian(g)?;
    let spec = linalg::symmetric_eig(gram.as_matrix())?;
    let n = spec.len();
    let lambda_min = spec.values[n - 1];
    let threshold = 1.0 / rho_zeta - lambda_min.min(0.0);
    let shrunk = spec.values.map(|l| if l - threshold > 0.0 { l - threshold } else { 0.0 });

    // Only the retained (leading) eigenpairs contribute.
    let keep = shrunk.iter().take_while(|&&v| v > 0.0).count();
    let matrix = if keep == 0 {
        DMatrix::zeros(n, n)
    } else {
        let u = spec.vectors.columns(0, keep);
        let mut scaled = u.clone_owned();
        for (mut col, &s) in scaled.column_iter_mut().zip(shrunk.iter()) {
            col *= s;
        }
        linalg::symmetrize(&(scaled * u.transpose()))
    };

    Ok(ShrinkageResult {
        matrix,
        spectrum_before: spec.values,
        spectrum_after: shrunk,
        threshold,
    })
}

/// One PSD projection step: shrink the Gramian of `G` and map it back to a
/// squared-distance matrix.
pub fn psd_distance_step(g: &DMatrix<f64>, rho_zeta: f64) -> Result<DistanceMatrix> {
    let shrunk = psd_eig_shrink(g, rho_zeta)?;
    Ok(linalg::gram_to_distance(&GramMatrix::from_raw(shrunk.matrix)))
}

/// `‖G‖_{*,r}`: the sum of all but the `r` largest singular values.
pub fn truncated_nuclear_norm(singular_values: &[f64], r: usize) -> f64 {
    singular_values.iter().skip(r).sum()
}
