//! Generalized eigenvalues of a covariance pair and a simultaneous
//! diagonalizer.
//!
//! With `S2 = L Lᵀ` (Cholesky), the whitened matrix `C = L⁻¹ S1 L⁻ᵀ` is
//! symmetric and has the eigenvalues of `S1 S2⁻¹`. An orthogonal
//! decomposition `C = U Λ Uᵀ` then gives `P = Uᵀ L⁻¹` with
//! `P S2 Pᵀ = I` and `P S1 Pᵀ = Λ`, including when eigenvalues repeat.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::covariance::{check_same_dim, symmetrize, CovarianceMatrix};
use crate::error::{Error, Result};

/// Default tolerance for deciding that an eigenvalue equals one.
pub const UNIT_TOL: f64 = 1e-8;

/// Ascending positive generalized eigenvalues (multiplicities kept).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSpectrum {
    values: Vec<f64>,
    beta: f64,
}

impl EigenSpectrum {
    /// Sorts `values` ascending; every value must be positive and finite.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty spectrum".into()));
        }
        if let Some(&bad) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::NonPositiveEigenvalue(bad));
        }
        values.sort_by(f64::total_cmp);
        let beta = values.iter().product();
        Ok(Self { values, beta })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Product of the eigenvalues, `|S1| / |S2|`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `ln beta` summed in log space.
    pub fn log_beta(&self) -> f64 {
        self.values.iter().map(|v| v.ln()).sum()
    }

    /// Spectrum of the swapped pair `(S2, S1)`.
    pub fn reciprocal(&self) -> Self {
        let mut values: Vec<f64> = self.values.iter().map(|v| 1.0 / v).collect();
        values.reverse();
        let beta = values.iter().product();
        Self { values, beta }
    }

    /// The spectrum with an extra eigenvalue equal to one.
    pub fn with_unit(&self) -> Self {
        let mut values = self.values.clone();
        values.push(1.0);
        Self::new(values).expect("adding a unit keeps the spectrum positive")
    }

    pub fn is_all_unit(&self, tol: f64) -> bool {
        self.values.iter().all(|v| (v - 1.0).abs() <= tol)
    }

    /// Number of eigenvalues strictly greater than `1 + tol`.
    pub fn count_above_one(&self, tol: f64) -> usize {
        self.values.iter().filter(|&&v| v > 1.0 + tol).count()
    }

    /// Sub-spectrum at the given indices.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&k| self.values[k]).collect())
    }
}

/// `P` with `P S2 Pᵀ = I` and `P S1 Pᵀ = diag(spectrum)`; row `k` of `P`
/// belongs to `spectrum.values()[k]`.
#[derive(Debug, Clone)]
pub struct Diagonalizer {
    pub matrix: DMatrix<f64>,
    pub spectrum: EigenSpectrum,
}

/// Eigenvalues of `sigma1 * sigma2⁻¹` in ascending order.
pub fn generalized_eigenvalues(sigma1: &CovarianceMatrix, sigma2: &CovarianceMatrix) -> Result<EigenSpectrum> {
    Ok(simultaneous_diagonalizer(sigma1, sigma2)?.spectrum)
}

pub fn simultaneous_diagonalizer(sigma1: &CovarianceMatrix, sigma2: &CovarianceMatrix) -> Result<Diagonalizer> {
    let n = check_same_dim(sigma1, sigma2)?;
    let l2 = sigma2.cholesky().l();
    let l2_inv = l2
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(Error::NotPositiveDefinite)?;
    let whitened = symmetrize(&l2_inv * sigma1.matrix() * l2_inv.transpose());
    let eig = SymmetricEigen::new(whitened);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    if let Some(&bad) = values.iter().find(|&&v| v <= 0.0) {
        // Only reachable through severe ill-conditioning.
        log::warn!("non-positive generalized eigenvalue {bad}");
        return Err(Error::NotPositiveDefinite);
    }
    let u = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    let matrix = u.transpose() * l2_inv;
    Ok(Diagonalizer { matrix, spectrum: EigenSpectrum::new(values)? })
}
