//! Symmetric positive-definite matrices and the Cholesky helpers shared by
//! the other modules.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

/// A symmetric positive-definite matrix. Used both for covariance matrices
/// and, where noted, for their inverses (precision matrices).
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    entries: DMatrix<f64>,
    normalized: bool,
}

impl CovarianceMatrix {
    /// Validates symmetry (relative to the largest entry) and positive
    /// definiteness. The stored matrix is the exact symmetric average.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::DimensionMismatch(entries.nrows(), entries.ncols()));
        }
        if entries.nrows() == 0 {
            return Err(Error::InvalidArgument("empty matrix".into()));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
        }
        let scale = entries.amax().max(1.0);
        let asym = (&entries - entries.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric(asym));
        }
        let entries = symmetrize(entries);
        if Cholesky::new(entries.clone()).is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        let normalized = entries.diagonal().iter().all(|d| (d - 1.0).abs() <= SYMMETRY_TOL);
        Ok(Self { entries, normalized })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch(n, bad.len()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        Self { entries: DMatrix::identity(n, n), normalized: true }
    }

    pub fn from_diagonal(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(values)))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    /// All diagonal entries equal one.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.entries.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn cholesky(&self) -> Cholesky<f64, Dyn> {
        // Construction guarantees success.
        Cholesky::new(self.entries.clone()).expect("validated positive definite")
    }

    pub fn log_det(&self) -> f64 {
        log_det_from_cholesky(&self.cholesky())
    }

    pub fn det(&self) -> f64 {
        self.log_det().exp()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        symmetrize(self.cholesky().inverse())
    }
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

pub(crate) fn log_det_from_cholesky(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

pub(crate) fn check_same_dim(a: &CovarianceMatrix, b: &CovarianceMatrix) -> Result<usize> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(a.dim())
}
