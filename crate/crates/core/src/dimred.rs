//! Classification-oriented linear dimension reduction.
//!
//! Every optimal `N_O × N` map can be taken as `N_O` rows of the
//! simultaneous diagonalizer: the `k` rows belonging to the largest
//! generalized eigenvalues plus the `N_O - k` rows of the smallest, for some
//! admissible `k`.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::covariance::{check_same_dim, symmetrize, CovarianceMatrix};
use crate::divergence::{chernoff_with_solver, ChernoffResult, LambdaSolver};
use crate::error::{Error, Result};
use crate::geneig::simultaneous_diagonalizer;

/// Eigenvalues above `1 + ABOVE_ONE_TOL` count towards `m`.
pub const ABOVE_ONE_TOL: f64 = 1e-12;

const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct ReductionCandidate {
    /// Rows taken from the large-eigenvalue end.
    pub k: usize,
    /// Ascending indices into the full spectrum.
    pub row_indices: Vec<usize>,
    /// `N_O × N`, the selected rows of the diagonalizer.
    pub matrix: DMatrix<f64>,
    pub ci: ChernoffResult,
}

impl ReductionCandidate {
    pub fn eigenvalues(&self) -> &[f64] {
        self.ci.spectrum.values()
    }
}

/// Admissible range of `k` for an `N`-dimensional pair with `m` eigenvalues
/// above one.
pub fn admissible_k(n: usize, m: usize, n_out: usize) -> std::ops::RangeInclusive<usize> {
    (n_out + m).saturating_sub(n)..=m.min(n_out)
}

fn check_budget(n: usize, n_out: usize) -> Result<()> {
    if n_out == 0 || n_out > n {
        return Err(Error::InvalidBudget { n_out, n });
    }
    Ok(())
}

pub fn candidate_reductions(
    sigma1: &CovarianceMatrix,
    sigma2: &CovarianceMatrix,
    n_out: usize,
) -> Result<Vec<ReductionCandidate>> {
    candidate_reductions_with(sigma1, sigma2, n_out, &LambdaSolver::default())
}

/// Candidates sorted by CI, best first; equal CIs keep the smaller `k` first.
pub fn candidate_reductions_with(
    sigma1: &CovarianceMatrix,
    sigma2: &CovarianceMatrix,
    n_out: usize,
    solver: &LambdaSolver,
) -> Result<Vec<ReductionCandidate>> {
    let n = check_same_dim(sigma1, sigma2)?;
    check_budget(n, n_out)?;
    let diag = simultaneous_diagonalizer(sigma1, sigma2)?;
    let m = diag.spectrum.count_above_one(ABOVE_ONE_TOL);
    let ks: Vec<usize> = admissible_k(n, m, n_out).collect();
    let mut candidates = ks
        .par_iter()
        .map(|&k| {
            let row_indices: Vec<usize> = (0..n_out - k).chain(n - k..n).collect();
            let spectrum = diag.spectrum.select(&row_indices)?;
            let matrix = diag.matrix.select_rows(&row_indices);
            Ok(ReductionCandidate { k, row_indices, matrix, ci: chernoff_with_solver(&spectrum, solver) })
        })
        .collect::<Result<Vec<_>>>()?;
    candidates.sort_by(|a, b| b.ci.ci.total_cmp(&a.ci.ci).then(a.k.cmp(&b.k)));
    Ok(candidates)
}

pub fn optimal_reduction(
    sigma1: &CovarianceMatrix,
    sigma2: &CovarianceMatrix,
    n_out: usize,
) -> Result<ReductionCandidate> {
    let mut all = candidate_reductions(sigma1, sigma2, n_out)?;
    Ok(all.swap_remove(0))
}

/// `(A S1 Aᵀ, A S2 Aᵀ)`.
pub fn reduced_pair(
    a: &DMatrix<f64>,
    sigma1: &CovarianceMatrix,
    sigma2: &CovarianceMatrix,
) -> Result<(CovarianceMatrix, CovarianceMatrix)> {
    let n = check_same_dim(sigma1, sigma2)?;
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(a.ncols(), n));
    }
    if a.nrows() == 0 || a.nrows() > n || a.iter().any(|v| !v.is_finite()) {
        return Err(Error::RankDeficientProjection);
    }
    let sv = a.singular_values();
    let top = sv.max();
    if !(top > 0.0) || sv.min() <= RANK_TOL * top {
        return Err(Error::RankDeficientProjection);
    }
    let project = |s: &CovarianceMatrix| {
        CovarianceMatrix::new(symmetrize(a * s.matrix() * a.transpose())).map_err(|_| Error::RankDeficientProjection)
    };
    Ok((project(sigma1)?, project(sigma2)?))
}

/// Rows are the eigenvectors of `sigma` with the `n_out` largest
/// eigenvalues, in decreasing order.
pub fn pca_baseline(sigma: &CovarianceMatrix, n_out: usize) -> Result<DMatrix<f64>> {
    let n = sigma.dim();
    check_budget(n, n_out)?;
    let eig = SymmetricEigen::new(sigma.matrix().clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    Ok(DMatrix::from_fn(n_out, n, |r, c| eig.eigenvectors[(c, order[r])]))
}

/// Per-dimension term `g(ν) = ln(λ + (1-λ)ν) + 1/(λ + (1-λ)ν) - 1`.
/// Zero at `ν = 1` and increasing in `|λ - 1|`-scaled distance from it.
pub fn dimension_contribution(lambda: f64, nu: f64) -> f64 {
    let a = lambda + (1.0 - lambda) * nu;
    a.ln() + 1.0 / a - 1.0
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateSummary {
    pub k: usize,
    pub eigenvalues: Vec<f64>,
    pub ci: f64,
    pub lambda_star: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReductionReport {
    pub n_out: usize,
    pub m: usize,
    pub candidates: Vec<CandidateSummary>,
    pub optimal_k: usize,
    pub optimal_ci: f64,
    pub matrix: Vec<Vec<f64>>,
}

impl ReductionReport {
    /// `candidates` as returned by [`candidate_reductions`].
    pub fn new(n_out: usize, m: usize, candidates: &[ReductionCandidate]) -> Self {
        let best = &candidates[0];
        Self {
            n_out,
            m,
            candidates: candidates
                .iter()
                .map(|c| CandidateSummary {
                    k: c.k,
                    eigenvalues: c.eigenvalues().to_vec(),
                    ci: c.ci.ci,
                    lambda_star: c.ci.lambda_star,
                })
                .collect(),
            optimal_k: best.k,
            optimal_ci: best.ci.ci,
            matrix: best.matrix.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }
}
