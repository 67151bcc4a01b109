//! KL divergence, the exponential-family interpolant and Chernoff
//! information between zero-mean Gaussians.
//!
//! All quantities are in nats. For a pair `(S1, S2)` with generalized
//! eigenvalues `λ_i`, the interpolant `S_t⁻¹ = t S1⁻¹ + (1 - t) S2⁻¹` is
//! diagonal in the simultaneous-diagonalization basis, so every divergence
//! reduces to a sum over the spectrum with `a_i(t) = t + (1 - t) λ_i`:
//!
//! ```text
//! D(S_t || S1) = ½ Σ ( ln a_i + 1/a_i - 1 )
//! D(S_t || S2) = ½ Σ ( ln(a_i/λ_i) + λ_i/a_i - 1 )
//! ```
//!
//! The Chernoff parameter `t*` is where the two are equal. Their
//! difference `h(t) = D(S_t||S2) - D(S_t||S1)` runs from `-D(S2||S1)` at
//! `t = 0` to `D(S1||S2)` at `t = 1` and has derivative
//! `½ Σ (1 - λ_i)² / a_i²`, so the root is unique unless every `λ_i = 1`.

use serde::Serialize;

use crate::covariance::{check_same_dim, log_det_from_cholesky, CovarianceMatrix};
use crate::error::{Error, Result};
use crate::geneig::{generalized_eigenvalues, EigenSpectrum, UNIT_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `D(S1 || S2)`
    Forward,
    /// `D(S2 || S1)`
    Reverse,
}

/// `D(N(0, S1) || N(0, S2))` from Cholesky factors, without forming inverses.
pub fn kl_divergence(sigma1: &CovarianceMatrix, sigma2: &CovarianceMatrix) -> Result<f64> {
    let n = check_same_dim(sigma1, sigma2)? as f64;
    let c1 = sigma1.cholesky();
    let c2 = sigma2.cholesky();
    // tr(S2⁻¹ S1) = ||L2⁻¹ L1||_F²
    let m = c2
        .l()
        .solve_lower_triangular(&c1.l())
        .ok_or(Error::NotPositiveDefinite)?;
    let trace = m.norm_squared();
    let kl = 0.5 * (log_det_from_cholesky(&c2) - log_det_from_cholesky(&c1)) + 0.5 * trace - 0.5 * n;
    Ok(kl.max(0.0))
}

pub fn kl_from_spectrum(spectrum: &EigenSpectrum, direction: Direction) -> f64 {
    let sum: f64 = match direction {
        Direction::Forward => spectrum.values().iter().map(|&l| -l.ln() + l - 1.0).sum(),
        Direction::Reverse => spectrum.values().iter().map(|&l| l.ln() + 1.0 / l - 1.0).sum(),
    };
    (0.5 * sum).max(0.0)
}

/// `(t S1⁻¹ + (1 - t) S2⁻¹)⁻¹`.
pub fn sigma_lambda(sigma1: &CovarianceMatrix, sigma2: &CovarianceMatrix, lambda: f64) -> Result<CovarianceMatrix> {
    check_same_dim(sigma1, sigma2)?;
    check_lambda(lambda)?;
    if lambda == 1.0 {
        return Ok(sigma1.clone());
    }
    if lambda == 0.0 {
        return Ok(sigma2.clone());
    }
    let precision = sigma1.inverse() * lambda + sigma2.inverse() * (1.0 - lambda);
    CovarianceMatrix::new(CovarianceMatrix::new(precision)?.inverse())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::InvalidLambda(lambda))
    }
}

/// `(D(S_t || S1), D(S_t || S2))` evaluated on the spectrum.
pub fn kl_interpolant_divergences(spectrum: &EigenSpectrum, lambda: f64) -> Result<(f64, f64)> {
    check_lambda(lambda)?;
    Ok(interpolant_pair(spectrum.values(), lambda))
}

fn interpolant_pair(values: &[f64], t: f64) -> (f64, f64) {
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for &l in values {
        let a = t + (1.0 - t) * l;
        d1 += a.ln() + 1.0 / a - 1.0;
        d2 += (a / l).ln() + l / a - 1.0;
    }
    (0.5 * d1, 0.5 * d2)
}

/// `h(t) = D(S_t||S2) - D(S_t||S1)`, increasing in `t`.
fn balance(values: &[f64], t: f64) -> f64 {
    0.5 * values.iter().map(|&l| (l - 1.0) / (t + (1.0 - t) * l) - l.ln()).sum::<f64>()
}

fn balance_slope(values: &[f64], t: f64) -> f64 {
    0.5 * values
        .iter()
        .map(|&l| {
            let a = t + (1.0 - t) * l;
            (1.0 - l) * (1.0 - l) / (a * a)
        })
        .sum::<f64>()
}

/// `Σ 1/a_i - N - (t - 1) ln β`; zero at the Chernoff parameter.
pub fn first_moment_residual(spectrum: &EigenSpectrum, t: f64) -> f64 {
    let vals = spectrum.values();
    let s: f64 = vals.iter().map(|&l| 1.0 / (t + (1.0 - t) * l)).sum();
    s - vals.len() as f64 - (t - 1.0) * spectrum.log_beta()
}

/// `Σ λ_i/a_i - N - t ln β`; zero at the Chernoff parameter.
pub fn second_moment_residual(spectrum: &EigenSpectrum, t: f64) -> f64 {
    let vals = spectrum.values();
    let s: f64 = vals.iter().map(|&l| l / (t + (1.0 - t) * l)).sum();
    s - vals.len() as f64 - t * spectrum.log_beta()
}

/// Solver output for the Chernoff parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaRoot {
    pub lambda: f64,
    pub iterations: usize,
    /// `|D(S_t||S1) - D(S_t||S2)|` at the returned point.
    pub residual: f64,
    /// False when `h(0) <= 0 <= h(1)` did not hold numerically.
    pub bracket_ok: bool,
}

/// Bisection on `h` followed by a few guarded Newton steps.
#[derive(Debug, Clone, Copy)]
pub struct LambdaSolver {
    pub unit_tol: f64,
    pub bisection_tol: f64,
    pub max_newton: usize,
}

impl Default for LambdaSolver {
    fn default() -> Self {
        Self { unit_tol: UNIT_TOL, bisection_tol: 1e-12, max_newton: 5 }
    }
}

impl LambdaSolver {
    pub fn with_unit_tol(unit_tol: f64) -> Self {
        Self { unit_tol, ..Self::default() }
    }

    pub fn solve(&self, spectrum: &EigenSpectrum) -> Result<LambdaRoot> {
        if spectrum.is_all_unit(self.unit_tol) {
            return Err(Error::DegenerateSpectrum);
        }
        let vals = spectrum.values();
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        let h_lo = balance(vals, lo);
        let h_hi = balance(vals, hi);
        let bracket_ok = h_lo <= 0.0 && h_hi >= 0.0;
        if !bracket_ok {
            log::warn!("Chernoff balance not bracketed: h(0) = {h_lo:e}, h(1) = {h_hi:e}");
            let lambda = if h_lo > 0.0 { 0.0 } else { 1.0 };
            return Ok(LambdaRoot { lambda, iterations: 0, residual: balance(vals, lambda).abs(), bracket_ok });
        }

        let mut iterations = 0;
        while hi - lo > self.bisection_tol {
            let mid = 0.5 * (lo + hi);
            let h = balance(vals, mid);
            iterations += 1;
            if h == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if h < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }

        let mut t = 0.5 * (lo + hi);
        let mut h = balance(vals, t);
        for _ in 0..self.max_newton {
            if h == 0.0 {
                break;
            }
            let slope = balance_slope(vals, t);
            if !(slope > 0.0) {
                break;
            }
            let next = t - h / slope;
            if !(lo..=hi).contains(&next) {
                break;
            }
            let h_next = balance(vals, next);
            iterations += 1;
            if h_next.abs() >= h.abs() {
                break;
            }
            t = next;
            h = h_next;
        }
        Ok(LambdaRoot { lambda: t, iterations, residual: h.abs(), bracket_ok })
    }
}

/// The Chernoff parameter of the spectrum with default tolerances.
pub fn lambda_star(spectrum: &EigenSpectrum) -> Result<f64> {
    LambdaSolver::default().solve(spectrum).map(|r| r.lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ChernoffDiagnostic {
    /// All eigenvalues are unit: CI is zero and the parameter is set to ½.
    DegenerateSpectrum,
    /// The balance function did not change sign on [0, 1].
    BracketViolated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChernoffResult {
    pub ci: f64,
    pub lambda_star: f64,
    pub spectrum: EigenSpectrum,
    pub iterations: usize,
    pub residual: f64,
    pub diagnostics: Vec<ChernoffDiagnostic>,
}

impl ChernoffResult {
    pub fn is_degenerate(&self) -> bool {
        self.diagnostics.contains(&ChernoffDiagnostic::DegenerateSpectrum)
    }
}

/// Chernoff information evaluated in closed form at the Chernoff parameter:
/// `½ Σ ln((1 - t)√λ_i + t/√λ_i) + ½ (t - ½) ln β`.
pub fn ci_at(spectrum: &EigenSpectrum, t: f64) -> f64 {
    let s: f64 = spectrum
        .values()
        .iter()
        .map(|&l| {
            let r = l.sqrt();
            ((1.0 - t) * r + t / r).ln()
        })
        .sum();
    0.5 * s + 0.5 * (t - 0.5) * spectrum.log_beta()
}

pub fn chernoff_from_spectrum(spectrum: &EigenSpectrum) -> ChernoffResult {
    chernoff_with_solver(spectrum, &LambdaSolver::default())
}

pub fn chernoff_with_solver(spectrum: &EigenSpectrum, solver: &LambdaSolver) -> ChernoffResult {
    match solver.solve(spectrum) {
        Ok(root) => {
            let mut diagnostics = Vec::new();
            if !root.bracket_ok {
                diagnostics.push(ChernoffDiagnostic::BracketViolated);
            }
            ChernoffResult {
                ci: ci_at(spectrum, root.lambda).max(0.0),
                lambda_star: root.lambda,
                spectrum: spectrum.clone(),
                iterations: root.iterations,
                residual: root.residual,
                diagnostics,
            }
        }
        Err(_) => ChernoffResult {
            ci: 0.0,
            lambda_star: 0.5,
            spectrum: spectrum.clone(),
            iterations: 0,
            residual: 0.0,
            diagnostics: vec![ChernoffDiagnostic::DegenerateSpectrum],
        },
    }
}

pub fn chernoff_information(sigma1: &CovarianceMatrix, sigma2: &CovarianceMatrix) -> Result<ChernoffResult> {
    Ok(chernoff_from_spectrum(&generalized_eigenvalues(sigma1, sigma2)?))
}

pub fn chernoff_information_with(
    sigma1: &CovarianceMatrix,
    sigma2: &CovarianceMatrix,
    solver: &LambdaSolver,
) -> Result<ChernoffResult> {
    Ok(chernoff_with_solver(&generalized_eigenvalues(sigma1, sigma2)?, solver))
}
