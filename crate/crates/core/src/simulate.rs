//! Monte-Carlo harness for M-ary Gaussian hypothesis testing.
//!
//! Every trial draws from its own ChaCha stream, derived from the seed and
//! the (t index, true model, trial) triple, so results do not depend on how
//! rayon schedules the work.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{check_same_dim, CovarianceMatrix};
use crate::divergence::chernoff_information;
use crate::error::{Error, Result};
use crate::tree::TreeSpec;

const PRIOR_SUM_TOL: f64 = 1e-12;

/// Minimum number of errors at a sample length for it to enter the fit.
pub const MIN_ERRORS_FOR_FIT: u64 = 10;

#[derive(Debug, Clone)]
pub struct HypothesisSet {
    models: Vec<CovarianceMatrix>,
    priors: Vec<f64>,
}

impl HypothesisSet {
    pub fn new(models: Vec<CovarianceMatrix>, priors: Vec<f64>) -> Result<Self> {
        if models.len() < 2 {
            return Err(Error::InvalidHypotheses(format!("need at least 2 models, got {}", models.len())));
        }
        if models.len() != priors.len() {
            return Err(Error::InvalidHypotheses(format!(
                "{} models but {} priors",
                models.len(),
                priors.len()
            )));
        }
        for m in &models[1..] {
            check_same_dim(&models[0], m)?;
        }
        if let Some(p) = priors.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidHypotheses(format!("prior {p} is not positive")));
        }
        let total: f64 = priors.iter().sum();
        if (total - 1.0).abs() > PRIOR_SUM_TOL {
            return Err(Error::InvalidHypotheses(format!("priors sum to {total}, not 1")));
        }
        Ok(Self { models, priors })
    }

    pub fn uniform(models: Vec<CovarianceMatrix>) -> Result<Self> {
        let m = models.len().max(1);
        Self::new(models, vec![1.0 / m as f64; m])
    }

    pub fn models(&self) -> &[CovarianceMatrix] {
        &self.models
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.models[0].dim()
    }

    /// Smallest pairwise Chernoff information and the pair attaining it.
    pub fn min_pairwise_ci(&self) -> Result<(f64, (usize, usize))> {
        let mut best = (f64::INFINITY, (0, 1));
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                let ci = chernoff_information(&self.models[i], &self.models[j])?.ci;
                if ci < best.0 {
                    best = (ci, (i, j));
                }
            }
        }
        Ok(best)
    }

    /// Each model reduced to `A S Aᵀ`.
    pub fn project(&self, a: &DMatrix<f64>) -> Result<Self> {
        let models = self
            .models
            .iter()
            .map(|s| {
                if a.ncols() != s.dim() {
                    return Err(Error::DimensionMismatch(a.ncols(), s.dim()));
                }
                CovarianceMatrix::new(a * s.matrix() * a.transpose()).map_err(|_| Error::RankDeficientProjection)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(models, self.priors.clone())
    }
}

/// Cached per-model factors for log-density evaluation.
struct Scorer {
    lower: Vec<DMatrix<f64>>,
    log_priors: Vec<f64>,
    /// Per-sample normalizing term `-½ ln|S| - ½ N ln 2π`.
    norms: Vec<f64>,
}

impl Scorer {
    fn new(hyps: &HypothesisSet) -> Self {
        let n = hyps.dim() as f64;
        let lower = hyps.models.iter().map(|m| m.cholesky().l()).collect();
        let norms = hyps
            .models
            .iter()
            .map(|m| -0.5 * m.log_det() - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
            .collect();
        Self { lower, log_priors: hyps.priors.iter().map(|p| p.ln()).collect(), norms }
    }

    /// Log-density of `x` under model `k`.
    fn log_density(&self, k: usize, x: &DVector<f64>) -> f64 {
        let y = self.lower[k].solve_lower_triangular(x).expect("Cholesky factor is nonsingular");
        self.norms[k] - 0.5 * y.norm_squared()
    }

    fn classify_rows<'a>(&self, rows: impl Iterator<Item = DVector<f64>> + 'a) -> usize {
        let mut scores = self.log_priors.clone();
        for x in rows {
            for (k, s) in scores.iter_mut().enumerate() {
                *s += self.log_density(k, &x);
            }
        }
        argmax_first(&scores)
    }
}

fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = k;
        }
    }
    best
}

fn draw(lower: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let z = DVector::from_fn(lower.nrows(), |_, _| StandardNormal.sample(rng));
    lower * z
}

/// `t × N` matrix of independent rows drawn from `N(0, sigma)`.
pub fn sample_sequence(sigma: &CovarianceMatrix, t: usize, seed: u64) -> Result<DMatrix<f64>> {
    if t == 0 {
        return Err(Error::InvalidArgument("sequence length must be at least 1".into()));
    }
    let lower = sigma.cholesky().l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DMatrix::zeros(t, sigma.dim());
    for r in 0..t {
        out.set_row(r, &draw(&lower, &mut rng).transpose());
    }
    Ok(out)
}

/// MAP decision (0-based); ties go to the smallest index.
pub fn map_classify(x: &DMatrix<f64>, hyps: &HypothesisSet) -> Result<usize> {
    if x.ncols() != hyps.dim() {
        return Err(Error::DimensionMismatch(x.ncols(), hyps.dim()));
    }
    let scorer = Scorer::new(hyps);
    Ok(scorer.classify_rows(x.row_iter().map(|r| r.transpose())))
}

/// Splits `trials` across models in proportion to the priors (largest
/// remainder).
pub fn allocate_trials(priors: &[f64], trials: usize) -> Vec<usize> {
    let exact: Vec<f64> = priors.iter().map(|p| p * trials as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = trials - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..priors.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for k in order {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    counts
}

fn stream_id(t_index: usize, model: usize, trial: usize) -> u64 {
    ((t_index as u64) << 48) | ((model as u64) << 32) | trial as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExponentDiagnostic {
    /// Fewer than two sample lengths had enough errors to fit a slope.
    AllErrorsZero,
    /// Some sample lengths were left out of the fit for having too few errors.
    SparseErrors { excluded: Vec<usize> },
    /// At least one model received no trials.
    UnsampledModel { model: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    pub sample_lengths: Vec<usize>,
    pub error_rates: Vec<f64>,
    pub error_counts: Vec<u64>,
    /// Sample lengths used in the slope fit.
    pub fit_lengths: Vec<usize>,
    /// Least-squares slope of `-ln P_e` against `t`.
    pub fitted_exponent: Option<f64>,
    /// Delta-method standard error of the slope.
    pub slope_std_error: Option<f64>,
    /// Minimum pairwise Chernoff information.
    pub predicted: f64,
    pub predicted_pair: (usize, usize),
    pub trials: usize,
    pub seed: u64,
    pub diagnostics: Vec<ExponentDiagnostic>,
}

pub fn estimate_error_exponent(hyps: &HypothesisSet, t_grid: &[usize], trials: usize, seed: u64) -> Result<ExponentEstimate> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if trials >= 1 << 32 || hyps.len() >= 1 << 16 || t_grid.len() >= 1 << 16 {
        return Err(Error::InvalidArgument("trial budget too large".into()));
    }
    if t_grid.is_empty() || t_grid[0] == 0 || t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("t_grid must be strictly ascending positive integers".into()));
    }
    let (predicted, predicted_pair) = hyps.min_pairwise_ci()?;
    let scorer = Scorer::new(hyps);
    let counts = allocate_trials(&hyps.priors, trials);
    let mut diagnostics: Vec<ExponentDiagnostic> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == 0)
        .map(|(model, _)| ExponentDiagnostic::UnsampledModel { model })
        .collect();

    let mut error_rates = Vec::with_capacity(t_grid.len());
    let mut error_counts = Vec::with_capacity(t_grid.len());
    for (ti, &t) in t_grid.iter().enumerate() {
        let mut rate = 0.0;
        let mut total = 0;
        for (model, &n_k) in counts.iter().enumerate() {
            if n_k == 0 {
                continue;
            }
            let errors: u64 = (0..n_k)
                .into_par_iter()
                .map(|trial| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(stream_id(ti, model, trial));
                    let lower = &scorer.lower[model];
                    let decided = scorer.classify_rows((0..t).map(|_| draw(lower, &mut rng)));
                    u64::from(decided != model)
                })
                .sum();
            rate += hyps.priors[model] * errors as f64 / n_k as f64;
            total += errors;
        }
        error_rates.push(rate);
        error_counts.push(total);
    }

    let used: Vec<usize> = (0..t_grid.len()).filter(|&i| error_counts[i] >= MIN_ERRORS_FOR_FIT).collect();
    let excluded: Vec<usize> = (0..t_grid.len()).filter(|i| !used.contains(i)).map(|i| t_grid[i]).collect();
    let (fitted_exponent, slope_std_error) = if used.len() >= 2 {
        if !excluded.is_empty() {
            diagnostics.push(ExponentDiagnostic::SparseErrors { excluded });
        }
        let ts: Vec<f64> = used.iter().map(|&i| t_grid[i] as f64).collect();
        let ys: Vec<f64> = used.iter().map(|&i| -error_rates[i].ln()).collect();
        // Var(-ln p̂) ≈ (1 - p) / errors.
        let vars: Vec<f64> = used.iter().map(|&i| (1.0 - error_rates[i]) / error_counts[i] as f64).collect();
        let (slope, se) = slope_fit(&ts, &ys, &vars);
        (Some(slope), Some(se))
    } else {
        diagnostics.push(ExponentDiagnostic::AllErrorsZero);
        (None, None)
    };

    Ok(ExponentEstimate {
        sample_lengths: t_grid.to_vec(),
        error_rates,
        error_counts,
        fit_lengths: used.iter().map(|&i| t_grid[i]).collect(),
        fitted_exponent,
        slope_std_error,
        predicted,
        predicted_pair,
        trials,
        seed,
        diagnostics,
    })
}

/// Ordinary least-squares slope with a standard error propagated from the
/// per-point variances.
fn slope_fit(xs: &[f64], ys: &[f64], vars: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().zip(vars).map(|(x, v)| (x - mx) * (x - mx) / (sxx * sxx) * v).sum();
    (sxy / sxx, var.sqrt())
}

/// A model given either as a tree or as a dense covariance matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Tree(TreeSpec),
    Matrix(Vec<Vec<f64>>),
}

impl ModelSpec {
    pub fn covariance(&self) -> Result<CovarianceMatrix> {
        match self {
            ModelSpec::Tree(t) => t.covariance(),
            ModelSpec::Matrix(rows) => CovarianceMatrix::from_rows(rows),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub models: Vec<ModelSpec>,
    /// Uniform when omitted.
    #[serde(default)]
    pub priors: Option<Vec<f64>>,
    pub t_grid: Vec<usize>,
    pub trials: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl SimulationConfig {
    pub fn hypotheses(&self) -> Result<HypothesisSet> {
        let models = self.models.iter().map(ModelSpec::covariance).collect::<Result<Vec<_>>>()?;
        match &self.priors {
            Some(p) => HypothesisSet::new(models, p.clone()),
            None => HypothesisSet::uniform(models),
        }
    }
}
