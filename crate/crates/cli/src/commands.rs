use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chernoff_core::dimred::{candidate_reductions_with, pca_baseline, reduced_pair, ReductionReport, ABOVE_ONE_TOL};
use chernoff_core::divergence::{
    chernoff_information_with, chernoff_with_solver, kl_from_spectrum, kl_interpolant_divergences, Direction,
};
use chernoff_core::simulate::{estimate_error_exponent, ExponentEstimate, HypothesisSet};
use chernoff_core::tree_ops::{
    adding_operation, apply_graft, chain_ci_matrix_with, division_operation, is_independent_chain, ordering_report,
    trace_condition, GraftOp, ORDERING_SLACK,
};
use chernoff_core::{generalized_eigenvalues, ChernoffResult, CovarianceMatrix, EigenSpectrum, LambdaSolver, TreeSpec};
use nalgebra::DMatrix;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};

use crate::input::{read_chain, read_pair, read_pair_covariances, read_simulation_config, read_tree};
use crate::output::{to_value, CliError, CliResult, Report};

/// Max-abs deviation of `covariance · precision` from the identity that
/// `tree invert` accepts.
const IDENTITY_CHECK_TOL: f64 = 1e-9;

pub struct Settings {
    pub tolerance: Option<f64>,
}

impl Settings {
    fn solver(&self) -> LambdaSolver {
        self.tolerance.map(LambdaSolver::with_unit_tol).unwrap_or_default()
    }

    fn slack(&self) -> f64 {
        self.tolerance.unwrap_or(ORDERING_SLACK)
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Seed from the flag, then the config, then `CHERNOFF_SEED`, then 0.
fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> CliResult<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var("CHERNOFF_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| CliError::Usage(format!("CHERNOFF_SEED is not an unsigned integer: {v:?}"))),
        Err(_) => Ok(0),
    }
}

// ---- tree -------------------------------------------------------------

pub fn tree_build(path: &Path) -> CliResult<Report> {
    let tree = read_tree(path)?;
    let cov = tree.covariance()?;
    Ok(Report::new(json!({
        "nodes": tree.node_count(),
        "covariance": cov.to_rows(),
        "determinant": tree.determinant(),
        "log_determinant": chernoff_core::tree::tree_log_determinant(&tree),
    })))
}

pub fn tree_invert(path: &Path) -> CliResult<Report> {
    let tree = read_tree(path)?;
    let cov = tree.covariance()?;
    let prec = tree.precision()?;
    let n = tree.node_count();
    let err = (cov.matrix() * prec.matrix() - DMatrix::<f64>::identity(n, n)).amax();
    let mut report = Report::new(json!({
        "nodes": n,
        "precision": prec.to_rows(),
        "identity_check": { "max_abs_error": err, "passed": err <= IDENTITY_CHECK_TOL },
    }));
    if err > IDENTITY_CHECK_TOL {
        report.note(format!("covariance * precision deviates from identity by {err:e}"));
    }
    Ok(report)
}

pub fn tree_det(path: &Path) -> CliResult<Report> {
    let tree = read_tree(path)?;
    Ok(Report::new(json!({
        "nodes": tree.node_count(),
        "determinant": tree.determinant(),
        "log_determinant": chernoff_core::tree::tree_log_determinant(&tree),
    })))
}

// ---- ci ---------------------------------------------------------------

pub struct CiOptions {
    pub inputs: Vec<PathBuf>,
    pub from_eigenvalues: Option<Vec<f64>>,
    pub reverse: bool,
    pub spectrum: bool,
    pub lambda_star: bool,
}

pub fn ci(opts: &CiOptions, settings: &Settings) -> CliResult<Report> {
    let spectrum = match (&opts.from_eigenvalues, opts.inputs.is_empty()) {
        (Some(values), true) => EigenSpectrum::new(values.clone())?,
        (None, false) => {
            let (a, b) = read_pair_covariances(&opts.inputs)?;
            generalized_eigenvalues(&a, &b)?
        }
        (Some(_), false) => return Err(CliError::Usage("give either input files or --from-eigenvalues, not both".into())),
        (None, true) => return Err(CliError::Usage("no input: give a pair file, two model files or --from-eigenvalues".into())),
    };
    let spectrum = if opts.reverse { spectrum.reciprocal() } else { spectrum };
    let solver = settings.solver();
    let result = chernoff_with_solver(&spectrum, &solver);
    let mut payload = json!({
        "dim": spectrum.dim(),
        "ci": result.ci,
        "lambda_star": result.lambda_star,
        "beta": spectrum.beta(),
        "degenerate": result.is_degenerate(),
    });
    if opts.spectrum {
        payload["spectrum"] = to_value(spectrum.values());
        payload["kl_forward"] = json!(kl_from_spectrum(&spectrum, Direction::Forward));
        payload["kl_reverse"] = json!(kl_from_spectrum(&spectrum, Direction::Reverse));
    }
    if opts.lambda_star {
        let (d1, d2) = kl_interpolant_divergences(&spectrum, result.lambda_star)?;
        payload["solver"] = json!({
            "iterations": result.iterations,
            "residual": result.residual,
            "divergence_to_first": d1,
            "divergence_to_second": d2,
            "unit_tolerance": solver.unit_tol,
        });
    }
    let mut report = Report::new(payload);
    for d in &result.diagnostics {
        report.note(format!("{d:?}"));
    }
    Ok(report)
}

// ---- ops --------------------------------------------------------------

fn pair_summary(a: &TreeSpec, b: &TreeSpec, solver: &LambdaSolver) -> CliResult<Value> {
    let r = chernoff_information_with(&a.covariance()?, &b.covariance()?, solver)?;
    Ok(json!({ "ci": r.ci, "lambda_star": r.lambda_star, "spectrum": r.spectrum.values() }))
}

fn read_tree_pair(paths: &[PathBuf]) -> CliResult<(TreeSpec, TreeSpec)> {
    let (a, b) = read_pair(paths)?;
    Ok((a.tree("sigma1")?, b.tree("sigma2")?))
}

fn pair_report(before: (&TreeSpec, &TreeSpec), after: (TreeSpec, TreeSpec), settings: &Settings) -> CliResult<Report> {
    let solver = settings.solver();
    let b = pair_summary(before.0, before.1, &solver)?;
    let a = pair_summary(&after.0, &after.1, &solver)?;
    Ok(Report::new(json!({
        "sigma1": after.0,
        "sigma2": after.1,
        "before": b,
        "after": a,
    })))
}

pub fn ops_add(inputs: &[PathBuf], node: usize, weight: f64, settings: &Settings) -> CliResult<Report> {
    let (t1, t2) = read_tree_pair(inputs)?;
    let out = adding_operation((&t1, &t2), node, weight)?;
    pair_report((&t1, &t2), out, settings)
}

pub fn ops_divide(inputs: &[PathBuf], edge: (usize, usize), w1: f64, w2: f64, settings: &Settings) -> CliResult<Report> {
    let (t1, t2) = read_tree_pair(inputs)?;
    let out = division_operation((&t1, &t2), edge, w1, w2)?;
    pair_report((&t1, &t2), out, settings)
}

pub fn ops_graft(input: &Path, root: usize, from: usize, to: usize, weight: Option<f64>) -> CliResult<Report> {
    let tree = read_tree(input)?;
    let weight = match weight {
        Some(w) => w,
        None => tree.find_edge(root, from).map(|(_, w)| w).ok_or(chernoff_core::Error::EdgeNotFound(root, from))?,
    };
    let op = GraftOp::new(root, from, to, weight);
    let grafted = apply_graft(&tree, &op)?;
    Ok(Report::new(json!({
        "tree": grafted,
        "op": op,
        "determinant_before": tree.determinant(),
        "determinant_after": grafted.determinant(),
        "weights_preserved": grafted.weight_multiset() == tree.weight_multiset(),
    })))
}

// ---- chain ------------------------------------------------------------

pub fn chain(path: &Path, verify_ordering: bool, check_independence: bool, settings: &Settings) -> CliResult<Report> {
    let chain = read_chain(path)?;
    let table = chain_ci_matrix_with(&chain, &settings.solver())?;
    let mut payload = json!({
        "trees": chain.len(),
        "ops": chain.ops(),
        "ci": rows(&table.ci),
        "lambda_star": rows(&table.lambda_star),
    });
    let mut notes = Vec::new();
    if check_independence {
        let independence = is_independent_chain(&chain);
        let covs = chain.trees().iter().map(TreeSpec::covariance).collect::<Result<Vec<_>, _>>()?;
        let n = covs.len();
        let mut trace = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let v = trace_condition(&covs[i], &covs[j])?;
                trace[(i, j)] = v;
                trace[(j, i)] = -v;
            }
        }
        if !independence.independent {
            notes.push(format!("chain is not certified independent; interfering ops: {:?}", independence.conflicts));
        }
        payload["independence"] = to_value(&independence);
        payload["trace_condition"] = to_value(rows(&trace));
    }
    if verify_ordering {
        let report = ordering_report(&chain, &table, settings.slack());
        let violation_rows: Vec<_> = report.comparisons.iter().filter(|c| !c.holds).collect();
        let min_margin = report.comparisons.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
        payload["ordering"] = json!({
            "verdict": report.verdict,
            "comparisons": report.comparisons.len(),
            "violations": report.violations,
            "violation_rows": violation_rows,
            "min_margin": if min_margin.is_finite() { json!(min_margin) } else { Value::Null },
            "min_pair": report.min_pair,
            "min_pair_adjacent": report.min_pair_adjacent,
            "adjacent_min_gap": report.adjacent_min_gap,
            "slack": settings.slack(),
        });
        if report.comparisons.is_empty() {
            notes.push("fewer than three trees: no nested comparisons".into());
        }
    }
    let mut report = Report::new(payload);
    for n in notes {
        report.note(n);
    }
    Ok(report)
}

// ---- dimred -----------------------------------------------------------

pub struct DimredOptions {
    pub inputs: Vec<PathBuf>,
    pub n_out: usize,
    pub compare_pca: bool,
    pub compare_random: Option<usize>,
    pub seed: Option<u64>,
}

fn reduced_ci(d: &DMatrix<f64>, a: &CovarianceMatrix, b: &CovarianceMatrix, solver: &LambdaSolver) -> CliResult<ChernoffResult> {
    let (ra, rb) = reduced_pair(d, a, b)?;
    Ok(chernoff_information_with(&ra, &rb, solver)?)
}

pub fn dimred(opts: &DimredOptions, settings: &Settings) -> CliResult<Report> {
    let (a, b) = read_pair_covariances(&opts.inputs)?;
    let solver = settings.solver();
    let cands = candidate_reductions_with(&a, &b, opts.n_out, &solver)?;
    let full = chernoff_information_with(&a, &b, &solver)?;
    let m = full.spectrum.count_above_one(ABOVE_ONE_TOL);
    let optimal_ci = cands[0].ci.ci;
    let mut payload = to_value(ReductionReport::new(opts.n_out, m, &cands));
    payload["full_ci"] = json!(full.ci);
    let mut report_notes = Vec::new();

    if opts.compare_pca {
        // PCA on the pooled covariance so the baseline favours neither model.
        let pooled = CovarianceMatrix::new((a.matrix() + b.matrix()) * 0.5)?;
        let p = pca_baseline(&pooled, opts.n_out)?;
        let r = reduced_ci(&p, &a, &b, &solver)?;
        payload["pca"] = json!({ "ci": r.ci, "lambda_star": r.lambda_star, "matrix": rows(&p) });
    }
    if let Some(count) = opts.compare_random {
        let seed = resolve_seed(opts.seed, None)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = a.dim();
        let mut cis = Vec::with_capacity(count);
        for _ in 0..count {
            let d = DMatrix::<f64>::from_fn(opts.n_out, n, |_, _| StandardNormal.sample(&mut rng));
            // The CI of a projection depends only on its row space; an
            // orthonormal basis keeps the reduced pair well conditioned.
            let q = d.transpose().qr().q().transpose();
            match reduced_ci(&q, &a, &b, &solver) {
                Ok(r) => cis.push(r.ci),
                Err(CliError::Lib(chernoff_core::Error::RankDeficientProjection)) => {}
                Err(e) => return Err(e),
            }
        }
        let max = cis.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = cis.iter().sum::<f64>() / cis.len().max(1) as f64;
        let skipped = count - cis.len();
        if skipped > 0 {
            report_notes.push(format!("{skipped} rank-deficient random projections skipped"));
        }
        if !cis.is_empty() && max > optimal_ci + 1e-9 {
            report_notes.push(format!("random projection exceeded the optimum by {:e}", max - optimal_ci));
        }
        payload["random"] = json!({
            "count": cis.len(),
            "seed": seed,
            "max_ci": if cis.is_empty() { Value::Null } else { json!(max) },
            "mean_ci": if cis.is_empty() { Value::Null } else { json!(mean) },
            "max_minus_optimal": if cis.is_empty() { Value::Null } else { json!(max - optimal_ci) },
        });
    }
    let mut report = Report::new(payload);
    for n in report_notes {
        report.note(n);
    }
    Ok(report)
}

// ---- simulate ---------------------------------------------------------

pub struct SimulateOptions {
    pub config: PathBuf,
    pub csv: Option<PathBuf>,
    pub reduce: Option<usize>,
    pub seed: Option<u64>,
}

fn rate_over_t(p: f64, t: usize) -> Option<f64> {
    (p > 0.0).then(|| -p.ln() / t as f64)
}

fn estimate_rows(est: &ExponentEstimate) -> Vec<Value> {
    est.sample_lengths
        .iter()
        .zip(&est.error_rates)
        .zip(&est.error_counts)
        .map(|((&t, &p), &errors)| json!({ "t": t, "error_rate": p, "errors": errors, "exponent_estimate": rate_over_t(p, t) }))
        .collect()
}

fn estimate_json(est: &ExponentEstimate) -> Value {
    let mut v = to_value(est);
    v["table"] = Value::Array(estimate_rows(est));
    v
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

fn text_table(label: &str, est: &ExponentEstimate, out: &mut String) {
    let _ = writeln!(out, "{label}");
    let _ = writeln!(out, "{:>6} {:>14} {:>10} {:>14}", "t", "P_e", "errors", "-ln P_e / t");
    for ((&t, &p), &e) in est.sample_lengths.iter().zip(&est.error_rates).zip(&est.error_counts) {
        let _ = writeln!(out, "{t:>6} {p:>14.6e} {e:>10} {:>14}", fmt_opt(rate_over_t(p, t)));
    }
    let se = est.slope_std_error.map_or(String::new(), |s| format!(" ± {s:.6}"));
    let _ = writeln!(out, "fitted exponent: {}{se}", fmt_opt(est.fitted_exponent));
    let _ = writeln!(out, "predicted (min pairwise CI, pair {:?}): {:.6}", est.predicted_pair, est.predicted);
}

fn write_csv(path: &Path, full: &ExponentEstimate, reduced: Option<&ExponentEstimate>) -> CliResult<()> {
    let io_err = |e: csv::Error| CliError::Io { path: path.display().to_string(), message: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    let mut header = vec!["t", "error_rate", "errors", "exponent_estimate"];
    if reduced.is_some() {
        header.extend(["reduced_error_rate", "reduced_errors", "reduced_exponent_estimate"]);
    }
    w.write_record(&header).map_err(io_err)?;
    let cell = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.12e}"));
    for (k, &t) in full.sample_lengths.iter().enumerate() {
        let p = full.error_rates[k];
        let mut rec = vec![t.to_string(), format!("{p:.12e}"), full.error_counts[k].to_string(), cell(rate_over_t(p, t))];
        if let Some(r) = reduced {
            let q = r.error_rates[k];
            rec.extend([format!("{q:.12e}"), r.error_counts[k].to_string(), cell(rate_over_t(q, t))]);
        }
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::Io { path: path.display().to_string(), message: e.to_string() })
}

fn estimate_notes(label: &str, est: &ExponentEstimate, report: &mut Report) {
    for d in &est.diagnostics {
        report.note(format!("{label}: {d:?}"));
    }
}

pub fn simulate(opts: &SimulateOptions) -> CliResult<Report> {
    let config = read_simulation_config(&opts.config)?;
    let hyps = config.hypotheses()?;
    let seed = resolve_seed(opts.seed, config.seed)?;
    let full = estimate_error_exponent(&hyps, &config.t_grid, config.trials, seed)?;

    let reduced = match opts.reduce {
        Some(k) => {
            let (i, j) = full.predicted_pair;
            let best = chernoff_core::dimred::optimal_reduction(&hyps.models()[i], &hyps.models()[j], k)?;
            let projected: HypothesisSet = hyps.project(&best.matrix)?;
            let est = estimate_error_exponent(&projected, &config.t_grid, config.trials, seed)?;
            Some((best, est))
        }
        None => None,
    };

    let mut payload = json!({ "seed": seed, "full": estimate_json(&full) });
    let mut text = String::new();
    text_table("full model", &full, &mut text);
    if let Some((best, est)) = &reduced {
        payload["reduced"] = estimate_json(est);
        payload["reduced"]["n_out"] = json!(best.matrix.nrows());
        payload["reduced"]["matrix"] = to_value(rows(&best.matrix));
        let _ = writeln!(text);
        text_table(&format!("reduced to {} dimensions", best.matrix.nrows()), est, &mut text);
    }

    let mut report = Report::new(payload);
    report.text = Some(text);
    estimate_notes("full", &full, &mut report);
    if let Some((_, est)) = &reduced {
        estimate_notes("reduced", est, &mut report);
        if let (Some(fr), Some(ff)) = (est.fitted_exponent, full.fitted_exponent) {
            let noise = 3.0 * (est.slope_std_error.unwrap_or(0.0).powi(2) + full.slope_std_error.unwrap_or(0.0).powi(2)).sqrt();
            if fr > ff + noise {
                report.note(format!("reduced exponent {fr:.6} exceeds full exponent {ff:.6} beyond noise {noise:.6}"));
            }
        }
    }
    if let Some(path) = &opts.csv {
        write_csv(path, &full, reduced.as_ref().map(|(_, e)| e))?;
    }
    Ok(report)
}
