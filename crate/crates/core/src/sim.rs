//! Monte Carlo laboratory: AR(1) Gaussian covariates, the coefficient designs, the
//! two-stage logistic treatment/outcome model, evaluation metrics and the grid runner.
//!
//! Replication `r` of a cell with master seed `s` draws everything from seeds derived
//! from `derive_seed(s, r)`, so tables do not depend on thread count or scheduling.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{Context, EstimatorConfig, LambdaRule};
use crate::link::{Link, LinkFn};
use crate::methods::{run_method, Method};
use crate::rng::{derive_seed, stream};

const MAX_REDRAWS: u64 = 100;

/// Failure share above which a cell is flagged.
pub const FAILURE_FLAG: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sparsity {
    /// ∝ 1/j².
    Sparse,
    /// ∝ 1/√j.
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeShape {
    /// ∝ 1/√j.
    Dense,
    /// ∝ 1/(j + 9).
    Harmonic,
    /// ∝ (10 × 10, 1 × 90, 0, …).
    ModSparse,
    /// ∝ (1 × 10, 0, …).
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensityShape {
    /// ∝ 1/√j.
    Dense,
    /// ∝ (1 × 10, 0, …).
    Sparse,
}

/// Coefficient design. Outcome coefficients in (a) and (b) are ∝ 1/j²; (b) uses a
/// sparse unit-norm propensity; (c) uses unit norms throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DesignSpec {
    A { propensity: Sparsity, norm_d: f64, norm_y: f64 },
    B { norm_y: f64 },
    C { outcome: OutcomeShape, propensity: PropensityShape },
}

impl DesignSpec {
    pub fn label(&self) -> String {
        match self {
            DesignSpec::A { propensity, norm_d, norm_y } => {
                format!("a/{}/D{norm_d}/Y{norm_y}", if *propensity == Sparsity::Sparse { "sparse" } else { "dense" })
            }
            DesignSpec::B { norm_y } => format!("b/Y{norm_y}"),
            DesignSpec::C { outcome, propensity } => format!("c/{outcome:?}/{propensity:?}").to_lowercase(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub design: DesignSpec,
    pub n_sim: usize,
    pub seed: u64,
    pub zeta: f64,
}

impl SimConfig {
    /// The main benchmark cell: n = 500, p = 800, ρ = 0.5, sparse unit-norm coefficients.
    pub fn design_a(n_sim: usize, seed: u64) -> SimConfig {
        SimConfig {
            n: 500,
            p: 800,
            rho: 0.5,
            design: DesignSpec::A { propensity: Sparsity::Sparse, norm_d: 1.0, norm_y: 1.0 },
            n_sim,
            seed,
            zeta: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 20 {
            return Err(Error::Config(format!("n must be at least 20, got {}", self.n)));
        }
        if self.n_sim < 1 {
            return Err(Error::Config("n_sim must be at least 1".into()));
        }
        if self.p < 1 {
            return Err(Error::Config("p must be at least 1".into()));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::Config(format!("rho must lie in (-1, 1), got {}", self.rho)));
        }
        if !(0.0..=1.0).contains(&self.zeta) {
            return Err(Error::Config(format!("zeta must lie in [0, 1], got {}", self.zeta)));
        }
        coefficient_design(&self.design, self.p).map(|_| ())
    }
}

/// n draws of a zero-mean Gaussian vector with Σᵢⱼ = ρ^|i−j|.
pub fn ar1_gaussian_sample(n: usize, p: usize, rho: f64, seed: u64) -> Result<Array2<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(Error::Domain(format!("rho must lie in (-1, 1), got {rho}")));
    }
    let mut rng = stream(seed, 0xA1);
    let scale = (1.0 - rho * rho).sqrt();
    let mut x = Array2::zeros((n, p));
    for mut row in x.rows_mut() {
        let mut prev = 0.0;
        for (j, v) in row.iter_mut().enumerate() {
            let e: f64 = rng.sample(StandardNormal);
            prev = if j == 0 { e } else { rho * prev + scale * e };
            *v = prev;
        }
    }
    Ok(x)
}

fn rescale(v: Vec<f64>, norm: f64) -> Vec<f64> {
    let s = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.into_iter().map(|a| a * norm / s).collect()
}

fn shape(p: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    (1..=p).map(|j| f(j as f64)).collect()
}

fn leading(p: usize, k: usize) -> Vec<f64> {
    (0..p).map(|j| if j < k { 1.0 } else { 0.0 }).collect()
}

/// (β_Y, β_D) for a design, each rescaled to its configured Euclidean norm.
pub fn coefficient_design(design: &DesignSpec, p: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let inv_sq = |j: f64| 1.0 / (j * j);
    let inv_sqrt = |j: f64| 1.0 / j.sqrt();
    match *design {
        DesignSpec::A { propensity, norm_d, norm_y } => {
            if !(norm_d >= 0.0 && norm_y >= 0.0) {
                return Err(Error::Config("coefficient norms must be nonnegative".into()));
            }
            let d = match propensity {
                Sparsity::Sparse => shape(p, inv_sq),
                Sparsity::Dense => shape(p, inv_sqrt),
            };
            Ok((rescale(shape(p, inv_sq), norm_y), rescale(d, norm_d)))
        }
        DesignSpec::B { norm_y } => {
            if !(norm_y >= 0.0) {
                return Err(Error::Config("coefficient norms must be nonnegative".into()));
            }
            Ok((rescale(shape(p, inv_sq), norm_y), rescale(shape(p, inv_sq), 1.0)))
        }
        DesignSpec::C { outcome, propensity } => {
            if p < 100 {
                return Err(Error::Config(format!("design c needs p >= 100, got {p}")));
            }
            let y = match outcome {
                OutcomeShape::Dense => shape(p, inv_sqrt),
                OutcomeShape::Harmonic => shape(p, |j| 1.0 / (j + 9.0)),
                OutcomeShape::ModSparse => (0..p).map(|j| if j < 10 { 10.0 } else if j < 100 { 1.0 } else { 0.0 }).collect(),
                OutcomeShape::Sparse => leading(p, 10),
            };
            let d = match propensity {
                PropensityShape::Dense => shape(p, inv_sqrt),
                PropensityShape::Sparse => leading(p, 10),
            };
            Ok((rescale(y, 1.0), rescale(d, 1.0)))
        }
    }
}

/// Conditional ATET: mean over treated of g(xᵀβ_Y + 1) − g(xᵀβ_Y).
pub fn conditional_atet(x: &Array2<f64>, d: &[bool], beta_y: &[f64]) -> f64 {
    let g = Link::Logit;
    let (sum, count) = x.rows().into_iter().zip(d).filter(|(_, &t)| t).fold((0.0, 0usize), |(s, c), (r, _)| {
        let e: f64 = r.iter().zip(beta_y).map(|(a, b)| a * b).sum();
        (s + g.g(e + 1.0) - g.g(e), c + 1)
    });
    sum / count as f64
}

/// One simulated dataset and its conditional ATET. Draws with no treated or no control
/// units are redrawn from derived seeds.
pub fn generate_replication(config: &SimConfig, rep_seed: u64) -> Result<(Dataset, f64)> {
    let (beta_y, beta_d) = coefficient_design(&config.design, config.p)?;
    let g = Link::Logit;
    for attempt in 0..MAX_REDRAWS {
        let seed = derive_seed(rep_seed, attempt);
        let x = ar1_gaussian_sample(config.n, config.p, config.rho, seed)?;
        let mut rng = stream(seed, 0xB2);
        let mut d = Vec::with_capacity(config.n);
        let mut y = Vec::with_capacity(config.n);
        for row in x.rows() {
            let (mut iy, mut id) = (0.0, 0.0);
            for ((a, by), bd) in row.iter().zip(&beta_y).zip(&beta_d) {
                iy += a * by;
                id += a * bd;
            }
            let treated = rng.random::<f64>() < g.g(id);
            let shift = if treated { 1.0 } else { 0.0 };
            let outcome = rng.random::<f64>() < g.g(iy + shift);
            d.push(treated);
            y.push(if outcome { 1.0 } else { 0.0 });
        }
        let n_t = d.iter().filter(|&&t| t).count();
        if n_t == 0 || n_t == config.n {
            continue;
        }
        let tau = conditional_atet(&x, &d, &beta_y);
        return Ok((Dataset::new(x, d, y)?, tau));
    }
    Err(Error::InvalidData(format!("no replication with both arms in {MAX_REDRAWS} draws")))
}

fn squared_relative_errors(pairs: impl Iterator<Item = (f64, f64)>) -> Result<Vec<f64>> {
    pairs
        .map(|(est, tau)| {
            if tau == 0.0 {
                Err(Error::Domain("relative error undefined for a zero true effect".into()))
            } else {
                Ok(((est - tau) / tau).powi(2))
            }
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}

/// (1/n)Σ((τ̂ᵢ − τ)/τ)².
pub fn relative_mse(estimates: &[f64], tau_true: f64) -> Result<f64> {
    relative_mse_paired(&estimates.iter().map(|&e| (e, tau_true)).collect::<Vec<_>>())
}

/// Median of ((τ̂ᵢ − τ)/τ)².
pub fn median_se(estimates: &[f64], tau_true: f64) -> Result<f64> {
    median_se_paired(&estimates.iter().map(|&e| (e, tau_true)).collect::<Vec<_>>())
}

/// Relative MSE over (estimate, own true effect) pairs.
pub fn relative_mse_paired(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Domain("no estimates".into()));
    }
    let e = squared_relative_errors(pairs.iter().copied())?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

pub fn median_se_paired(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Domain("no estimates".into()));
    }
    Ok(median(squared_relative_errors(pairs.iter().copied())?))
}

/// One method's output in one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodRun {
    pub method: String,
    pub point: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub covered: bool,
    pub ci_length: f64,
    pub error: Option<String>,
}

impl MethodRun {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepResult {
    pub rep: usize,
    pub tau_true: f64,
    pub runs: Vec<MethodRun>,
    /// Largest KKT residual among the penalized fits in this replication.
    pub max_kkt: f64,
}

/// (coverage, mean CI length) of `method` over successful replications.
pub fn coverage_and_length(results: &[RepResult], method: &str) -> (f64, f64) {
    let runs: Vec<&MethodRun> = results.iter().flat_map(|r| r.runs.iter()).filter(|m| m.method == method && m.ok()).collect();
    if runs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = runs.len() as f64;
    let hits = runs.iter().filter(|m| m.covered).count() as f64;
    (hits / n, runs.iter().map(|m| m.ci_length).sum::<f64>() / n)
}

/// Per-method metrics for one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub relative_mse: f64,
    pub median_se: f64,
    pub coverage: f64,
    pub mean_ci_length: f64,
    pub replications: usize,
    pub failures: usize,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub config: SimConfig,
    pub summaries: Vec<MethodSummary>,
    pub reps: Vec<RepResult>,
}

impl CellResult {
    pub fn summary(&self, method: &str) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn max_kkt(&self) -> f64 {
        self.reps.iter().map(|r| r.max_kkt).fold(0.0, f64::max)
    }
}

fn summarize(reps: &[RepResult], labels: &[String]) -> Vec<MethodSummary> {
    labels
        .iter()
        .map(|label| {
            let runs: Vec<(f64, &MethodRun)> =
                reps.iter().flat_map(|r| r.runs.iter().map(move |m| (r.tau_true, m))).filter(|(_, m)| &m.method == label).collect();
            let pairs: Vec<(f64, f64)> = runs.iter().filter(|(_, m)| m.ok()).map(|(t, m)| (m.point, *t)).collect();
            let failures = runs.len() - pairs.len();
            let (coverage, mean_ci_length) = coverage_and_length(reps, label);
            MethodSummary {
                method: label.clone(),
                relative_mse: relative_mse_paired(&pairs).unwrap_or(f64::NAN),
                median_se: median_se_paired(&pairs).unwrap_or(f64::NAN),
                coverage,
                mean_ci_length,
                replications: pairs.len(),
                failures,
                flagged: failures as f64 > FAILURE_FLAG * runs.len() as f64,
            }
        })
        .collect()
}

fn record(label: String, result: Result<crate::estimators::Estimate>, tau: f64) -> MethodRun {
    match result {
        Ok(e) if e.point.is_finite() && e.variance.is_finite() => MethodRun {
            method: label,
            point: e.point,
            variance: e.variance,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
            covered: e.covers(tau),
            ci_length: e.ci_high - e.ci_low,
            error: None,
        },
        Ok(e) => failed(label, format!("non-finite estimate {} (variance {})", e.point, e.variance)),
        Err(err) => failed(label, err.to_string()),
    }
}

fn failed(label: String, message: String) -> MethodRun {
    MethodRun {
        method: label,
        point: f64::NAN,
        variance: f64::NAN,
        ci_low: f64::NAN,
        ci_high: f64::NAN,
        covered: false,
        ci_length: f64::NAN,
        error: Some(message),
    }
}

/// Estimator settings for replication `rep_seed`: split and cross-validation seeds are
/// derived from it so that every replication uses fresh folds.
pub fn replication_estimator(base: &EstimatorConfig, zeta: f64, rep_seed: u64) -> EstimatorConfig {
    let lambda = match base.lambda {
        LambdaRule::Cv { folds, .. } => LambdaRule::Cv { folds, seed: derive_seed(rep_seed, 0xC5) },
        fixed => fixed,
    };
    EstimatorConfig { zeta, lambda, seed: derive_seed(rep_seed, 0x5B), ..*base }
}

/// Runs every method on replication `rep` of a cell.
pub fn run_replication(config: &SimConfig, rep: usize, methods: &[Method], base: &EstimatorConfig) -> RepResult {
    let rep_seed = derive_seed(config.seed, rep as u64);
    let (data, tau) = match generate_replication(config, rep_seed) {
        Ok(v) => v,
        Err(e) => {
            return RepResult {
                rep,
                tau_true: f64::NAN,
                runs: methods.iter().map(|m| failed(m.label(), e.to_string())).collect(),
                max_kkt: 0.0,
            }
        }
    };
    let ctx = Context::new(&data, replication_estimator(base, config.zeta, rep_seed));
    let runs = methods.iter().map(|&m| record(m.label(), run_method(&ctx, m), tau)).collect();
    RepResult { rep, tau_true: tau, runs, max_kkt: ctx.max_kkt() }
}

/// Runs `n_sim` replications of one cell, in parallel when `threads` ≠ 1
/// (0 = all cores). Output order and values do not depend on `threads`.
pub fn run_cell(config: &SimConfig, methods: &[Method], base: &EstimatorConfig, threads: usize) -> Result<CellResult> {
    config.validate()?;
    if methods.is_empty() {
        return Err(Error::Config("no methods requested".into()));
    }
    let reps = parallel_map(config.n_sim, threads, |r| run_replication(config, r, methods, base))?;
    let labels: Vec<String> = methods.iter().map(Method::label).collect();
    Ok(CellResult { config: *config, summaries: summarize(&reps, &labels), reps })
}

/// Runs every cell of a grid.
pub fn run_experiment(grid: &[SimConfig], methods: &[Method], base: &EstimatorConfig, threads: usize) -> Result<Vec<CellResult>> {
    if grid.is_empty() {
        return Err(Error::Config("experiment grid is empty".into()));
    }
    grid.iter().map(|c| run_cell(c, methods, base, threads)).collect()
}

/// The ζ values swept by default.
pub const SWEEP_ZETAS: [f64; 5] = [0.2, 0.35, 0.5, 0.65, 0.8];

/// Proposed estimator at several ζ on shared replications (the outcome fits are shared
/// across ζ within a replication). Methods are labelled "DBk@ζ".
pub fn run_zeta_sweep(config: &SimConfig, zetas: &[f64], split: usize, base: &EstimatorConfig, threads: usize) -> Result<CellResult> {
    config.validate()?;
    if zetas.is_empty() || zetas.iter().any(|z| !(0.0..=1.0).contains(z)) {
        return Err(Error::Config("zeta values must be a nonempty subset of [0, 1]".into()));
    }
    let method = Method::Db(split);
    if !(1..=6).contains(&split) {
        return Err(Error::Config(format!("unknown split variant db{split}")));
    }
    let labels: Vec<String> = zetas.iter().map(|z| format!("{method}@{z}")).collect();
    let reps = parallel_map(config.n_sim, threads, |rep| {
        let rep_seed = derive_seed(config.seed, rep as u64);
        match generate_replication(config, rep_seed) {
            Err(e) => RepResult { rep, tau_true: f64::NAN, runs: labels.iter().map(|l| failed(l.clone(), e.to_string())).collect(), max_kkt: 0.0 },
            Ok((data, tau)) => {
                let mut ctx = Context::new(&data, replication_estimator(base, zetas[0], rep_seed));
                let runs = zetas
                    .iter()
                    .zip(&labels)
                    .map(|(&z, l)| {
                        ctx.config.zeta = z;
                        record(l.clone(), run_method(&ctx, method), tau)
                    })
                    .collect();
                RepResult { rep, tau_true: tau, runs, max_kkt: ctx.max_kkt() }
            }
        }
    })?;
    Ok(CellResult { config: *config, summaries: summarize(&reps, &labels), reps })
}

#[cfg(feature = "parallel")]
fn parallel_map<T: Send>(n: usize, threads: usize, f: impl Fn(usize) -> T + Sync + Send) -> Result<Vec<T>> {
    if threads == 1 {
        return Ok((0..n).map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(f).collect()))
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T: Send>(n: usize, _threads: usize, f: impl Fn(usize) -> T + Sync + Send) -> Result<Vec<T>> {
    Ok((0..n).map(f).collect())
}
