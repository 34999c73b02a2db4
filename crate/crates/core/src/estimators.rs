//! Debiased estimators of the control mean μ_c, the ATET and dense contrasts ξᵀβ_c,
//! with their variance estimates, confidence intervals and sample-splitting schemes.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::balance::{
    compute_target_moment, solve_weights_constrained, solve_weights_lagrange, BalanceProblem, SolveStatus,
    SolverOptions, WeightSolution,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm::{fit_lasso, fit_lasso_cv, Design, Family, GlmFit, LassoOptions, DEFAULT_FOLDS};
use crate::link::{Link, LinkFn};
use crate::stats::normal_quantile;

/// How the control sample is divided between fitting β̂ and forming the weighted correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    /// Fit on one half, weight on the other (fitting on the larger half when n_c is odd).
    SampleSplit,
    /// Each of k folds serves once as the weighting sample; fold estimates are averaged.
    CrossFit(usize),
    /// Fit and weight on all controls.
    NoSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitScheme {
    pub kind: SplitKind,
    pub seed: u64,
}

impl SplitScheme {
    pub fn new(kind: SplitKind, seed: u64) -> SplitScheme {
        SplitScheme { kind, seed }
    }

    /// The numbered variants: 1 = sample split, 2–5 = k-fold cross-fit, 6 = no split.
    pub fn db(index: usize, seed: u64) -> Result<SplitScheme> {
        let kind = match index {
            1 => SplitKind::SampleSplit,
            2..=5 => SplitKind::CrossFit(index),
            6 => SplitKind::NoSplit,
            _ => return Err(Error::Config(format!("unknown split variant db{index}"))),
        };
        Ok(SplitScheme { kind, seed })
    }

    pub fn label(&self) -> String {
        match self.kind {
            SplitKind::SampleSplit => "DB1".into(),
            SplitKind::CrossFit(k) => format!("DB{k}"),
            SplitKind::NoSplit => "DB6".into(),
        }
    }

    /// (fitting rows, weighting rows) pairs over the given control indices.
    pub fn partitions(&self, controls: &[usize]) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
        let n_c = controls.len();
        match self.kind {
            SplitKind::NoSplit => Ok(vec![(controls.to_vec(), controls.to_vec())]),
            SplitKind::SampleSplit => {
                if n_c < 2 {
                    return Err(Error::Config("sample splitting needs at least 2 controls".into()));
                }
                let perm = self.permuted(controls);
                let cut = n_c.div_ceil(2);
                let mut fit = perm[..cut].to_vec();
                let mut weight = perm[cut..].to_vec();
                fit.sort_unstable();
                weight.sort_unstable();
                Ok(vec![(fit, weight)])
            }
            SplitKind::CrossFit(k) => {
                if k < 2 || k > n_c {
                    return Err(Error::Config(format!("cross-fitting needs 2 <= k <= n_c = {n_c}, got {k}")));
                }
                let perm = self.permuted(controls);
                let mut folds = vec![Vec::new(); k];
                for (pos, &i) in perm.iter().enumerate() {
                    folds[pos % k].push(i);
                }
                Ok((0..k)
                    .map(|f| {
                        let mut weight = folds[f].clone();
                        weight.sort_unstable();
                        let mut fit: Vec<usize> = (0..k).filter(|&g| g != f).flat_map(|g| folds[g].clone()).collect();
                        fit.sort_unstable();
                        (fit, weight)
                    })
                    .collect())
            }
        }
    }

    fn permuted(&self, rows: &[usize]) -> Vec<usize> {
        let mut perm = rows.to_vec();
        perm.shuffle(&mut crate::rng::stream(self.seed, 0x5E11_7000));
        perm
    }
}

impl fmt::Display for SplitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// How the lasso penalty is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    /// K-fold cross-validation, minimum mean held-out deviance.
    Cv { folds: usize, seed: u64 },
    Fixed(f64),
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::Cv { folds: DEFAULT_FOLDS, seed: 0 }
    }
}

/// Knobs for the constrained (hard imbalance bound) program.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedForm {
    /// Imbalance bound C₃√(log p / n_w).
    pub c3: f64,
    /// Weight bound C₄√(log n_w)/n_w.
    pub c4: f64,
    /// Also require Σγ = 1 and γ ≥ 0.
    pub simplex: bool,
}

impl Default for ConstrainedForm {
    fn default() -> Self {
        ConstrainedForm { c3: 1.0, c4: 1.0, simplex: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ProgramForm {
    Lagrange { zeta: f64 },
    Constrained(ConstrainedForm),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub link: Link,
    pub zeta: f64,
    pub lambda: LambdaRule,
    pub lasso: LassoOptions,
    pub solver: SolverOptions,
    /// Propensity trimming bounds used by the inverse-weighting baselines.
    pub trim: (f64, f64),
    pub level: f64,
    /// Seed for sample splits and cross-fitting folds.
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            link: Link::Logit,
            zeta: 0.5,
            lambda: LambdaRule::default(),
            lasso: LassoOptions::default(),
            solver: SolverOptions::default(),
            trim: (0.05, 0.95),
            level: 0.95,
            seed: 0,
        }
    }
}

/// Which nuisance model a cached fit belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    /// Outcome on covariates among controls, with the configured link.
    Outcome,
    /// Treatment on covariates, logistic.
    Propensity,
    /// Squared-error lasso of the outcome among controls, with intercept.
    Linear,
}

/// One dataset plus settings, with memoized nuisance fits so that estimators sharing a
/// fitting sample (for example regression imputation and the no-split variant) fit once.
pub struct Context<'a> {
    pub data: &'a Dataset,
    pub config: EstimatorConfig,
    cache: RefCell<HashMap<(Model, Vec<usize>), Rc<GlmFit>>>,
    max_kkt: RefCell<f64>,
}

impl<'a> Context<'a> {
    pub fn new(data: &'a Dataset, config: EstimatorConfig) -> Context<'a> {
        Context { data, config, cache: RefCell::new(HashMap::new()), max_kkt: RefCell::new(0.0) }
    }

    /// Penalized fit of `model` on `rows`, computed once per (model, rows).
    pub fn fit(&self, model: Model, rows: &[usize]) -> Result<Rc<GlmFit>> {
        let key = (model, rows.to_vec());
        if let Some(f) = self.cache.borrow().get(&key) {
            return Ok(Rc::clone(f));
        }
        let design = Design::from_rows(self.data.x(), rows);
        let (family, y, opts) = match model {
            Model::Outcome => (Family::Binomial(self.config.link), self.data.outcomes(rows), self.config.lasso),
            Model::Propensity => {
                let d = self.data.d();
                (Family::Binomial(Link::Logit), rows.iter().map(|&i| if d[i] { 1.0 } else { 0.0 }).collect(), self.config.lasso)
            }
            Model::Linear => (Family::Gaussian, self.data.outcomes(rows), LassoOptions { intercept: true, ..self.config.lasso }),
        };
        let fit = match self.config.lambda {
            LambdaRule::Fixed(l) => fit_lasso(&design, &y, &family, l, &opts)?,
            LambdaRule::Cv { folds, seed } => fit_lasso_cv(&design, &y, &family, folds.min(rows.len()), seed, &opts)?,
        };
        {
            let mut m = self.max_kkt.borrow_mut();
            *m = m.max(fit.kkt_residual);
        }
        let fit = Rc::new(fit);
        self.cache.borrow_mut().insert(key, Rc::clone(&fit));
        Ok(fit)
    }

    /// Largest KKT residual among all fits made so far.
    pub fn max_kkt(&self) -> f64 {
        *self.max_kkt.borrow()
    }

    pub fn fits_computed(&self) -> usize {
        self.cache.borrow().len()
    }
}

/// Solver and fit diagnostics attached to an estimate.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Largest sup-norm imbalance over folds.
    pub imbalance_sup: Option<f64>,
    /// Σγ²w, summed over folds with the same 1/k² scaling as the variance.
    pub variance_term: Option<f64>,
    /// Worst solver status over folds.
    pub status: Option<SolveStatus>,
    pub solver_iterations: usize,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    fn absorb(&mut self, sol: &WeightSolution, scale: f64) {
        self.imbalance_sup = Some(self.imbalance_sup.unwrap_or(0.0).max(sol.imbalance_sup));
        self.variance_term = Some(self.variance_term.unwrap_or(0.0) + scale * sol.variance_term);
        self.status = Some(worst(self.status, sol.status));
        self.solver_iterations += sol.iterations;
    }
}

fn worst(a: Option<SolveStatus>, b: SolveStatus) -> SolveStatus {
    let rank = |s: SolveStatus| match s {
        SolveStatus::Optimal => 0,
        SolveStatus::MaxIter => 1,
        SolveStatus::Infeasible => 2,
    };
    match a {
        Some(a) if rank(a) >= rank(b) => a,
        _ => b,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub method: String,
    pub point: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub split: Option<SplitScheme>,
    pub diagnostics: Diagnostics,
}

impl Estimate {
    pub fn new(method: impl Into<String>, point: f64, variance: f64, level: f64) -> Result<Estimate> {
        let (ci_low, ci_high) = confidence_interval(point, variance, level)?;
        Ok(Estimate {
            method: method.into(),
            point,
            variance,
            ci_low,
            ci_high,
            split: None,
            diagnostics: Diagnostics::default(),
        })
    }

    pub fn std_error(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

/// point ± z·√variance with z the (1+level)/2 standard normal quantile.
pub fn confidence_interval(point: f64, variance: f64, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("confidence level must lie in (0, 1), got {level}")));
    }
    if !(variance >= 0.0) {
        return Err(Error::Domain(format!("variance must be nonnegative, got {variance}")));
    }
    let half = normal_quantile(0.5 + level / 2.0) * variance.sqrt();
    Ok((point - half, point + half))
}

/// (v̂_c, v̂_t, v̂_τ): v̂_c = Σγᵢ²wᵢ with wᵢ = g(1−g) on the weighting rows, and
/// v̂_t = (1/n_t²)Σ(Yᵢ − Ȳ_t)² over treated outcomes.
pub fn variance_components(gamma: &[f64], w: &[f64], treated_outcomes: &[f64]) -> (f64, f64, f64) {
    let v_c: f64 = gamma.iter().zip(w).map(|(g, w)| g * g * w).sum();
    let v_t = sample_mean_variance(treated_outcomes);
    (v_c, v_t, v_c + v_t)
}

/// (1/m²)Σ(yᵢ − ȳ)², the plug-in variance of a sample mean.
pub fn sample_mean_variance(y: &[f64]) -> f64 {
    let m = y.len() as f64;
    if y.is_empty() {
        return 0.0;
    }
    let mean = y.iter().sum::<f64>() / m;
    y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m * m)
}

/// Covariate rows, with a leading column of ones when the fit has an intercept so that
/// the intercept direction is balanced too.
pub fn covariate_rows(data: &Dataset, rows: &[usize], with_intercept: bool) -> Array2<f64> {
    let x = data.rows(rows);
    if !with_intercept {
        return x;
    }
    let mut out = Array2::ones((rows.len(), x.ncols() + 1));
    out.slice_mut(ndarray::s![.., 1..]).assign(&x);
    out
}

pub fn coefficients(fit: &GlmFit, with_intercept: bool) -> Vec<f64> {
    if with_intercept {
        std::iter::once(fit.intercept).chain(fit.beta.iter().copied()).collect()
    } else {
        fit.beta.clone()
    }
}

/// One weighting-sample evaluation of the debiased control mean.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldEstimate {
    /// (1/n_t)Σ_treated g(xᵀβ̂).
    pub plug_in: f64,
    /// Σγᵢ(Yᵢ − g(xᵢᵀβ̂)) over the weighting rows.
    pub correction: f64,
    pub mu_c: f64,
    pub v_c: f64,
    pub solution: WeightSolution,
    pub xi: Vec<f64>,
}

/// Balancing weights for a given coefficient vector (which includes the intercept as
/// its first entry when `x_*` carry a ones column).
pub fn proposed_weights(
    x_treated: &Array2<f64>,
    x_weight: &Array2<f64>,
    beta: &[f64],
    link: &dyn LinkFn,
    form: ProgramForm,
    solver: &SolverOptions,
) -> Result<(BalanceProblem, WeightSolution)> {
    let xi = compute_target_moment(x_treated.view(), beta, link);
    weights_for_target(xi, x_weight, beta, link, form, solver)
}

fn weights_for_target(
    xi: Vec<f64>,
    x_weight: &Array2<f64>,
    beta: &[f64],
    link: &dyn LinkFn,
    form: ProgramForm,
    solver: &SolverOptions,
) -> Result<(BalanceProblem, WeightSolution)> {
    let n_w = x_weight.nrows() as f64;
    match form {
        ProgramForm::Lagrange { zeta } => {
            let problem = BalanceProblem::from_fit(x_weight.view(), beta, link, xi, n_w.ln() / n_w)?;
            let sol = solve_weights_lagrange(&problem, zeta, solver)?;
            if sol.status == SolveStatus::Infeasible {
                return Err(Error::Infeasible { min_imbalance: f64::NAN, bound: problem.cap });
            }
            Ok((problem, sol))
        }
        ProgramForm::Constrained(c) => {
            let p = x_weight.ncols().max(2) as f64;
            let bound = c.c3 * (p.ln() / n_w).sqrt();
            let cap = c.c4 * n_w.ln().sqrt() / n_w;
            let problem = BalanceProblem::from_fit(x_weight.view(), beta, link, xi, cap)?;
            let sol = solve_weights_constrained(&problem, bound, cap, c.simplex, solver)?;
            let sol = crate::balance::require_feasible(sol, bound)?;
            Ok((problem, sol))
        }
    }
}

/// μ̂_c for a given coefficient vector: plug-in over the treated rows plus the
/// γ-weighted residuals over `weight_rows`. Coefficients come from the caller, which
/// makes this the injection point for fixed or true β.
pub fn mu_c_from_beta(
    data: &Dataset,
    beta: &[f64],
    intercept: f64,
    link: &dyn LinkFn,
    weight_rows: &[usize],
    zeta: f64,
    solver: &SolverOptions,
) -> Result<FoldEstimate> {
    let with_b0 = intercept != 0.0;
    let coef: Vec<f64> = if with_b0 { std::iter::once(intercept).chain(beta.iter().copied()).collect() } else { beta.to_vec() };
    let treated = data.treated();
    let xt = covariate_rows(data, &treated, with_b0);
    let xw = covariate_rows(data, weight_rows, with_b0);
    let (problem, sol) = proposed_weights(&xt, &xw, &coef, link, ProgramForm::Lagrange { zeta }, solver)?;
    let plug_in = mean_prediction(&xt, &coef, link);
    let correction = weighted_residual(&xw, &data.outcomes(weight_rows), &coef, link, &sol.gamma);
    let v_c = problem.variance_term(&sol.gamma);
    Ok(FoldEstimate { plug_in, correction, mu_c: plug_in + correction, v_c, xi: problem.xi.clone(), solution: sol })
}

pub fn mean_prediction(x: &Array2<f64>, coef: &[f64], link: &dyn LinkFn) -> f64 {
    let n = x.nrows() as f64;
    x.axis_iter(Axis(0)).map(|r| link.g(r.iter().zip(coef).map(|(a, b)| a * b).sum())).sum::<f64>() / n
}

pub fn weighted_residual(x: &Array2<f64>, y: &[f64], coef: &[f64], link: &dyn LinkFn, gamma: &[f64]) -> f64 {
    x.axis_iter(Axis(0))
        .zip(y)
        .zip(gamma)
        .map(|((r, &yi), &g)| g * (yi - link.g(r.iter().zip(coef).map(|(a, b)| a * b).sum())))
        .sum()
}

/// Debiased μ̂_c with its variance v̂_c, aggregated over the scheme's folds.
pub struct MuEstimate {
    pub mu_c: f64,
    pub v_c: f64,
    pub folds: Vec<FoldEstimate>,
    pub diagnostics: Diagnostics,
}

pub fn estimate_mu_c(ctx: &Context<'_>, scheme: &SplitScheme) -> Result<MuEstimate> {
    let data = ctx.data;
    let parts = scheme.partitions(&data.controls())?;
    let k = parts.len() as f64;
    let mut folds = Vec::with_capacity(parts.len());
    let mut diag = Diagnostics::default();
    for (fit_rows, weight_rows) in &parts {
        let fit = ctx.fit(Model::Outcome, fit_rows)?;
        let f = mu_c_from_beta(data, &fit.beta, fit.intercept, &ctx.config.link, weight_rows, ctx.config.zeta, &ctx.config.solver)?;
        diag.absorb(&f.solution, 1.0 / (k * k));
        let xi_norm = f.xi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if xi_norm < 1e-6 {
            diag.warnings.push(format!("target moment nearly zero (sup norm {xi_norm:.2e})"));
        }
        folds.push(f);
    }
    let mu_c = folds.iter().map(|f| f.mu_c).sum::<f64>() / k;
    let v_c = folds.iter().map(|f| f.v_c).sum::<f64>() / (k * k);
    Ok(MuEstimate { mu_c, v_c, folds, diagnostics: diag })
}

/// τ̂ = Ȳ_t − μ̂_c with v̂_τ = v̂_c + v̂_t.
pub fn estimate_atet(ctx: &Context<'_>, scheme: &SplitScheme) -> Result<Estimate> {
    let data = ctx.data;
    let mu = estimate_mu_c(ctx, scheme)?;
    let yt = data.outcomes(&data.treated());
    let y_bar = yt.iter().sum::<f64>() / yt.len() as f64;
    let v_t = sample_mean_variance(&yt);
    let mut est = Estimate::new(scheme.label(), y_bar - mu.mu_c, mu.v_c + v_t, ctx.config.level)?;
    est.split = Some(*scheme);
    est.diagnostics = mu.diagnostics;
    Ok(est)
}

/// Alias of [`estimate_atet`] that makes the splitting scheme the primary argument.
pub fn run_with_split(data: &Dataset, scheme: &SplitScheme, config: &EstimatorConfig) -> Result<Estimate> {
    estimate_atet(&Context::new(data, *config), scheme)
}

/// θ̂ = ξᵀβ̂ + Σγᵢ(Yᵢ − g(xᵢᵀβ̂)) for a user-supplied contrast ξ, with v̂ = Σγᵢ²g(1−g).
pub fn estimate_dense_contrast(ctx: &Context<'_>, xi: &[f64], scheme: &SplitScheme, form: ProgramForm) -> Result<Estimate> {
    let data = ctx.data;
    if xi.len() != data.p() {
        return Err(Error::Domain(format!("contrast has length {}, expected {}", xi.len(), data.p())));
    }
    if xi.iter().all(|&v| v == 0.0) {
        return Err(Error::Domain("contrast vector must be nonzero".into()));
    }
    let parts = scheme.partitions(&data.controls())?;
    let k = parts.len() as f64;
    let (mut theta, mut var) = (0.0, 0.0);
    let mut diag = Diagnostics::default();
    for (fit_rows, weight_rows) in &parts {
        let fit = ctx.fit(Model::Outcome, fit_rows)?;
        let with_b0 = ctx.config.lasso.intercept;
        let coef = coefficients(&fit, with_b0);
        let xw = covariate_rows(data, weight_rows, with_b0);
        let target: Vec<f64> = if with_b0 { std::iter::once(0.0).chain(xi.iter().copied()).collect() } else { xi.to_vec() };
        let (problem, sol) = weights_for_target(target.clone(), &xw, &coef, &ctx.config.link, form, &ctx.config.solver)?;
        let lin: f64 = target.iter().zip(&coef).map(|(a, b)| a * b).sum();
        theta += lin + weighted_residual(&xw, &data.outcomes(weight_rows), &coef, &ctx.config.link, &sol.gamma);
        var += problem.variance_term(&sol.gamma);
        diag.absorb(&sol, 1.0 / (k * k));
    }
    let mut est = Estimate::new("contrast", theta / k, var / (k * k), ctx.config.level)?;
    est.split = Some(*scheme);
    est.diagnostics = diag;
    Ok(est)
}

/// Which average effect to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Average effect on the treated.
    Atet,
    /// Average effect on the controls: the treated-arm analogue run with roles swapped.
    Atec,
    /// Average effect over all units: n_t/n·ATET + n_c/n·ATEC.
    Ate,
}

/// ATET, ATEC or ATE with the proposed estimator. ATEC and ATE model Y(1) on the
/// treated units with the same machinery; variances of the two pieces are combined as
/// if independent.
pub fn estimate_target(data: &Dataset, config: &EstimatorConfig, scheme: &SplitScheme, target: Target) -> Result<Estimate> {
    let atet = || estimate_atet(&Context::new(data, *config), scheme);
    let atec = || -> Result<Estimate> {
        let flipped = data.with_flipped_treatment();
        let e = estimate_atet(&Context::new(&flipped, *config), scheme)?;
        let mut out = Estimate::new(scheme.label(), -e.point, e.variance, config.level)?;
        out.split = e.split;
        out.diagnostics = e.diagnostics;
        Ok(out)
    };
    match target {
        Target::Atet => atet(),
        Target::Atec => atec(),
        Target::Ate => {
            let (t, c) = (atet()?, atec()?);
            let n = data.n() as f64;
            let (wt, wc) = (data.n_treated() as f64 / n, data.n_control() as f64 / n);
            let mut out =
                Estimate::new(scheme.label(), wt * t.point + wc * c.point, wt * wt * t.variance + wc * wc * c.variance, config.level)?;
            out.split = Some(*scheme);
            out.diagnostics.warnings = t.diagnostics.warnings.into_iter().chain(c.diagnostics.warnings).collect();
            Ok(out)
        }
    }
}
