//! L1-penalized binary GLMs (and the squared-error lasso used by linear baselines).
//!
//! The solver is a proximal Newton method: each outer step builds the Fisher-scoring
//! quadratic expansion of the loss in the linear index and minimizes it plus the L1
//! penalty by cyclic coordinate descent with soft-thresholding, followed by a
//! backtracking line search on the true objective. Paths over λ use warm starts and
//! the sequential strong rule, with a KKT check over all coordinates before a point
//! is accepted.

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{Link, LinkFn};

/// Probabilities are clamped into [CLAMP, 1 − CLAMP] before taking logs.
pub const PROB_CLAMP: f64 = 1e-10;

/// Number of λ values in a cross-validation grid.
pub const GRID_LEN: usize = 100;
/// Smallest grid value as a fraction of λ_max.
pub const GRID_MIN_RATIO: f64 = 1e-3;
pub const DEFAULT_FOLDS: usize = 10;
const MAX_REFOLDS: usize = 10;

/// Response model for the penalized fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Family {
    /// Bernoulli likelihood with the given link.
    Binomial(Link),
    /// Squared-error loss ½(y − η)², i.e. the ordinary lasso.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    /// Fit an unpenalized intercept.
    pub intercept: bool,
    pub max_outer: usize,
    /// Outer loop stops once the objective decreases by less than this...
    pub outer_tol: f64,
    /// ...and the KKT residual is below this.
    pub kkt_tol: f64,
    /// Inner coordinate descent stops when every scaled coefficient change √a_j·|Δβ_j|
    /// falls below this.
    pub inner_tol: f64,
    pub max_sweeps: usize,
}

impl LassoOptions {
    /// Tolerances for the fold fits inside cross-validation, which only rank λ values;
    /// the final refit uses `self` unchanged.
    pub fn for_cv(&self) -> LassoOptions {
        LassoOptions {
            inner_tol: self.inner_tol.max(1e-4),
            kkt_tol: self.kkt_tol.max(1e-5),
            outer_tol: self.outer_tol.max(1e-7),
            ..*self
        }
    }
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            intercept: false,
            max_outer: 1000,
            outer_tol: 1e-8,
            kkt_tol: 1e-7,
            inner_tol: 1e-10,
            max_sweeps: 100_000,
        }
    }
}

/// A penalized fit at one λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub beta: Vec<f64>,
    /// Zero unless the fit was run with an intercept.
    pub intercept: f64,
    pub lambda: f64,
    /// Mean loss plus λ‖β‖₁ at the solution.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest KKT violation at the returned point.
    pub kkt_residual: f64,
}

impl GlmFit {
    pub fn zero(p: usize, lambda: f64) -> GlmFit {
        GlmFit {
            beta: vec![0.0; p],
            intercept: 0.0,
            lambda,
            objective: f64::NAN,
            iterations: 0,
            converged: true,
            kkt_residual: 0.0,
        }
    }

    /// Linear index xᵀβ + b₀ for one row.
    pub fn index(&self, row: &[f64]) -> f64 {
        self.intercept + dot(row, &self.beta)
    }
}

/// Column-major copy of a design matrix, so coordinate updates read contiguous memory.
#[derive(Debug, Clone)]
pub struct Design {
    n: usize,
    p: usize,
    cols: Vec<f64>,
}

impl Design {
    pub fn new(x: ArrayView2<'_, f64>) -> Design {
        let (n, p) = x.dim();
        let mut cols = Vec::with_capacity(n * p);
        for j in 0..p {
            cols.extend(x.column(j).iter());
        }
        Design { n, p, cols }
    }

    /// Design restricted to `rows` of `x`.
    pub fn from_rows(x: ArrayView2<'_, f64>, rows: &[usize]) -> Design {
        let p = x.ncols();
        let n = rows.len();
        let mut cols = Vec::with_capacity(n * p);
        for j in 0..p {
            let col = x.column(j);
            cols.extend(rows.iter().map(|&i| col[i]));
        }
        Design { n, p, cols }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.cols[j * self.n..(j + 1) * self.n]
    }

    pub fn index(&self, beta: &[f64], b0: f64) -> Vec<f64> {
        let mut eta = vec![b0; self.n];
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                axpy(b, self.col(j), &mut eta);
            }
        }
        eta
    }

    /// Xᵀv.
    pub fn t_dot(&self, v: &[f64]) -> Vec<f64> {
        (0..self.p).map(|j| dot(self.col(j), v)).collect()
    }

    fn subset(&self, rows: &[usize]) -> Design {
        let mut cols = Vec::with_capacity(rows.len() * self.p);
        for j in 0..self.p {
            let c = self.col(j);
            cols.extend(rows.iter().map(|&i| c[i]));
        }
        Design { n: rows.len(), p: self.p, cols }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..n {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn dot3(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let n = a.len();
    let chunks = n / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i] * c[i];
        acc[1] += a[i + 1] * b[i + 1] * c[i + 1];
        acc[2] += a[i + 2] * b[i + 2] * c[i + 2];
        acc[3] += a[i + 3] * b[i + 3] * c[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..n {
        s += a[i] * b[i] * c[i];
    }
    s
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

fn l1(beta: &[f64]) -> f64 {
    beta.iter().map(|b| b.abs()).sum()
}

/// Per-observation loss, derivative in the index, and Fisher weight.
#[inline]
fn obs_terms(family: &Family, eta: f64, y: f64) -> (f64, f64, f64) {
    match family {
        Family::Gaussian => {
            let r = eta - y;
            (0.5 * r * r, r, 1.0)
        }
        Family::Binomial(link) => {
            let g = link.g(eta);
            let comp = link.complement(eta);
            let loss = -(y * g.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln()
                + (1.0 - y) * comp.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln());
            match link {
                Link::Logit => (loss, g - y, (g * comp).max(1e-12)),
                _ => {
                    let g1 = link.g1(eta);
                    let den = (g * comp).max(1e-300);
                    (loss, g1 * (g - y) / den, (g1 * g1 / den).max(1e-12))
                }
            }
        }
    }
}

fn mean_loss(family: &Family, eta: &[f64], y: &[f64]) -> f64 {
    eta.iter().zip(y).map(|(&e, &yi)| obs_terms(family, e, yi).0).sum::<f64>() / eta.len() as f64
}

/// Deviance contribution of one held-out observation.
fn obs_deviance(family: &Family, eta: f64, y: f64) -> f64 {
    2.0 * obs_terms(family, eta, y).0
}

/// ℓ_g(β) = −(1/n)Σ yᵢ log[g/(1−g)] − (1/n)Σ log(1−g) at xᵢᵀβ, probabilities clamped.
pub fn glm_loss(beta: &[f64], x: ArrayView2<'_, f64>, y: &[f64], link: &Link) -> f64 {
    let eta: Vec<f64> = x.rows().into_iter().map(|r| r.dot(&ndarray::ArrayView1::from(beta))).collect();
    mean_loss(&Family::Binomial(*link), &eta, y)
}

/// Analytic gradient of [`glm_loss`].
pub fn glm_loss_gradient(beta: &[f64], x: ArrayView2<'_, f64>, y: &[f64], link: &Link) -> Vec<f64> {
    let design = Design::new(x);
    let eta = design.index(beta, 0.0);
    let family = Family::Binomial(*link);
    let n = y.len() as f64;
    let s: Vec<f64> = eta.iter().zip(y).map(|(&e, &yi)| obs_terms(&family, e, yi).1 / n).collect();
    design.t_dot(&s)
}

/// ‖∇ℓ(0)‖_∞ (with the intercept profiled out when fitted): the smallest λ whose
/// solution is identically zero.
pub fn lambda_max(design: &Design, y: &[f64], family: &Family, opts: &LassoOptions) -> f64 {
    let b0 = if opts.intercept { null_intercept(design, y, family, opts) } else { 0.0 };
    let n = design.n() as f64;
    let s: Vec<f64> = y.iter().map(|&yi| obs_terms(family, b0, yi).1 / n).collect();
    design.t_dot(&s).iter().fold(0.0f64, |m, g| m.max(g.abs()))
}

fn null_intercept(design: &Design, y: &[f64], family: &Family, opts: &LassoOptions) -> f64 {
    let zero = vec![0.0; design.p()];
    let mut state = State { beta: zero, b0: 0.0, eta: vec![0.0; design.n()] };
    let none = vec![false; design.p()];
    solve_point(design, y, family, f64::INFINITY, &mut state, &none, opts);
    state.b0
}

struct State {
    beta: Vec<f64>,
    b0: f64,
    eta: Vec<f64>,
}

struct PointDiag {
    objective: f64,
    iterations: usize,
    converged: bool,
    kkt: f64,
    grad: Vec<f64>,
}

/// Minimizes loss + λ‖β‖₁ starting from `state`, only updating coordinates in
/// `candidates` during descent; coordinates outside that set that violate KKT are
/// added and the solve continues.
fn solve_point(
    design: &Design,
    y: &[f64],
    family: &Family,
    lambda: f64,
    state: &mut State,
    candidates: &[bool],
    opts: &LassoOptions,
) -> PointDiag {
    let n = design.n();
    let p = design.p();
    let inv_n = 1.0 / n as f64;
    let mut cand = candidates.to_vec();
    let pen = |b: &[f64]| if lambda.is_finite() { lambda * l1(b) } else { 0.0 };

    let mut s = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut rho = vec![0.0; n];
    let mut a = vec![f64::NAN; p];

    let mut obj = mean_loss(family, &state.eta, y) + pen(&state.beta);
    let mut iterations = 0;
    let mut converged = false;
    let mut stalls = 0;
    let mut grad = vec![0.0; p];
    let mut kkt = f64::INFINITY;

    for it in 1..=opts.max_outer {
        iterations = it;
        for i in 0..n {
            let (_, si, vi) = obs_terms(family, state.eta[i], y[i]);
            s[i] = si * inv_n;
            v[i] = vi * inv_n;
            rho[i] = -s[i] / v[i];
        }
        a.iter_mut().for_each(|aj| *aj = f64::NAN);

        let mut new_beta = state.beta.clone();
        let mut new_b0 = state.b0;
        coordinate_descent(design, &v, &mut rho, &mut new_beta, &mut new_b0, &mut a, lambda, &cand, opts);

        // Δη = r − ρ where r = −s/v is the working residual at Δ = 0.
        let delta_eta: Vec<f64> = (0..n).map(|i| -s[i] / v[i] - rho[i]).collect();
        let d_beta: Vec<f64> = new_beta.iter().zip(&state.beta).map(|(nb, b)| nb - b).collect();
        let d_b0 = new_b0 - state.b0;
        let slope = dot(&s, &delta_eta) + pen(&new_beta) - pen(&state.beta);

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let eta_t: Vec<f64> = state.eta.iter().zip(&delta_eta).map(|(e, d)| e + t * d).collect();
            let beta_t: Vec<f64> = state.beta.iter().zip(&d_beta).map(|(b, d)| b + t * d).collect();
            let obj_t = mean_loss(family, &eta_t, y) + pen(&beta_t);
            if obj_t <= obj + 1e-4 * t * slope.min(0.0) || (slope >= 0.0 && obj_t <= obj) {
                accepted = Some((eta_t, beta_t, obj_t));
                break;
            }
            t *= 0.5;
        }
        let decrease = match accepted {
            Some((eta_t, beta_t, obj_t)) => {
                state.eta = eta_t;
                state.beta = beta_t;
                state.b0 += t * d_b0;
                let dec = obj - obj_t;
                obj = obj_t;
                dec
            }
            None => 0.0,
        };

        // Full gradient and KKT residual at the new point.
        for i in 0..n {
            s[i] = obs_terms(family, state.eta[i], y[i]).1 * inv_n;
        }
        grad = design.t_dot(&s);
        kkt = kkt_residual(&grad, &state.beta, lambda);
        if opts.intercept {
            kkt = kkt.max(s.iter().sum::<f64>().abs());
        }
        let mut grew = false;
        for j in 0..p {
            if !cand[j] && grad[j].abs() > lambda {
                cand[j] = true;
                grew = true;
            }
        }

        if !grew && decrease <= opts.outer_tol && kkt <= opts.kkt_tol {
            converged = true;
            break;
        }
        if decrease <= 0.0 && !grew {
            stalls += 1;
            if stalls >= 3 {
                break;
            }
        } else {
            stalls = 0;
        }
    }
    PointDiag { objective: obj, iterations, converged, kkt, grad }
}

fn kkt_residual(grad: &[f64], beta: &[f64], lambda: f64) -> f64 {
    grad.iter()
        .zip(beta)
        .map(|(&g, &b)| {
            if !lambda.is_finite() {
                0.0
            } else if b == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g + lambda * b.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Coordinate descent on ½Σvᵢ(ρᵢ)² + λ‖β‖₁ where ρ is the working residual, updated
/// in place. Alternates full sweeps over `cand` with sweeps over the nonzero set.
#[allow(clippy::too_many_arguments)]
fn coordinate_descent(
    design: &Design,
    v: &[f64],
    rho: &mut [f64],
    beta: &mut [f64],
    b0: &mut f64,
    a: &mut [f64],
    lambda: f64,
    cand: &[bool],
    opts: &LassoOptions,
) -> usize {
    let p = design.p();
    let v_sum: f64 = v.iter().sum();
    let mut sweeps = 0;
    let tol2 = opts.inner_tol * opts.inner_tol;

    let mut sweep = |coords: &mut dyn Iterator<Item = usize>, beta: &mut [f64], b0: &mut f64, rho: &mut [f64]| {
        let mut max_change = 0.0f64;
        for j in coords {
            let xj = design.col(j);
            if a[j].is_nan() {
                a[j] = dot3(xj, xj, v);
            }
            let aj = a[j];
            if aj <= 0.0 {
                continue;
            }
            let old = beta[j];
            let c = dot3(xj, v, rho) + aj * old;
            let new = if lambda.is_finite() { soft_threshold(c, lambda) / aj } else { 0.0 };
            if new != old {
                axpy(-(new - old), xj, rho);
                beta[j] = new;
                max_change = max_change.max(aj * (new - old) * (new - old));
            }
        }
        if opts.intercept {
            let shift = dot(v, rho) / v_sum;
            if shift != 0.0 {
                rho.iter_mut().for_each(|r| *r -= shift);
                *b0 += shift;
                max_change = max_change.max(v_sum * shift * shift);
            }
        }
        max_change
    };

    loop {
        sweeps += 1;
        let full = sweep(&mut (0..p).filter(|&j| cand[j]), beta, b0, rho);
        if full <= tol2 || sweeps >= opts.max_sweeps {
            break;
        }
        loop {
            let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
            sweeps += 1;
            let ch = sweep(&mut active.into_iter(), beta, b0, rho);
            if ch <= tol2 || sweeps >= opts.max_sweeps {
                break;
            }
        }
        if sweeps >= opts.max_sweeps {
            break;
        }
    }
    sweeps
}

/// One fitted point along a λ path.
#[derive(Debug, Clone)]
pub struct PathPoint {
    pub fit: GlmFit,
    /// In-sample deviance at this λ.
    pub deviance: f64,
}

/// Geometric grid of `len` values from `max` down to `ratio·max`.
pub fn lambda_grid(max: f64, len: usize, ratio: f64) -> Vec<f64> {
    if len == 1 {
        return vec![max];
    }
    let step = ratio.ln() / (len - 1) as f64;
    (0..len).map(|k| max * (step * k as f64).exp()).collect()
}

/// Warm-started walk down a decreasing λ sequence.
pub struct PathRunner<'a> {
    design: &'a Design,
    y: &'a [f64],
    family: Family,
    opts: LassoOptions,
    state: State,
    grad: Vec<f64>,
    prev_lambda: f64,
    null_deviance: f64,
}

impl<'a> PathRunner<'a> {
    pub fn new(design: &'a Design, y: &'a [f64], family: &Family, opts: &LassoOptions) -> PathRunner<'a> {
        let p = design.p();
        let n = design.n();
        let b0 = if opts.intercept { null_intercept(design, y, family, opts) } else { 0.0 };
        let eta = vec![b0; n];
        let s0: Vec<f64> = (0..n).map(|i| obs_terms(family, b0, y[i]).1 / n as f64).collect();
        let grad = design.t_dot(&s0);
        let prev_lambda = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let null_deviance = (0..n).map(|i| obs_deviance(family, b0, y[i])).sum();
        PathRunner {
            design,
            y,
            family: *family,
            opts: *opts,
            state: State { beta: vec![0.0; p], b0, eta },
            grad,
            prev_lambda,
            null_deviance,
        }
    }

    pub fn null_deviance(&self) -> f64 {
        self.null_deviance
    }

    /// Solves at `lambda` (which should not exceed the previous one), screening
    /// coordinates with the sequential strong rule.
    pub fn step(&mut self, lambda: f64) -> PathPoint {
        let p = self.design.p();
        let threshold = 2.0 * lambda - self.prev_lambda;
        let cand: Vec<bool> =
            (0..p).map(|j| self.state.beta[j] != 0.0 || self.grad[j].abs() >= threshold).collect();
        let diag = solve_point(self.design, self.y, &self.family, lambda, &mut self.state, &cand, &self.opts);
        self.grad = diag.grad;
        self.prev_lambda = lambda;
        let deviance: f64 =
            self.state.eta.iter().zip(self.y).map(|(&e, &yi)| obs_deviance(&self.family, e, yi)).sum();
        PathPoint {
            fit: GlmFit {
                beta: self.state.beta.clone(),
                intercept: self.state.b0,
                lambda,
                objective: diag.objective,
                iterations: diag.iterations,
                converged: diag.converged,
                kkt_residual: diag.kkt,
            },
            deviance,
        }
    }
}

/// Fits a decreasing sequence of λ values with warm starts.
///
/// The path stops early once the fraction of deviance explained exceeds 0.999 or, after
/// the first five points, the deviance changes by less than 1e-5 (relative) between
/// consecutive points.
pub fn lasso_path(design: &Design, y: &[f64], family: &Family, lambdas: &[f64], opts: &LassoOptions) -> Vec<PathPoint> {
    let mut runner = PathRunner::new(design, y, family, opts);
    let null_dev = runner.null_deviance();
    let mut out: Vec<PathPoint> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let pt = runner.step(lambda);
        let saturated = 1.0 - pt.deviance / null_dev > 0.999;
        let flat = match out.last() {
            Some(prev) if out.len() >= 5 => (prev.deviance - pt.deviance) / prev.deviance.max(f64::MIN_POSITIVE) < 1e-5,
            _ => false,
        };
        out.push(pt);
        if saturated || flat {
            break;
        }
    }
    out
}

/// Solves the penalized problem at a single λ, reaching it through a warm-started
/// path from λ_max.
pub fn fit_lasso(design: &Design, y: &[f64], family: &Family, lambda: f64, opts: &LassoOptions) -> Result<GlmFit> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("lambda must be nonnegative, got {lambda}")));
    }
    if design.n() < 2 {
        return Err(Error::InvalidData("penalized fit needs at least 2 observations".into()));
    }
    let lmax = lambda_max(design, y, family, opts);
    if lambda >= lmax {
        let mut fit = GlmFit::zero(design.p(), lambda);
        if opts.intercept {
            fit.intercept = null_intercept(design, y, family, opts);
        }
        let eta = vec![fit.intercept; design.n()];
        fit.objective = mean_loss(family, &eta, y);
        return Ok(fit);
    }
    let mut grid: Vec<f64> = lambda_grid(lmax, GRID_LEN, GRID_MIN_RATIO).into_iter().filter(|&l| l > lambda).collect();
    grid.push(lambda);
    Ok(fit_along(design, y, family, &grid, opts))
}

/// Walks the whole sequence without early stopping; returns the fit at the last λ.
fn fit_along(design: &Design, y: &[f64], family: &Family, lambdas: &[f64], opts: &LassoOptions) -> GlmFit {
    let mut runner = PathRunner::new(design, y, family, opts);
    let mut last = None;
    for &lambda in lambdas {
        last = Some(runner.step(lambda).fit);
    }
    last.expect("non-empty lambda sequence")
}

/// Minimizes ℓ_g(β) + λ‖β‖₁ (no intercept) on the given subsample.
pub fn fit_lasso_glm(x: ArrayView2<'_, f64>, y: &[f64], link: &Link, lambda: f64) -> Result<GlmFit> {
    fit_lasso(&Design::new(x), y, &Family::Binomial(*link), lambda, &LassoOptions::default())
}

/// Cross-validation curve over the standard λ grid.
#[derive(Debug, Clone, Serialize)]
pub struct CvCurve {
    pub lambdas: Vec<f64>,
    /// Mean held-out deviance per observation at each λ.
    pub mean_deviance: Vec<f64>,
    pub index_min: usize,
    pub lambda_min: f64,
    /// Number of fold assignments drawn (more than 1 when a fold was degenerate).
    pub attempts: usize,
}

/// Seeded fold labels: a random permutation dealt round-robin into `k` folds.
pub fn fold_labels(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    let mut labels = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        labels[i] = pos % k;
    }
    labels
}

fn degenerate(family: &Family, y: &[f64]) -> bool {
    match family {
        Family::Binomial(_) => y.iter().all(|&v| v == 0.0) || y.iter().all(|&v| v == 1.0),
        Family::Gaussian => y.len() < 2,
    }
}

/// K-fold cross-validation of the held-out deviance over a 100-point geometric λ grid
/// from λ_max down to 1e-3·λ_max.
pub fn cross_validate(
    design: &Design,
    y: &[f64],
    family: &Family,
    n_folds: usize,
    seed: u64,
    opts: &LassoOptions,
) -> Result<CvCurve> {
    let n = design.n();
    if n_folds < 2 || n_folds > n {
        return Err(Error::Config(format!("need 2 <= folds <= {n}, got {n_folds}")));
    }
    let lambdas = lambda_grid(lambda_max(design, y, family, opts), GRID_LEN, GRID_MIN_RATIO);

    let mut attempt = 0;
    let labels = loop {
        let s = if attempt == 0 { seed } else { crate::rng::derive_seed(seed, attempt as u64) };
        let labels = fold_labels(n, n_folds, s);
        let bad = (0..n_folds).any(|k| {
            let train_y: Vec<f64> = (0..n).filter(|&i| labels[i] != k).map(|i| y[i]).collect();
            degenerate(family, &train_y)
        });
        attempt += 1;
        if !bad {
            break labels;
        }
        if attempt >= MAX_REFOLDS {
            return Err(Error::InvalidData(format!(
                "every fold assignment in {MAX_REFOLDS} attempts left a training fold with constant outcome"
            )));
        }
    };

    let fold_opts = opts.for_cv();
    let mut total = vec![0.0; lambdas.len()];
    for k in 0..n_folds {
        let train: Vec<usize> = (0..n).filter(|&i| labels[i] != k).collect();
        let test: Vec<usize> = (0..n).filter(|&i| labels[i] == k).collect();
        let d_train = design.subset(&train);
        let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let d_test = design.subset(&test);
        let y_test: Vec<f64> = test.iter().map(|&i| y[i]).collect();
        let held_out = fold_path_deviance(&d_train, &y_train, &d_test, &y_test, family, &lambdas, &fold_opts);
        for (slot, v) in total.iter_mut().zip(held_out) {
            *slot += v;
        }
    }
    let mean_deviance: Vec<f64> = total.iter().map(|t| t / n as f64).collect();
    let index_min = mean_deviance
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) })
        .0;
    Ok(CvCurve { lambda_min: lambdas[index_min], lambdas, mean_deviance, index_min, attempts: attempt })
}

/// Held-out deviance of one fold along the grid.
///
/// Besides the in-sample stopping rules of [`lasso_path`], the walk stops once the
/// held-out deviance has risen more than 10% above its running minimum: past that
/// point the fits are overfitting and only cost time. Entries beyond the stopping
/// point repeat the last computed value.
fn fold_path_deviance(
    d_train: &Design,
    y_train: &[f64],
    d_test: &Design,
    y_test: &[f64],
    family: &Family,
    lambdas: &[f64],
    opts: &LassoOptions,
) -> Vec<f64> {
    let mut runner = PathRunner::new(d_train, y_train, family, opts);
    let null_dev = runner.null_deviance();
    let mut out = Vec::with_capacity(lambdas.len());
    let mut best = f64::INFINITY;
    let mut prev_dev = f64::NAN;
    for (idx, &lambda) in lambdas.iter().enumerate() {
        let pt = runner.step(lambda);
        let eta = d_test.index(&pt.fit.beta, pt.fit.intercept);
        let held: f64 = eta.iter().zip(y_test).map(|(&e, &yi)| obs_deviance(family, e, yi)).sum();
        out.push(held);
        best = best.min(held);
        let saturated = 1.0 - pt.deviance / null_dev > 0.999;
        let flat = idx >= 5 && (prev_dev - pt.deviance) / prev_dev.max(f64::MIN_POSITIVE) < 1e-5;
        prev_dev = pt.deviance;
        if saturated || flat || held > 1.1 * best {
            break;
        }
    }
    let last = *out.last().expect("non-empty grid");
    out.resize(lambdas.len(), last);
    out
}

/// λ minimizing mean held-out deviance ("lambda.min").
pub fn select_lambda_cv(x: ArrayView2<'_, f64>, y: &[f64], link: &Link, n_folds: usize, seed: u64) -> Result<f64> {
    let design = Design::new(x);
    Ok(cross_validate(&design, y, &Family::Binomial(*link), n_folds, seed, &LassoOptions::default())?.lambda_min)
}

/// Cross-validates λ, then refits on the whole sample along the grid down to λ_min.
pub fn fit_lasso_cv(
    design: &Design,
    y: &[f64],
    family: &Family,
    n_folds: usize,
    seed: u64,
    opts: &LassoOptions,
) -> Result<GlmFit> {
    let cv = cross_validate(design, y, family, n_folds, seed, opts)?;
    if cv.index_min == 0 {
        return fit_lasso(design, y, family, cv.lambdas[0], opts);
    }
    Ok(fit_along(design, y, family, &cv.lambdas[..=cv.index_min], opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn loss_at_zero_is_log2() {
        let x = array![[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]];
        let y = [1.0, 0.0, 1.0];
        for link in [Link::Logit, Link::Probit, Link::StudentT { nu: 3 }] {
            assert!((glm_loss(&[0.0, 0.0], x.view(), &y, &link) - 2f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn loss_single_observation() {
        let x = array![[1.0]];
        let v = glm_loss(&[2.0], x.view(), &[1.0], &Link::Logit);
        assert!((v - (1.0 + (-2.0f64).exp()).ln()).abs() < 1e-15);
        assert!((v - 0.126_928_011_042_972_6).abs() < 1e-12);
    }

    #[test]
    fn gradient_single_observation() {
        let x = array![[1.0]];
        let g = glm_loss_gradient(&[0.0], x.view(), &[1.0], &Link::Logit);
        assert!((g[0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn gradient_cancels_on_mirrored_pairs() {
        let x = array![[1.0, -2.0], [1.0, -2.0], [0.3, 0.7], [0.3, 0.7]];
        let y = [1.0, 0.0, 0.0, 1.0];
        for link in [Link::Logit, Link::Probit] {
            let g = glm_loss_gradient(&[0.0, 0.0], x.view(), &y, &link);
            assert!(g.iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn lambda_above_max_gives_zero() {
        let x = array![[1.0, 0.2], [-0.4, 1.0], [0.3, -0.8], [2.0, 0.1]];
        let y = [1.0, 0.0, 0.0, 1.0];
        let design = Design::new(x.view());
        let lmax = lambda_max(&design, &y, &Family::Binomial(Link::Logit), &LassoOptions::default());
        let fit = fit_lasso_glm(x.view(), &y, &Link::Logit, lmax * 1.0001).unwrap();
        assert!(fit.beta.iter().all(|&b| b == 0.0));
        let fit = fit_lasso_glm(x.view(), &y, &Link::Logit, lmax * 0.5).unwrap();
        assert!(fit.beta.iter().any(|&b| b != 0.0));
    }

    #[test]
    fn negative_lambda_rejected() {
        let x = Array2::<f64>::zeros((3, 1));
        assert!(fit_lasso_glm(x.view(), &[0.0, 1.0, 0.0], &Link::Logit, -1.0).is_err());
    }

    #[test]
    fn grid_endpoints() {
        let g = lambda_grid(2.0, 100, 1e-3);
        assert_eq!(g.len(), 100);
        assert!((g[0] - 2.0).abs() < 1e-15);
        assert!((g[99] - 2e-3).abs() < 1e-15);
    }

    #[test]
    fn folds_are_balanced_and_deterministic() {
        let a = fold_labels(23, 5, 9);
        assert_eq!(a, fold_labels(23, 5, 9));
        for k in 0..5 {
            let c = a.iter().filter(|&&l| l == k).count();
            assert!(c == 4 || c == 5);
        }
    }
}
