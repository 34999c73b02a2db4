//! The balancing-weight program.
//!
//! Weights γ on the weighting subsample minimize a heteroskedastic variance proxy
//! Σγᵢ²wᵢ traded off against the sup-norm imbalance ‖ξ − Aᵀγ‖_∞, either in Lagrange
//! form over the capped simplex or with the imbalance as a hard constraint.
//!
//! Both forms are instances of min_γ f(γ) + h(Aᵀγ) with f a separable quadratic plus
//! the indicator of the feasible set and h acting on the p-vector of balances. They are
//! solved by the Chambolle–Pock primal-dual iteration (accelerated when f is strongly
//! convex), stopping on an explicit duality gap, so a converged answer certifies its
//! own accuracy. The prox of f reduces to a one-dimensional threshold search solved
//! exactly over sorted breakpoints.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{axpy, dot};
use crate::linalg;
use crate::link::LinkFn;

/// Inputs of the weight program for one weighting subsample.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceProblem {
    /// Target moment ξ (length p).
    pub xi: Vec<f64>,
    /// Rows g′(xᵢᵀβ̂)xᵢᵀ over the weighting subsample (n_w × p).
    pub a: Array2<f64>,
    /// Variance weights g(xᵢᵀβ̂)(1 − g(xᵢᵀβ̂)).
    pub w: Vec<f64>,
    /// Upper bound on each γᵢ.
    pub cap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightSolution {
    pub gamma: Vec<f64>,
    pub imbalance_sup: f64,
    pub variance_term: f64,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Duality gap at the returned point (0 for closed-form solutions).
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Absolute duality-gap (and, for the constrained form, bound-violation) tolerance.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-8, max_iter: 50_000 }
    }
}

impl BalanceProblem {
    pub fn new(xi: Vec<f64>, a: Array2<f64>, w: Vec<f64>, cap: f64) -> Result<BalanceProblem> {
        if a.ncols() != xi.len() || a.nrows() != w.len() {
            return Err(Error::Domain(format!(
                "shape mismatch: A is {}x{}, xi has {}, w has {}",
                a.nrows(),
                a.ncols(),
                xi.len(),
                w.len()
            )));
        }
        if a.nrows() == 0 {
            return Err(Error::Domain("empty weighting sample".into()));
        }
        if !(cap > 0.0) {
            return Err(Error::Domain(format!("cap must be positive, got {cap}")));
        }
        if w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Domain("variance weights must be positive and finite".into()));
        }
        if xi.iter().chain(a.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite entry in xi or A".into()));
        }
        Ok(BalanceProblem { xi, a, w, cap })
    }

    /// Builds A and w from covariate rows of the weighting subsample.
    pub fn from_fit(
        x_weight: ArrayView2<'_, f64>,
        beta: &[f64],
        link: &dyn LinkFn,
        xi: Vec<f64>,
        cap: f64,
    ) -> Result<BalanceProblem> {
        let mut a = x_weight.to_owned();
        let mut w = Vec::with_capacity(a.nrows());
        for mut row in a.rows_mut() {
            let eta = dot(row.as_slice().expect("standard layout"), beta);
            row *= link.g1(eta);
            w.push((link.g(eta) * link.complement(eta)).max(f64::MIN_POSITIVE));
        }
        BalanceProblem::new(xi, a, w, cap)
    }

    pub fn n_w(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.a.ncols()
    }

    /// Aᵀγ.
    pub fn balance(&self, gamma: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.p()];
        for (row, &g) in self.a.rows().into_iter().zip(gamma) {
            if g != 0.0 {
                axpy(g, row.as_slice().expect("standard layout"), &mut z);
            }
        }
        z
    }

    pub fn variance_term(&self, gamma: &[f64]) -> f64 {
        gamma.iter().zip(&self.w).map(|(g, w)| g * g * w).sum()
    }

    fn solution(&self, gamma: Vec<f64>, zeta: f64, status: SolveStatus, iterations: usize, gap: f64) -> WeightSolution {
        let imbalance_sup = imbalance_sup_norm(&gamma, self);
        let variance_term = self.variance_term(&gamma);
        WeightSolution {
            objective: (1.0 - zeta) * variance_term + zeta * imbalance_sup * imbalance_sup,
            gamma,
            imbalance_sup,
            variance_term,
            status,
            iterations,
            gap,
        }
    }
}

/// ξ = (1/n_t) Σ g′(xᵢᵀβ̂) xᵢ over the rows of `x_treated`.
pub fn compute_target_moment(x_treated: ArrayView2<'_, f64>, beta: &[f64], link: &dyn LinkFn) -> Vec<f64> {
    let n_t = x_treated.nrows();
    let mut xi = vec![0.0; x_treated.ncols()];
    if n_t == 0 {
        return xi;
    }
    for row in x_treated.rows() {
        let eta: f64 = row.iter().zip(beta).map(|(x, b)| x * b).sum();
        let d = link.g1(eta);
        for (s, x) in xi.iter_mut().zip(row.iter()) {
            *s += d * x;
        }
    }
    xi.iter_mut().for_each(|s| *s /= n_t as f64);
    xi
}

/// ‖ξ − Aᵀγ‖_∞.
pub fn imbalance_sup_norm(gamma: &[f64], problem: &BalanceProblem) -> f64 {
    problem.balance(gamma).iter().zip(&problem.xi).fold(0.0f64, |m, (z, x)| m.max((x - z).abs()))
}

/// Diagnostic weights γ*ᵢ = (1/n_w) ξᵀΓ̂⁻¹xᵢ, with Γ̂ = (1/n_w)Σ g′(xᵢᵀβ̂)xᵢxᵢᵀ supplied.
pub fn reference_weights(x_weight: ArrayView2<'_, f64>, xi: &[f64], gamma_hat: &Array2<f64>) -> Result<Vec<f64>> {
    let (n_w, p) = x_weight.dim();
    if p > n_w {
        return Err(Error::Singular(format!("reference weights need p <= n_w, got p={p}, n_w={n_w}")));
    }
    if gamma_hat.dim() != (p, p) || xi.len() != p {
        return Err(Error::Domain("dimension mismatch in reference weights".into()));
    }
    let v = linalg::solve(gamma_hat, &Array1::from(xi.to_vec()))?;
    Ok(x_weight.rows().into_iter().map(|r| r.dot(&v) / n_w as f64).collect())
}

/// Γ̂ = (1/n)Σ g′(xᵢᵀβ̂) xᵢxᵢᵀ.
pub fn sample_gamma(x: ArrayView2<'_, f64>, beta: &[f64], link: &dyn LinkFn) -> Array2<f64> {
    let (n, p) = x.dim();
    let mut g = Array2::zeros((p, p));
    for row in x.rows() {
        let eta: f64 = row.iter().zip(beta).map(|(x, b)| x * b).sum();
        let d = link.g1(eta) / n as f64;
        for j in 0..p {
            for k in 0..p {
                g[[j, k]] += d * row[j] * row[k];
            }
        }
    }
    g
}

/// Feasible set for the weights.
#[derive(Debug, Clone, Copy, PartialEq)]
enum WeightSet {
    /// Σγ = 1, 0 ≤ γ ≤ cap.
    CappedSimplex(f64),
    /// −cap ≤ γ ≤ cap.
    Box(f64),
}

/// The function of the balances Aᵀγ.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Coupling {
    /// ζ‖ξ − z‖²_∞.
    SupSquared(f64),
    /// Indicator of ‖ξ − z‖_∞ ≤ δ.
    Bound(f64),
}

/// Solves Σ clip(sᵢ(vᵢ − θ), 0, cap) = 1 for θ and returns the clipped vector.
/// Exact: F(θ) is piecewise linear with breakpoints vᵢ and vᵢ − cap/sᵢ.
fn threshold_capped(v: &[f64], s: &[f64], cap: f64, out: &mut [f64], events: &mut Vec<(f64, usize, bool)>) {
    events.clear();
    for i in 0..v.len() {
        events.push((v[i], i, true));
        events.push((v[i] - cap / s[i], i, false));
    }
    // Descending θ; at equal θ, entering before leaving, then by index.
    events.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.2.cmp(&a.2)).then(a.1.cmp(&b.1)));
    let (mut slope, mut konst, mut capped) = (0.0, 0.0, 0.0);
    let mut active = 0usize;
    let mut theta = f64::NAN;
    for &(e, i, enter) in events.iter() {
        let f = konst - slope * e + capped;
        if f >= 1.0 && active > 0 {
            theta = (konst + capped - 1.0) / slope;
            break;
        }
        if enter {
            active += 1;
            slope += s[i];
            konst += s[i] * v[i];
        } else {
            active -= 1;
            slope -= s[i];
            konst -= s[i] * v[i];
            capped += cap;
            if active == 0 {
                // Drop accumulated rounding so an empty active set is exactly flat.
                slope = 0.0;
                konst = 0.0;
            }
        }
    }
    if theta.is_nan() {
        // Only reachable when n·cap = 1 up to rounding: everything sits at the cap.
        theta = events.last().map_or(0.0, |e| e.0) - 1.0;
    }
    for i in 0..v.len() {
        out[i] = (s[i] * (v[i] - theta)).clamp(0.0, cap);
    }
}

/// Euclidean projection onto {Σγ = 1, 0 ≤ γ ≤ cap}.
pub fn project_capped_simplex(v: &[f64], cap: f64) -> Result<Vec<f64>> {
    if (v.len() as f64) * cap < 1.0 {
        return Err(Error::Infeasible { min_imbalance: f64::NAN, bound: cap });
    }
    let s = vec![1.0; v.len()];
    let mut out = vec![0.0; v.len()];
    threshold_capped(v, &s, cap, &mut out, &mut Vec::new());
    Ok(out)
}

/// max over the set of ⟨v, γ⟩ − Σ cᵢγᵢ², returning the value.
fn conjugate_f(v: &[f64], c: &[f64], set: WeightSet, scratch: &mut Scratch) -> f64 {
    let n = v.len();
    let g = &mut scratch.conj;
    match set {
        WeightSet::CappedSimplex(cap) => {
            if c.iter().all(|&ci| ci == 0.0) {
                // Linear program: fill the largest entries up to the cap.
                let order = &mut scratch.order;
                order.clear();
                order.extend(0..n);
                order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
                let mut left = 1.0f64;
                g.iter_mut().for_each(|x| *x = 0.0);
                for &i in order.iter() {
                    let t = left.min(cap);
                    g[i] = t;
                    left -= t;
                    if left <= 0.0 {
                        break;
                    }
                }
            } else {
                for i in 0..n {
                    scratch.s[i] = 1.0 / (2.0 * c[i].max(1e-300));
                }
                threshold_capped(v, &scratch.s, cap, g, &mut scratch.events);
            }
        }
        WeightSet::Box(cap) => {
            for i in 0..n {
                g[i] = if c[i] > 0.0 { (v[i] / (2.0 * c[i])).clamp(-cap, cap) } else { cap * v[i].signum() };
            }
        }
    }
    (0..n).map(|i| v[i] * g[i] - c[i] * g[i] * g[i]).sum()
}

struct Scratch {
    s: Vec<f64>,
    conj: Vec<f64>,
    order: Vec<usize>,
    events: Vec<(f64, usize, bool)>,
    sorted: Vec<f64>,
}

/// prox of τ·f at v: argmin Σcᵢγᵢ² + ‖γ − v‖²/(2τ) over the set.
fn prox_f(v: &[f64], c: &[f64], tau: f64, set: WeightSet, out: &mut [f64], scratch: &mut Scratch) {
    let n = v.len();
    for i in 0..n {
        scratch.s[i] = 1.0 / (1.0 + 2.0 * tau * c[i]);
    }
    match set {
        WeightSet::CappedSimplex(cap) => threshold_capped(v, &scratch.s, cap, out, &mut scratch.events),
        WeightSet::Box(cap) => {
            for i in 0..n {
                out[i] = (scratch.s[i] * v[i]).clamp(-cap, cap);
            }
        }
    }
}

/// prox of σ·h* where h* is the conjugate of the coupling, evaluated in place.
fn prox_h_conj(v: &mut [f64], xi: &[f64], sigma: f64, coupling: Coupling, sorted: &mut Vec<f64>) {
    for (vj, x) in v.iter_mut().zip(xi) {
        *vj -= sigma * x;
    }
    let t = match coupling {
        Coupling::Bound(delta) => sigma * delta,
        Coupling::SupSquared(zeta) => {
            // prox of c‖·‖₁² is soft-thresholding at t = 2c‖result‖₁.
            let c = sigma / (4.0 * zeta);
            sorted.clear();
            sorted.extend(v.iter().map(|x| x.abs()));
            sorted.sort_by(|a, b| b.total_cmp(a));
            let mut sum = 0.0;
            let mut t = 0.0;
            for (k, &a) in sorted.iter().enumerate() {
                sum += a;
                let cand = 2.0 * c * sum / (1.0 + 2.0 * c * (k + 1) as f64);
                let next = sorted.get(k + 1).copied().unwrap_or(0.0);
                if cand >= next {
                    t = cand;
                    break;
                }
            }
            t
        }
    };
    for vj in v.iter_mut() {
        *vj = if *vj > t {
            *vj - t
        } else if *vj < -t {
            *vj + t
        } else {
            0.0
        };
    }
}

fn h_conj(lambda: &[f64], xi: &[f64], coupling: Coupling) -> f64 {
    let l1: f64 = lambda.iter().map(|l| l.abs()).sum();
    let lin = dot(lambda, xi);
    match coupling {
        Coupling::SupSquared(zeta) => lin + l1 * l1 / (4.0 * zeta),
        Coupling::Bound(delta) => lin + delta * l1,
    }
}

fn spectral_norm(a: &Array2<f64>) -> f64 {
    let (n, p) = a.dim();
    let mut v = vec![1.0 / (p as f64).sqrt(); p];
    let mut u = vec![0.0; n];
    let mut norm = 0.0;
    for _ in 0..100 {
        for (i, row) in a.rows().into_iter().enumerate() {
            u[i] = dot(row.as_slice().expect("standard layout"), &v);
        }
        let mut next = vec![0.0; p];
        for (row, &ui) in a.rows().into_iter().zip(&u) {
            axpy(ui, row.as_slice().expect("standard layout"), &mut next);
        }
        let nn = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nn == 0.0 {
            return 0.0;
        }
        let est = nn.sqrt();
        next.iter_mut().for_each(|x| *x /= nn);
        v = next;
        if (est - norm).abs() <= 1e-6 * est {
            norm = est;
            break;
        }
        norm = est;
    }
    norm * 1.01
}

struct PdOutcome {
    gamma: Vec<f64>,
    iterations: usize,
    gap: f64,
    converged: bool,
}

/// Chambolle–Pock on min Σcᵢγᵢ² + 1_set(γ) + h(Aᵀγ).
fn primal_dual(problem: &BalanceProblem, c: &[f64], set: WeightSet, coupling: Coupling, opts: &SolverOptions) -> PdOutcome {
    let n = problem.n_w();
    let p = problem.p();
    let xi = &problem.xi;
    let rows: Vec<&[f64]> = problem.a.rows().into_iter().map(|r| r.to_slice().expect("standard layout")).collect();
    let a_lambda = |lambda: &[f64], out: &mut [f64]| {
        for (o, r) in out.iter_mut().zip(&rows) {
            *o = dot(r, lambda);
        }
    };

    let mut scratch = Scratch {
        s: vec![0.0; n],
        conj: vec![0.0; n],
        order: Vec::with_capacity(n),
        events: Vec::with_capacity(2 * n),
        sorted: Vec::with_capacity(p),
    };

    let norm = spectral_norm(&problem.a).max(1e-12);
    let mu = 2.0 * c.iter().copied().fold(f64::INFINITY, f64::min);
    let mut gamma = match set {
        WeightSet::CappedSimplex(_) => vec![1.0 / n as f64; n],
        WeightSet::Box(_) => vec![0.0; n],
    };
    // Primal/dual step ratio from the expected scales of γ and λ, biased towards large
    // primal steps (tuned on simulated designs; acceleration shrinks them anyway).
    let omega = {
        let g_scale = (1.0 / n as f64).sqrt();
        let z = problem.balance(&gamma);
        let r = xi.iter().zip(&z).fold(0.0f64, |m, (x, z)| m.max((x - z).abs())).max(1e-8);
        let l_scale = match coupling {
            Coupling::SupSquared(zeta) => 2.0 * zeta * r,
            Coupling::Bound(_) => r,
        };
        30.0 * (g_scale / l_scale).clamp(1e-4, 1e4)
    };
    let mut tau = omega / norm;
    let mut sigma = 1.0 / (omega * norm);

    let mut lambda = vec![0.0; p];
    let mut kg = problem.balance(&gamma);
    let mut kbar = kg.clone();
    let mut a_l = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];

    let mut best = (f64::INFINITY, gamma.clone());
    let mut iterations = 0;
    let mut gap = f64::INFINITY;
    let mut converged = false;

    for it in 1..=opts.max_iter {
        iterations = it;
        for j in 0..p {
            lambda[j] += sigma * kbar[j];
        }
        prox_h_conj(&mut lambda, xi, sigma, coupling, &mut scratch.sorted);
        a_lambda(&lambda, &mut a_l);
        for i in 0..n {
            v[i] = gamma[i] - tau * a_l[i];
        }
        prox_f(&v, c, tau, set, &mut next, &mut scratch);

        let theta = if mu > 0.0 {
            let th = 1.0 / (1.0 + mu * tau).sqrt();
            tau *= th;
            sigma /= th;
            th
        } else {
            1.0
        };
        let kn = problem.balance(&next);
        for j in 0..p {
            kbar[j] = kn[j] + theta * (kn[j] - kg[j]);
        }
        kg = kn;
        std::mem::swap(&mut gamma, &mut next);

        if it % 10 == 0 || it == opts.max_iter {
            let quad: f64 = gamma.iter().zip(c).map(|(g, c)| c * g * g).sum();
            let resid = xi.iter().zip(&kg).fold(0.0f64, |m, (x, z)| m.max((x - z).abs()));
            let (primal, violation) = match coupling {
                Coupling::SupSquared(zeta) => (quad + zeta * resid * resid, 0.0),
                Coupling::Bound(delta) => (quad, (resid - delta).max(0.0)),
            };
            let neg: Vec<f64> = a_l.iter().map(|x| -x).collect();
            let dual = -conjugate_f(&neg, c, set, &mut scratch) - h_conj(&lambda, xi, coupling);
            gap = primal - dual;
            let merit = primal + 1e6 * violation;
            if merit < best.0 {
                best = (merit, gamma.clone());
            }
            if gap <= opts.tol && violation <= opts.tol {
                converged = true;
                break;
            }
        }
    }
    let gamma = if converged { gamma } else { best.1 };
    PdOutcome { gamma, iterations, gap: gap.max(0.0), converged }
}

fn check_cap(problem: &BalanceProblem, cap: f64) -> Result<()> {
    if (problem.n_w() as f64) * cap < 1.0 {
        return Err(Error::Infeasible { min_imbalance: f64::NAN, bound: cap });
    }
    Ok(())
}

/// Minimizes (1−ζ)Σγᵢ²wᵢ + ζ‖ξ − Aᵀγ‖²_∞ over {Σγ = 1, 0 ≤ γᵢ ≤ cap}.
///
/// An empty feasible set (n_w·cap < 1) is reported as an `Infeasible` solution with
/// uniform weights rather than an error; callers decide whether that is fatal.
pub fn solve_weights_lagrange(problem: &BalanceProblem, zeta: f64, opts: &SolverOptions) -> Result<WeightSolution> {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::Domain(format!("zeta must lie in [0, 1], got {zeta}")));
    }
    let n = problem.n_w();
    if check_cap(problem, problem.cap).is_err() {
        return Ok(problem.solution(vec![1.0 / n as f64; n], zeta, SolveStatus::Infeasible, 0, f64::NAN));
    }
    let c: Vec<f64> = problem.w.iter().map(|w| (1.0 - zeta) * w).collect();
    if zeta == 0.0 {
        return Ok(problem.solution(min_variance(problem, problem.cap), zeta, SolveStatus::Optimal, 0, 0.0));
    }
    let out = primal_dual(problem, &c, WeightSet::CappedSimplex(problem.cap), Coupling::SupSquared(zeta), opts);
    let status = if out.converged { SolveStatus::Optimal } else { SolveStatus::MaxIter };
    Ok(problem.solution(out.gamma, zeta, status, out.iterations, out.gap))
}

/// argmin Σγᵢ²wᵢ over the capped simplex (closed form up to the threshold search).
fn min_variance(problem: &BalanceProblem, cap: f64) -> Vec<f64> {
    let n = problem.n_w();
    let s: Vec<f64> = problem.w.iter().map(|w| 1.0 / (2.0 * w)).collect();
    let mut out = vec![0.0; n];
    threshold_capped(&vec![0.0; n], &s, cap, &mut out, &mut Vec::new());
    out
}

/// Smallest achievable ‖ξ − Aᵀγ‖_∞ over the feasible set.
pub fn min_imbalance(problem: &BalanceProblem, cap: f64, simplex: bool, opts: &SolverOptions) -> f64 {
    let n = problem.n_w();
    let set = if simplex { WeightSet::CappedSimplex(cap) } else { WeightSet::Box(cap) };
    if simplex && (n as f64) * cap < 1.0 {
        return f64::INFINITY;
    }
    let out = primal_dual(problem, &vec![0.0; n], set, Coupling::SupSquared(1.0), opts);
    imbalance_sup_norm(&out.gamma, problem)
}

/// Minimizes Σγᵢ²wᵢ subject to ‖ξ − Aᵀγ‖_∞ ≤ `bound` and 0 ≤ γᵢ ≤ `cap`, Σγᵢ = 1 when
/// `simplex` is set, or |γᵢ| ≤ `cap` otherwise. The problem's own cap is ignored.
///
/// When the bound cannot be met the solution has status `Infeasible` and its
/// `imbalance_sup` is the smallest achievable imbalance.
pub fn solve_weights_constrained(
    problem: &BalanceProblem,
    bound: f64,
    cap: f64,
    simplex: bool,
    opts: &SolverOptions,
) -> Result<WeightSolution> {
    if !(bound > 0.0) || !(cap > 0.0) {
        return Err(Error::Domain(format!("bound and cap must be positive, got {bound} and {cap}")));
    }
    let n = problem.n_w();
    let set = if simplex { WeightSet::CappedSimplex(cap) } else { WeightSet::Box(cap) };
    if simplex && check_cap(problem, cap).is_err() {
        return Ok(problem.solution(vec![1.0 / n as f64; n], 0.0, SolveStatus::Infeasible, 0, f64::NAN));
    }
    let unconstrained = if simplex { min_variance(problem, cap) } else { vec![0.0; n] };
    if imbalance_sup_norm(&unconstrained, problem) <= bound {
        return Ok(problem.solution(unconstrained, 0.0, SolveStatus::Optimal, 0, 0.0));
    }
    let out = primal_dual(problem, &problem.w, set, Coupling::Bound(bound), opts);
    if out.converged {
        return Ok(problem.solution(out.gamma, 0.0, SolveStatus::Optimal, out.iterations, out.gap));
    }
    let floor = min_imbalance(problem, cap, simplex, opts);
    if floor > bound * (1.0 + 1e-9) {
        let mut sol = problem.solution(unconstrained, 0.0, SolveStatus::Infeasible, out.iterations, f64::NAN);
        sol.imbalance_sup = floor;
        return Ok(sol);
    }
    Ok(problem.solution(out.gamma, 0.0, SolveStatus::MaxIter, out.iterations, out.gap))
}

/// Turns an `Infeasible` solution into the error carrying its certificate.
pub fn require_feasible(sol: WeightSolution, bound: f64) -> Result<WeightSolution> {
    if sol.status == SolveStatus::Infeasible {
        return Err(Error::Infeasible { min_imbalance: sol.imbalance_sup, bound });
    }
    Ok(sol)
}
