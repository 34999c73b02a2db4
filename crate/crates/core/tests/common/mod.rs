#![allow(dead_code)]

use glm_balance::balance::{solve_weights_lagrange, BalanceProblem, SolverOptions};
use glm_balance::baselines::{arb_weights, dml_score, regression_mu_c};
use glm_balance::estimators::{
    estimate_dense_contrast, estimate_mu_c, mu_c_from_beta, proposed_weights, Context, EstimatorConfig, LambdaRule,
    Model, ProgramForm, SplitKind, SplitScheme,
};
use glm_balance::glm::{fit_lasso, lambda_max, Design, Family, LassoOptions};
use glm_balance::link::{Link, LinkFn};
use glm_balance::sim::{coefficient_design, generate_replication, DesignSpec, SimConfig, Sparsity};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.sample(StandardNormal))
}

pub fn bernoulli_outcomes(rng: &mut ChaCha8Rng, x: &Array2<f64>, beta: &[f64], link: &Link) -> Vec<f64> {
    x.rows()
        .into_iter()
        .map(|r| {
            let eta: f64 = r.iter().zip(beta).map(|(a, b)| a * b).sum();
            if rng.random::<f64>() < link.g(eta) { 1.0 } else { 0.0 }
        })
        .collect()
}

/// Gaussian elimination with partial pivoting.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, piv);
        b.swap(k, piv);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    x
}

/// Unpenalized maximum likelihood by Fisher scoring, to machine precision.
pub fn newton_mle(x: &Array2<f64>, y: &[f64], link: &Link) -> Vec<f64> {
    let (n, p) = x.dim();
    let mut beta = vec![0.0; p];
    for _ in 0..200 {
        let mut grad = vec![0.0; p];
        let mut info = vec![vec![0.0; p]; p];
        for i in 0..n {
            let r = x.row(i);
            let eta: f64 = r.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let (g, g1) = (link.g(eta), link.g1(eta));
            let v = g * link.complement(eta);
            let score = (y[i] - g) * g1 / v;
            let fisher = g1 * g1 / v;
            for j in 0..p {
                grad[j] += score * r[j];
                for k in 0..p {
                    info[j][k] += fisher * r[j] * r[k];
                }
            }
        }
        let step = gauss_solve(info, grad);
        beta.iter_mut().zip(&step).for_each(|(b, s)| *b += s);
        if step.iter().map(|s| s.abs()).fold(0.0, f64::max) < 1e-13 {
            break;
        }
    }
    beta
}

pub fn program_objective(problem: &BalanceProblem, gamma: &[f64], zeta: f64) -> f64 {
    let var: f64 = gamma.iter().zip(&problem.w).map(|(g, w)| g * g * w).sum();
    let imb = problem
        .xi
        .iter()
        .enumerate()
        .map(|(j, xi)| (xi - problem.a.column(j).iter().zip(gamma).map(|(a, g)| a * g).sum::<f64>()).abs())
        .fold(0.0, f64::max);
    (1.0 - zeta) * var + zeta * imb * imb
}

fn feasible(gamma: &[f64], cap: f64) -> bool {
    gamma.iter().all(|&g| g >= -1e-15 && g <= cap + 1e-15)
}

fn compositions(n: usize, total: usize, prefix: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
    if n == 1 {
        prefix.push(total);
        visit(prefix);
        prefix.pop();
        return;
    }
    for k in 0..=total {
        prefix.push(k);
        compositions(n - 1, total - k, prefix, visit);
        prefix.pop();
    }
}

/// Exhaustive search over simplex points with coordinates on a 1/`steps` lattice,
/// refined by pairwise mass transfers with shrinking step. An upper bound on the
/// program's optimum that is tight to well below 1e-4 on small instances.
pub fn grid_oracle(problem: &BalanceProblem, zeta: f64, steps: usize) -> f64 {
    let n = problem.n_w();
    let mut best = (f64::INFINITY, vec![0.0; n]);
    compositions(n, steps, &mut Vec::with_capacity(n), &mut |c| {
        let g: Vec<f64> = c.iter().map(|&k| k as f64 / steps as f64).collect();
        if feasible(&g, problem.cap) {
            let v = program_objective(problem, &g, zeta);
            if v < best.0 {
                best = (v, g);
            }
        }
    });
    let (mut val, mut g) = best;
    let mut step = 1.0 / steps as f64;
    while step > 1e-12 {
        let mut improved = true;
        while improved {
            improved = false;
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let t = step.min(g[j]).min(problem.cap - g[i]);
                    if t <= 0.0 {
                        continue;
                    }
                    g[i] += t;
                    g[j] -= t;
                    let v = program_objective(problem, &g, zeta);
                    if v < val - 1e-16 {
                        val = v;
                        improved = true;
                    } else {
                        g[i] -= t;
                        g[j] += t;
                    }
                }
            }
        }
        step /= 2.0;
    }
    val
}

/// A random small weight program with positive variance weights.
pub fn random_problem(rng: &mut ChaCha8Rng, n_w: usize, p: usize) -> BalanceProblem {
    let a = normal_matrix(rng, n_w, p);
    let xi: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..n_w).map(|_| rng.random_range(0.05..0.25)).collect();
    let caps = [1.0, 0.5, 2.0 / n_w as f64];
    let cap = caps[rng.random_range(0..caps.len())];
    BalanceProblem::new(xi, a, w, cap).unwrap()
}

/// A link with g ≡ ½ and g′ ≡ ½ everywhere (not a distribution function; used to
/// collapse the derivative weighting to a constant).
pub struct ConstantLink;

impl LinkFn for ConstantLink {
    fn g(&self, _: f64) -> f64 {
        0.5
    }
    fn g1(&self, _: f64) -> f64 {
        0.5
    }
    fn g2(&self, _: f64) -> f64 {
        0.0
    }
}

/// Worst result of the solver against the grid oracle on 100 small programs.
pub struct OracleSummary {
    pub worst_gap: f64,
    pub worst_sum_error: f64,
    pub worst_bound_violation: f64,
}

pub fn oracle_suite() -> OracleSummary {
    let opts = SolverOptions::default();
    let mut rng = rng(2024);
    let zetas = [0.0, 0.3, 0.5, 0.8, 1.0];
    let mut out = OracleSummary { worst_gap: f64::NEG_INFINITY, worst_sum_error: 0.0, worst_bound_violation: 0.0 };
    for case in 0..100 {
        let n_w = 4 + case % 3;
        let p = 2 + (case / 3) % 2;
        let zeta = zetas[case % 5];
        let problem = random_problem(&mut rng, n_w, p);
        let sol = solve_weights_lagrange(&problem, zeta, &opts).unwrap();
        let sum: f64 = sol.gamma.iter().sum();
        out.worst_sum_error = out.worst_sum_error.max((sum - 1.0).abs());
        for &g in &sol.gamma {
            out.worst_bound_violation = out.worst_bound_violation.max(-g).max(g - problem.cap);
        }
        let oracle = grid_oracle(&problem, zeta, [100, 40, 20][n_w - 4]);
        let ours = program_objective(&problem, &sol.gamma, zeta);
        assert!((ours - sol.objective).abs() < 1e-12);
        out.worst_gap = out.worst_gap.max(ours - oracle);
    }
    out
}

pub fn lasso_instance(seed: u64, n: usize, p: usize, link: Link) -> (Array2<f64>, Vec<f64>) {
    let mut rng = rng(seed);
    let x = normal_matrix(&mut rng, n, p);
    let beta: Vec<f64> = (0..p).map(|j| if j < 3 { rng.random_range(-1.0..1.0) } else { 0.0 }).collect();
    let y = bernoulli_outcomes(&mut rng, &x, &beta, &link);
    (x, y)
}

/// Seeds (out of 50) where a penalty at or above λ_max leaves a nonzero coefficient,
/// or one just below it leaves none.
pub fn lambda_max_failures() -> Vec<u64> {
    let opts = LassoOptions::default();
    let mut bad = Vec::new();
    for seed in 0..50 {
        let link = [Link::Logit, Link::Probit][seed as usize % 2];
        let (x, y) = lasso_instance(seed, 60, 30, link);
        let design = Design::new(x.view());
        let family = Family::Binomial(link);
        let lmax = lambda_max(&design, &y, &family, &opts);
        let zero_above = [1.0, 1.5]
            .iter()
            .all(|s| fit_lasso(&design, &y, &family, lmax * s, &opts).unwrap().beta.iter().all(|&b| b == 0.0));
        let below = fit_lasso(&design, &y, &family, lmax * 0.9, &opts).unwrap();
        if !zero_above || below.beta.iter().all(|&b| b == 0.0) {
            bad.push(seed);
        }
    }
    bad
}

/// Largest coordinate gap between unpenalized fits and Newton's method on 20
/// instances, and the largest KKT residual of those fits.
pub fn newton_gap() -> (f64, f64) {
    let opts = LassoOptions::default();
    let (mut gap, mut kkt) = (0.0f64, 0.0f64);
    for seed in 0..20 {
        let link = [Link::Logit, Link::Probit][seed as usize % 2];
        let (x, y) = lasso_instance(100 + seed, 400, 4, link);
        let oracle = newton_mle(&x, &y, &link);
        let fit = fit_lasso(&Design::new(x.view()), &y, &Family::Binomial(link), 0.0, &opts).unwrap();
        for (a, b) in fit.beta.iter().zip(&oracle) {
            gap = gap.max((a - b).abs());
        }
        kkt = kkt.max(fit.kkt_residual);
    }
    (gap, kkt)
}

fn identity_cell() -> SimConfig {
    SimConfig {
        n: 200,
        p: 40,
        rho: 0.5,
        design: DesignSpec::A { propensity: Sparsity::Sparse, norm_d: 1.0, norm_y: 1.0 },
        n_sim: 1,
        seed: 3,
        zeta: 0.5,
    }
}

fn fixed_penalty() -> EstimatorConfig {
    EstimatorConfig { lambda: LambdaRule::Fixed(0.02), ..EstimatorConfig::default() }
}

/// Contrast estimate at the target moment, rebuilt into μ̂_c; returns the largest gap.
pub fn contrast_identity() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..3 {
        let (data, _) = generate_replication(&identity_cell(), seed).unwrap();
        let ctx = Context::new(&data, fixed_penalty());
        let scheme = SplitScheme::new(SplitKind::NoSplit, 0);
        let mu = estimate_mu_c(&ctx, &scheme).unwrap();
        let fold = &mu.folds[0];
        let theta = estimate_dense_contrast(&ctx, &fold.xi, &scheme, ProgramForm::Lagrange { zeta: 0.5 }).unwrap();
        let beta = &ctx.fit(Model::Outcome, &data.controls()).unwrap().beta;
        let linear: f64 = fold.xi.iter().zip(beta).map(|(a, b)| a * b).sum();
        worst = worst.max((theta.point + fold.plug_in - linear - mu.mu_c).abs());
    }
    worst
}

/// With the true coefficients plugged in, μ̂_c − μ_c should be the weighted noise.
pub fn true_beta_identity() -> f64 {
    let cfg = identity_cell();
    let (beta_y, _) = coefficient_design(&cfg.design, cfg.p).unwrap();
    let link = Link::Logit;
    let mut worst = 0.0f64;
    for seed in 0..3 {
        let (data, _) = generate_replication(&cfg, seed).unwrap();
        let controls = data.controls();
        let fold = mu_c_from_beta(&data, &beta_y, 0.0, &link, &controls, 0.5, &SolverOptions::default()).unwrap();
        let index = |i: usize| data.x().row(i).iter().zip(&beta_y).map(|(a, b)| a * b).sum::<f64>();
        let treated = data.treated();
        let mu_true = treated.iter().map(|&i| link.g(index(i))).sum::<f64>() / treated.len() as f64;
        let noise: f64 =
            controls.iter().zip(&fold.solution.gamma).map(|(&i, g)| g * (data.y()[i] - link.g(index(i)))).sum();
        worst = worst.max((fold.mu_c - mu_true - noise).abs());
    }
    worst
}

/// DML with a constant propensity against regression imputation.
pub fn constant_propensity_identity() -> f64 {
    let (data, _) = generate_replication(&identity_cell(), 11).unwrap();
    let ctx = Context::new(&data, fixed_penalty());
    let beta = ctx.fit(Model::Outcome, &data.controls()).unwrap().beta.clone();
    let all: Vec<usize> = (0..data.n()).collect();
    let y_t = data.mean_outcome(&data.treated());
    let reg = y_t - regression_mu_c(&data, &beta, false, &Link::Logit);
    [0.2, 0.5, 0.7]
        .iter()
        .map(|&c| (dml_score(&data, &beta, false, &Link::Logit, &vec![c; data.n()], &all).0 - reg).abs())
        .fold(0.0, f64::max)
}

/// Proposed weights under a constant-derivative link against residual-balancing
/// weights: (objective gap, gap of the scaled optimum).
pub fn constant_link_identity() -> (f64, f64) {
    let (data, _) = generate_replication(&identity_cell(), 5).unwrap();
    let xt = data.rows(&data.treated());
    let xc = data.rows(&data.controls());
    let beta = vec![0.1; data.p()];
    let zeta = 0.5;
    let solver = SolverOptions::default();
    let (prop_problem, prop) =
        proposed_weights(&xt, &xc, &beta, &ConstantLink, ProgramForm::Lagrange { zeta }, &solver).unwrap();
    assert!(prop_problem.w.iter().all(|&w| w == 0.25));
    let (arb_problem, arb) = arb_weights(&xt, &xc, zeta, &solver).unwrap();
    let at_proposed = program_objective(&arb_problem, &prop.gamma, zeta);
    ((at_proposed - arb.objective).abs(), (prop.objective - arb.objective / 4.0).abs())
}
