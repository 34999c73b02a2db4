//! Competitor estimators of the ATET: difference in means, regression imputation,
//! inverse propensity weighting, double machine learning, automatic debiasing with a
//! lasso Riesz representer, and approximate residual balancing with a linear model.

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::Serialize;

use crate::balance::{solve_weights_lagrange, BalanceProblem, SolveStatus, SolverOptions, WeightSolution};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{
    coefficients, covariate_rows, mean_prediction, sample_mean_variance, Context, Diagnostics, Estimate, Model,
};
use crate::glm::{dot, lambda_grid, Design, GRID_LEN, GRID_MIN_RATIO};
use crate::link::{Link, LinkFn};
use crate::rng::derive_seed;

const MAX_REFOLDS: u64 = 10;

/// Ȳ_t − Ȳ_c, with variance v̂_t + (1/n_c²)Σ(Yᵢ − Ȳ_c)².
pub fn naive(data: &Dataset, level: f64) -> Result<Estimate> {
    let yt = data.outcomes(&data.treated());
    let yc = data.outcomes(&data.controls());
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Estimate::new("Naive", mean(&yt) - mean(&yc), sample_mean_variance(&yt) + sample_mean_variance(&yc), level)
}

/// Plug-in over the treated plus the simple average of control residuals, for a given
/// coefficient vector.
pub fn regression_mu_c(data: &Dataset, coef: &[f64], with_intercept: bool, link: &dyn LinkFn) -> f64 {
    let treated = data.treated();
    let controls = data.controls();
    let xt = covariate_rows(data, &treated, with_intercept);
    let xc = covariate_rows(data, &controls, with_intercept);
    let yc = data.outcomes(&controls);
    let residual: f64 = xc
        .rows()
        .into_iter()
        .zip(&yc)
        .map(|(r, y)| y - link.g(dot(r.as_slice().expect("standard layout"), coef)))
        .sum::<f64>()
        / controls.len() as f64;
    mean_prediction(&xt, coef, link) + residual
}

/// Regression imputation with β̂ from the lasso fit on all controls.
pub fn regression_impute(ctx: &Context<'_>) -> Result<Estimate> {
    let data = ctx.data;
    let controls = data.controls();
    let fit = ctx.fit(Model::Outcome, &controls)?;
    let b0 = ctx.config.lasso.intercept;
    let coef = coefficients(&fit, b0);
    let link = &ctx.config.link;
    let mu = regression_mu_c(data, &coef, b0, link);
    let yt = data.outcomes(&data.treated());
    let xc = covariate_rows(data, &controls, b0);
    let n_c = controls.len() as f64;
    let v_c: f64 = xc
        .rows()
        .into_iter()
        .map(|r| {
            let e = dot(r.as_slice().expect("standard layout"), &coef);
            link.g(e) * link.complement(e)
        })
        .sum::<f64>()
        / (n_c * n_c);
    let y_bar = yt.iter().sum::<f64>() / yt.len() as f64;
    Estimate::new("Regression", y_bar - mu, v_c + sample_mean_variance(&yt), ctx.config.level)
}

/// Lasso-logit propensity model with trimmed fitted scores for every unit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropensityFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub trimming: (f64, f64),
    /// P̂(D = 1 | xᵢ) for all n units, clamped into the trimming interval.
    pub fitted_scores: Vec<f64>,
}

fn check_trim(trim: (f64, f64)) -> Result<()> {
    if !(0.0 < trim.0 && trim.0 < trim.1 && trim.1 < 1.0) {
        return Err(Error::Config(format!("trimming bounds must satisfy 0 < low < high < 1, got {trim:?}")));
    }
    Ok(())
}

/// Fits the propensity model on `rows` (all units when `None`) and scores every unit.
pub fn fit_propensity(ctx: &Context<'_>, rows: Option<&[usize]>) -> Result<PropensityFit> {
    let trim = ctx.config.trim;
    check_trim(trim)?;
    let all: Vec<usize> = (0..ctx.data.n()).collect();
    let fit = ctx.fit(Model::Propensity, rows.unwrap_or(&all))?;
    let x = ctx.data.x();
    let fitted_scores = x
        .rows()
        .into_iter()
        .map(|r| {
            let e = fit.intercept + r.iter().zip(&fit.beta).map(|(a, b)| a * b).sum::<f64>();
            Link::Logit.g(e).clamp(trim.0, trim.1)
        })
        .collect();
    Ok(PropensityFit { coefficients: fit.beta.clone(), intercept: fit.intercept, trimming: trim, fitted_scores })
}

/// Normalized odds weights p̂/(1 − p̂) over `controls`.
pub fn odds_weights(scores: &[f64], controls: &[usize]) -> Vec<f64> {
    let odds: Vec<f64> = controls.iter().map(|&i| scores[i] / (1.0 - scores[i])).collect();
    let total: f64 = odds.iter().sum();
    odds.iter().map(|o| o / total).collect()
}

/// Odds-weighted control mean; variance v̂_t + Σγᵢ²(Yᵢ − μ̂)².
pub fn ipw(data: &Dataset, propensity: &PropensityFit, level: f64) -> Result<Estimate> {
    let controls = data.controls();
    let gamma = odds_weights(&propensity.fitted_scores, &controls);
    let yc = data.outcomes(&controls);
    let mu: f64 = gamma.iter().zip(&yc).map(|(g, y)| g * y).sum();
    let v_c: f64 = gamma.iter().zip(&yc).map(|(g, y)| g * g * (y - mu) * (y - mu)).sum();
    let yt = data.outcomes(&data.treated());
    let y_bar = yt.iter().sum::<f64>() / yt.len() as f64;
    Estimate::new("IPW", y_bar - mu, v_c + sample_mean_variance(&yt), level)
}

/// Splits all units into `k` folds, stratified by treatment, redrawing (up to 10 times)
/// until every fold has a treated unit and two controls and every complement can
/// support the nuisance fits.
pub fn unit_folds(data: &Dataset, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    for attempt in 0..MAX_REFOLDS {
        let mut rng = crate::rng::stream(derive_seed(seed, attempt), 0xF01D);
        let mut folds = vec![Vec::new(); k];
        for group in [data.treated(), data.controls()] {
            let mut g = group;
            g.shuffle(&mut rng);
            for (pos, i) in g.into_iter().enumerate() {
                folds[pos % k].push(i);
            }
        }
        folds.iter_mut().for_each(|f| f.sort_unstable());
        let ok = folds.iter().enumerate().all(|(j, fold)| {
            let treated_in = fold.iter().filter(|&&i| data.d()[i]).count();
            let controls_in = fold.len() - treated_in;
            let comp = complement(&folds, j);
            let comp_controls: Vec<usize> = comp.iter().copied().filter(|&i| !data.d()[i]).collect();
            let yc = data.outcomes(&comp_controls);
            treated_in >= 1
                && controls_in >= 2
                && comp_controls.len() >= 2
                && comp_controls.len() < comp.len()
                && yc.iter().any(|&y| y == 1.0)
                && yc.iter().any(|&y| y == 0.0)
        });
        if ok {
            return Ok(folds);
        }
    }
    Err(Error::InvalidData(format!("could not form {k} usable folds in {MAX_REFOLDS} attempts")))
}

fn complement(folds: &[Vec<usize>], j: usize) -> Vec<usize> {
    let mut out: Vec<usize> = folds.iter().enumerate().filter(|(g, _)| *g != j).flat_map(|(_, f)| f.clone()).collect();
    out.sort_unstable();
    out
}

/// One DML score evaluation on `score_rows` given fitted nuisances: returns (τ̂, v̂).
pub fn dml_score(
    data: &Dataset,
    coef: &[f64],
    with_intercept: bool,
    link: &dyn LinkFn,
    scores: &[f64],
    score_rows: &[usize],
) -> (f64, f64) {
    let d = data.d();
    let treated: Vec<usize> = score_rows.iter().copied().filter(|&i| d[i]).collect();
    let controls: Vec<usize> = score_rows.iter().copied().filter(|&i| !d[i]).collect();
    let xt = covariate_rows(data, &treated, with_intercept);
    let xc = covariate_rows(data, &controls, with_intercept);
    let yc = data.outcomes(&controls);
    let w = odds_weights(scores, &controls);
    let resid: Vec<f64> = xc
        .rows()
        .into_iter()
        .zip(&yc)
        .map(|(r, y)| y - link.g(dot(r.as_slice().expect("standard layout"), coef)))
        .collect();
    let mu = mean_prediction(&xt, coef, link) + w.iter().zip(&resid).map(|(a, b)| a * b).sum::<f64>();
    let yt = data.outcomes(&treated);
    let y_bar = yt.iter().sum::<f64>() / yt.len() as f64;
    let v = sample_mean_variance(&yt) + w.iter().zip(&resid).map(|(a, r)| a * a * r * r).sum::<f64>();
    (y_bar - mu, v)
}

/// Double machine learning with k unit folds. With `cross_fit` every fold takes a turn
/// as the score sample and the fold estimates are averaged; without it, only the last
/// fold is scored, with nuisances fit on the rest.
pub fn dml(ctx: &Context<'_>, k: usize, cross_fit: bool) -> Result<Estimate> {
    check_trim(ctx.config.trim)?;
    let data = ctx.data;
    let folds = unit_folds(data, k, ctx.config.seed)?;
    let scored: Vec<usize> = if cross_fit { (0..k).collect() } else { vec![k - 1] };
    let b0 = ctx.config.lasso.intercept;
    let (mut tau, mut var) = (0.0, 0.0);
    for &j in &scored {
        let comp = complement(&folds, j);
        let comp_controls: Vec<usize> = comp.iter().copied().filter(|&i| !data.d()[i]).collect();
        let outcome = ctx.fit(Model::Outcome, &comp_controls)?;
        let prop = fit_propensity(ctx, Some(&comp))?;
        let (t, v) = dml_score(data, &coefficients(&outcome, b0), b0, &ctx.config.link, &prop.fitted_scores, &folds[j]);
        tau += t;
        var += v;
    }
    let m = scored.len() as f64;
    let label = if cross_fit { format!("DML{k}") } else { "DML1".to_string() };
    Estimate::new(label, tau / m, var / (m * m), ctx.config.level)
}

/// Lasso estimate of the Riesz representer coefficients: minimizes
/// ρᵀĜρ − 2ĥᵀρ + λ‖ρ‖₁ with Ĝ the control second-moment matrix and ĥ the treated mean.
pub struct RieszProblem {
    design: Design,
    h: Vec<f64>,
    diag: Vec<f64>,
}

impl RieszProblem {
    pub fn new(x_controls: &Array2<f64>, x_treated: &Array2<f64>) -> RieszProblem {
        let design = Design::new(x_controls.view());
        let n_c = design.n() as f64;
        let n_t = x_treated.nrows() as f64;
        let h = (0..design.p()).map(|j| x_treated.column(j).sum() / n_t).collect();
        let diag = (0..design.p()).map(|j| dot(design.col(j), design.col(j)) / n_c).collect();
        RieszProblem { design, h, diag }
    }

    pub fn lambda_max(&self) -> f64 {
        2.0 * self.h.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// ρᵀĜρ − 2ĥᵀρ.
    pub fn criterion(&self, rho: &[f64]) -> f64 {
        let r = self.design.index(rho, 0.0);
        dot(&r, &r) / self.design.n() as f64 - 2.0 * dot(&self.h, rho)
    }

    /// Coordinate descent from `rho` (warm start) at penalty `lambda`, screening with
    /// the sequential strong rule from `prev_lambda` and verifying the optimality
    /// conditions on every coordinate. Returns the number of sweeps.
    pub fn solve(&self, lambda: f64, prev_lambda: f64, rho: &mut [f64], tol: f64) -> usize {
        let p = self.design.p();
        let n_c = self.design.n() as f64;
        let mut r = self.design.index(rho, 0.0);
        let grad = |j: usize, r: &[f64]| 2.0 * (dot(self.design.col(j), r) / n_c - self.h[j]);
        let update = |j: usize, rho: &mut [f64], r: &mut [f64]| -> f64 {
            let a = self.diag[j];
            if a <= 0.0 {
                return 0.0;
            }
            let col = self.design.col(j);
            let z = self.h[j] - (dot(col, r) / n_c - a * rho[j]);
            let t = lambda / 2.0;
            let new = if z > t { (z - t) / a } else if z < -t { (z + t) / a } else { 0.0 };
            let delta = new - rho[j];
            if delta != 0.0 {
                crate::glm::axpy(delta, col, r);
                rho[j] = new;
            }
            a * delta * delta
        };
        let cut = 2.0 * lambda - prev_lambda;
        let mut strong: Vec<bool> = (0..p).map(|j| rho[j] != 0.0 || grad(j, &r).abs() >= cut).collect();
        let mut sweeps = 0;
        loop {
            let set: Vec<usize> = (0..p).filter(|&j| strong[j]).collect();
            while sweeps < RIESZ_MAX_SWEEPS {
                sweeps += 1;
                if set.iter().map(|&j| update(j, rho, &mut r)).fold(0.0, f64::max) <= tol * tol {
                    break;
                }
                loop {
                    sweeps += 1;
                    let active: Vec<usize> = set.iter().copied().filter(|&j| rho[j] != 0.0).collect();
                    let change = active.into_iter().map(|j| update(j, rho, &mut r)).fold(0.0, f64::max);
                    if change <= tol * tol || sweeps >= RIESZ_MAX_SWEEPS {
                        break;
                    }
                }
            }
            let violators: Vec<usize> = (0..p).filter(|&j| !strong[j] && grad(j, &r).abs() > lambda).collect();
            if violators.is_empty() || sweeps >= RIESZ_MAX_SWEEPS {
                return sweeps;
            }
            violators.into_iter().for_each(|j| strong[j] = true);
        }
    }
}

const RIESZ_MAX_SWEEPS: usize = 5000;

/// Riesz coefficients with λ chosen by K-fold cross-validation of the held-out
/// criterion (folds stratified by treatment).
pub fn fit_riesz(x_controls: &Array2<f64>, x_treated: &Array2<f64>, folds: usize, seed: u64) -> Result<Vec<f64>> {
    let full = RieszProblem::new(x_controls, x_treated);
    let p = x_controls.ncols();
    let lambdas = lambda_grid(full.lambda_max(), GRID_LEN, GRID_MIN_RATIO);
    let (n_c, n_t) = (x_controls.nrows(), x_treated.nrows());
    let k = folds.min(n_c).min(n_t);
    if k < 2 {
        return Err(Error::InvalidData("Riesz cross-validation needs 2 treated and 2 control rows".into()));
    }
    let labels_c = crate::glm::fold_labels(n_c, k, seed);
    let labels_t = crate::glm::fold_labels(n_t, k, derive_seed(seed, 1));
    let pick = |x: &Array2<f64>, labels: &[usize], f: usize, inside: bool| {
        let rows: Vec<usize> = (0..x.nrows()).filter(|&i| (labels[i] == f) == inside).collect();
        x.select(ndarray::Axis(0), &rows)
    };
    let tol = 1e-6;
    let mut total = vec![0.0; lambdas.len()];
    for f in 0..k {
        let train = RieszProblem::new(&pick(x_controls, &labels_c, f, false), &pick(x_treated, &labels_t, f, false));
        let test = RieszProblem::new(&pick(x_controls, &labels_c, f, true), &pick(x_treated, &labels_t, f, true));
        let mut rho = vec![0.0; p];
        let mut best = f64::INFINITY;
        let mut best_idx = 0;
        for (idx, &lambda) in lambdas.iter().enumerate() {
            train.solve(lambda, lambdas[idx.saturating_sub(1)], &mut rho, tol);
            let last = test.criterion(&rho);
            total[idx] += last;
            if last < best {
                best = last;
                best_idx = idx;
            }
            if idx >= best_idx + 10 || (idx >= best_idx + 5 && last > best + 0.1 * best.abs().max(1e-12)) {
                for slot in total.iter_mut().skip(idx + 1) {
                    *slot += last;
                }
                break;
            }
        }
    }
    let idx = total.iter().enumerate().fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) }).0;
    let mut rho = vec![0.0; p];
    for (i, &lambda) in lambdas[..=idx].iter().enumerate() {
        full.solve(lambda, lambdas[i.saturating_sub(1)], &mut rho, tol);
    }
    Ok(rho)
}

/// Automatic debiasing: plug-in plus (1/n_c)Σ α̂(xᵢ)(Yᵢ − ĝᵢ) with α̂(x) = xᵀρ̂, cross-fit
/// over k unit folds.
pub fn aml(ctx: &Context<'_>, k: usize) -> Result<Estimate> {
    let data = ctx.data;
    let folds = unit_folds(data, k, ctx.config.seed)?;
    let b0 = ctx.config.lasso.intercept;
    let link = &ctx.config.link;
    let riesz_folds = match ctx.config.lambda {
        crate::estimators::LambdaRule::Cv { folds, .. } => folds,
        crate::estimators::LambdaRule::Fixed(_) => crate::glm::DEFAULT_FOLDS,
    };
    let (mut tau, mut var) = (0.0, 0.0);
    for j in 0..k {
        let comp = complement(&folds, j);
        let (comp_t, comp_c): (Vec<usize>, Vec<usize>) = comp.iter().partition(|&&i| data.d()[i]);
        let outcome = ctx.fit(Model::Outcome, &comp_c)?;
        let coef = coefficients(&outcome, b0);
        let rho = fit_riesz(
            &covariate_rows(data, &comp_c, b0),
            &covariate_rows(data, &comp_t, b0),
            riesz_folds,
            derive_seed(ctx.config.seed, 0xA11 + j as u64),
        )?;
        let (fold_t, fold_c): (Vec<usize>, Vec<usize>) = folds[j].iter().partition(|&&i| data.d()[i]);
        let xt = covariate_rows(data, &fold_t, b0);
        let xc = covariate_rows(data, &fold_c, b0);
        let yc = data.outcomes(&fold_c);
        let n_cj = fold_c.len() as f64;
        let terms: Vec<f64> = xc
            .rows()
            .into_iter()
            .zip(&yc)
            .map(|(r, y)| {
                let r = r.as_slice().expect("standard layout");
                dot(r, &rho) * (y - link.g(dot(r, &coef)))
            })
            .collect();
        let mu = mean_prediction(&xt, &coef, link) + terms.iter().sum::<f64>() / n_cj;
        let yt = data.outcomes(&fold_t);
        let y_bar = yt.iter().sum::<f64>() / yt.len() as f64;
        tau += y_bar - mu;
        var += sample_mean_variance(&yt) + terms.iter().map(|t| t * t).sum::<f64>() / (n_cj * n_cj);
    }
    let k = k as f64;
    Estimate::new("AML", tau / k, var / (k * k), ctx.config.level)
}

/// Residual-balancing weights for a linear outcome model: unit derivative weights
/// (A = raw covariates), unit variance weights, ξ = treated covariate mean.
pub fn arb_weights(x_treated: &Array2<f64>, x_weight: &Array2<f64>, zeta: f64, solver: &SolverOptions) -> Result<(BalanceProblem, WeightSolution)> {
    let n_t = x_treated.nrows() as f64;
    let xi: Vec<f64> = (0..x_treated.ncols()).map(|j| x_treated.column(j).sum() / n_t).collect();
    let n_w = x_weight.nrows() as f64;
    let problem = BalanceProblem::new(xi, x_weight.clone(), vec![1.0; x_weight.nrows()], n_w.ln() / n_w)?;
    let sol = solve_weights_lagrange(&problem, zeta, solver)?;
    if sol.status == SolveStatus::Infeasible {
        return Err(Error::Infeasible { min_imbalance: f64::NAN, bound: problem.cap });
    }
    Ok((problem, sol))
}

/// Approximate residual balancing: linear lasso (with intercept) on all controls plus
/// balanced residuals, no splitting.
pub fn arb(ctx: &Context<'_>, zeta: f64) -> Result<Estimate> {
    let data = ctx.data;
    let controls = data.controls();
    let treated = data.treated();
    let fit = ctx.fit(Model::Linear, &controls)?;
    let xt = data.rows(&treated);
    let xc = data.rows(&controls);
    let (_, sol) = arb_weights(&xt, &xc, zeta, &ctx.config.solver)?;
    let predict = |r: ndarray::ArrayView1<'_, f64>| fit.intercept + dot(r.as_slice().expect("standard layout"), &fit.beta);
    let plug_in = xt.rows().into_iter().map(predict).sum::<f64>() / treated.len() as f64;
    let yc = data.outcomes(&controls);
    let resid: Vec<f64> = xc.rows().into_iter().zip(&yc).map(|(r, y)| y - predict(r)).collect();
    let mu = plug_in + sol.gamma.iter().zip(&resid).map(|(g, e)| g * e).sum::<f64>();
    let v_c: f64 = sol.gamma.iter().zip(&resid).map(|(g, e)| g * g * e * e).sum();
    let yt = data.outcomes(&treated);
    let y_bar = yt.iter().sum::<f64>() / yt.len() as f64;
    let mut est = Estimate::new("ARB", y_bar - mu, v_c + sample_mean_variance(&yt), ctx.config.level)?;
    est.diagnostics = Diagnostics {
        imbalance_sup: Some(sol.imbalance_sup),
        variance_term: Some(sol.variance_term),
        status: Some(sol.status),
        solver_iterations: sol.iterations,
        warnings: Vec::new(),
    };
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn naive_examples() {
        let x = Array2::zeros((5, 1));
        let data = Dataset::new(x, vec![true, true, true, false, false], vec![1.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((naive(&data, 0.95).unwrap().point - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn odds_weight_example() {
        let w = odds_weights(&[0.5, 0.75, 0.3], &[0, 1]);
        assert!((w[0] - 0.25).abs() < 1e-15 && (w[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn riesz_scalar_case() {
        let xc = array![[1.0], [1.0], [1.0]];
        let xt = array![[1.0], [1.0]];
        let prob = RieszProblem::new(&xc, &xt);
        let mut rho = vec![0.0];
        prob.solve(0.0, 0.0, &mut rho, 1e-12);
        assert!((rho[0] - 1.0).abs() < 1e-12);
    }
}
