//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes and returns plain numbers, strings or `Float64Array`s so the
//! page needs no generated TypeScript types.

use glm_balance::balance::SolverOptions;
use glm_balance::estimators::{proposed_weights, Context, EstimatorConfig, LambdaRule, Model, ProgramForm};
use glm_balance::io::histograms;
use glm_balance::link::{Link, LinkFn};
use glm_balance::methods::Method;
use glm_balance::sim::{generate_replication, run_cell, DesignSpec, SimConfig, Sparsity};
use wasm_bindgen::prelude::*;

const DEMO_LAMBDA: f64 = 0.03;

fn demo_config(n: usize, p: usize, n_sim: usize, seed: u64, dense: bool) -> SimConfig {
    let propensity = if dense { Sparsity::Dense } else { Sparsity::Sparse };
    SimConfig {
        n,
        p,
        design: DesignSpec::A { propensity, norm_d: 1.0, norm_y: 1.0 },
        ..SimConfig::design_a(n_sim, seed)
    }
}

fn demo_estimator() -> EstimatorConfig {
    EstimatorConfig { lambda: LambdaRule::Fixed(DEMO_LAMBDA), ..EstimatorConfig::default() }
}

/// g, g′ and g″ of `link` on `points` evenly spaced values in [lo, hi], concatenated
/// as three blocks of length `points`.
#[wasm_bindgen]
pub fn link_curves(link: &str, lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, String> {
    let link: Link = link.parse().map_err(|e: glm_balance::Error| e.to_string())?;
    if points < 2 || !(hi > lo) {
        return Err("need at least two points and lo < hi".into());
    }
    let xs: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
    let mut out = Vec::with_capacity(3 * points);
    out.extend(xs.iter().map(|&x| link.g(x)));
    out.extend(xs.iter().map(|&x| link.g1(x)));
    out.extend(xs.iter().map(|&x| link.g2(x)));
    Ok(out)
}

/// Imbalance/variance frontier of the weight program on one simulated dataset:
/// for each ζ in `zetas`, the pair (sup-norm imbalance, Σγ²w), flattened.
#[wasm_bindgen]
pub fn zeta_frontier(n: usize, p: usize, seed: u64, zetas: &[f64]) -> Result<Vec<f64>, String> {
    let cfg = demo_config(n, p, 1, seed, false);
    let (data, _) = generate_replication(&cfg, seed).map_err(|e| e.to_string())?;
    let ctx = Context::new(&data, demo_estimator());
    let beta = ctx.fit(Model::Outcome, &data.controls()).map_err(|e| e.to_string())?.beta.clone();
    let xt = data.rows(&data.treated());
    let xc = data.rows(&data.controls());
    let solver = SolverOptions::default();
    let mut out = Vec::with_capacity(2 * zetas.len());
    for &zeta in zetas {
        let (_, sol) = proposed_weights(&xt, &xc, &beta, &Link::Logit, ProgramForm::Lagrange { zeta }, &solver)
            .map_err(|e| e.to_string())?;
        out.push(sol.imbalance_sup);
        out.push(sol.variance_term);
    }
    Ok(out)
}

/// Runs a small Monte Carlo cell and returns JSON: per method, the estimates, the
/// true effects and the relative MSE.
#[wasm_bindgen]
pub fn simulate(n: usize, p: usize, n_sim: usize, seed: u64, dense: bool, methods: &str) -> Result<String, String> {
    let methods: Vec<Method> = methods
        .split(',')
        .map(|m| m.trim().parse::<Method>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let cfg = demo_config(n, p, n_sim, seed, dense);
    let cell = run_cell(&cfg, &methods, &demo_estimator(), 1).map_err(|e| e.to_string())?;
    let hists = histograms(std::slice::from_ref(&cell));
    let body: Vec<serde_json::Value> = cell
        .summaries
        .iter()
        .zip(&hists)
        .map(|(s, h)| {
            serde_json::json!({
                "method": s.method,
                "relative_mse": s.relative_mse,
                "coverage": s.coverage,
                "estimates": h.estimates,
                "tau_true": h.tau_true,
            })
        })
        .collect();
    serde_json::to_string(&body).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curves_have_three_blocks() {
        let v = link_curves("logit", -2.0, 2.0, 5).unwrap();
        assert_eq!(v.len(), 15);
        assert!((v[2] - 0.5).abs() < 1e-15 && (v[7] - 0.25).abs() < 1e-15 && v[12].abs() < 1e-15);
        assert!(link_curves("cloglog", -1.0, 1.0, 5).is_err());
        assert!(link_curves("probit", 1.0, 1.0, 5).is_err());
    }

    #[test]
    fn frontier_trades_imbalance_for_variance() {
        let v = zeta_frontier(150, 20, 3, &[0.1, 0.5, 0.9]).unwrap();
        assert_eq!(v.len(), 6);
        assert!(v[0] >= v[2] - 1e-9 && v[2] >= v[4] - 1e-9);
        assert!(v[1] <= v[3] + 1e-12 && v[3] <= v[5] + 1e-12);
    }

    #[test]
    fn simulate_returns_json() {
        let s = simulate(120, 15, 3, 1, false, "naive, db6").unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 2);
        assert_eq!(v[1]["estimates"].as_array().unwrap().len(), 3);
        assert!(simulate(120, 15, 3, 1, false, "bogus").is_err());
    }
}
