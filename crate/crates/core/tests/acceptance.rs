//! Acceptance suite. Each check writes one `PASS`/`FAIL` line straight to stdout
//! (bypassing the test harness capture) and then asserts.

mod common;

use std::io::Write;
use std::path::Path;
use std::process::Command;

use glm_balance::estimators::EstimatorConfig;
use glm_balance::link::{check_link_assumptions, uniform_grid, Link};
use glm_balance::methods::Method;
use glm_balance::sim::{run_cell, run_zeta_sweep, CellResult, DesignSpec, SimConfig, Sparsity, SWEEP_ZETAS};

const SEED: u64 = 2024;
const KKT_TOL: f64 = 1e-6;

fn report(name: &str, pass: bool, detail: &str) -> bool {
    let line = format!("{} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    pass
}

fn within_factor_two(value: f64, reference: f64) -> bool {
    value >= reference / 2.0 && value <= reference * 2.0
}

fn rmse(cell: &CellResult, method: &str) -> f64 {
    cell.summary(method).unwrap_or_else(|| panic!("no summary for {method}")).relative_mse
}

fn magnitudes(cell: &CellResult, reference: &[(&str, f64)]) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for &(m, r) in reference {
        let v = rmse(cell, m);
        let good = within_factor_two(v, r);
        ok &= good;
        parts.push(format!("{m} {v:.3} (ref {r}){}", if good { "" } else { " OUT" }));
    }
    (ok, parts.join(", "))
}

fn design_a(propensity: Sparsity, norm: f64, p: usize, n_sim: usize) -> SimConfig {
    SimConfig {
        p,
        design: DesignSpec::A { propensity, norm_d: norm, norm_y: norm },
        ..SimConfig::design_a(n_sim, SEED)
    }
}

fn ordering_cell() -> (bool, f64) {
    let cfg = design_a(Sparsity::Sparse, 1.0, 800, 200);
    let methods = [Method::Naive, Method::Regression, Method::Ipw, Method::Db(2), Method::Db(6)];
    let cell = run_cell(&cfg, &methods, &EstimatorConfig::default(), 1).unwrap();
    let (db6, db2, reg, ipw, naive) = (rmse(&cell, "DB6"), rmse(&cell, "DB2"), rmse(&cell, "Regression"), rmse(&cell, "IPW"), rmse(&cell, "Naive"));
    let order = db6 < db2 && db2 < naive && db6 < reg && reg < naive && db6 < ipw;
    let (mag, detail) =
        magnitudes(&cell, &[("DB6", 0.067), ("DB2", 0.087), ("Regression", 0.162), ("IPW", 0.196), ("Naive", 1.176)]);
    let pass = report(
        "design (a) sparse, norms 1/1, 200 reps: DB6<DB2<Naive, DB6<Regression<Naive, DB6<IPW, factor-2 magnitudes",
        order && mag,
        &format!("ordering {}; {detail}", if order { "holds" } else { "violated" }),
    );
    (pass, cell.max_kkt())
}

fn dense_cell() -> (bool, f64) {
    let cfg = design_a(Sparsity::Dense, 4.0, 800, 200);
    let cell = run_cell(&cfg, &Method::all(), &EstimatorConfig::default(), 1).unwrap();
    let db6 = rmse(&cell, "DB6");
    let minimum = cell.summaries.iter().filter(|s| s.method != "DB6").all(|s| db6 < s.relative_mse);
    let ipw_over_reg = rmse(&cell, "IPW") > rmse(&cell, "Regression");
    let (mag, detail) = magnitudes(
        &cell,
        &[
            ("Naive", 2.338),
            ("Regression", 0.210),
            ("IPW", 0.711),
            ("DML1", 0.698),
            ("DML2", 0.369),
            ("AML", 0.168),
            ("ARB", 0.191),
            ("DB1", 0.204),
            ("DB2", 0.164),
            ("DB6", 0.108),
        ],
    );
    let others: Vec<String> =
        cell.summaries.iter().map(|s| format!("{} {:.3}", s.method, s.relative_mse)).collect();
    let pass = report(
        "dense propensity, norms 4/4, 200 reps: IPW > Regression, DB6 minimal, factor-2 magnitudes",
        ipw_over_reg && minimum && mag,
        &format!(
            "IPW>Regression {ipw_over_reg}, DB6 minimal {minimum}; {detail}; all: {}",
            others.join(", ")
        ),
    );
    (pass, cell.max_kkt())
}

fn coverage_cell() -> (bool, f64) {
    let cfg = design_a(Sparsity::Sparse, 1.0, 600, 300);
    let cell = run_cell(&cfg, &[Method::Db(6)], &EstimatorConfig::default(), 1).unwrap();
    let s = cell.summary("DB6").unwrap();
    let cover_ok = (0.90..=0.97).contains(&s.coverage);
    let length_ok = (s.mean_ci_length - 0.201).abs() <= 0.25 * 0.201;
    let pass = report(
        "coverage, p=600, 300 reps: DB6 coverage in [0.90, 0.97], mean CI length within 25% of 0.201",
        cover_ok && length_ok,
        &format!("coverage {:.3}, mean length {:.4}", s.coverage, s.mean_ci_length),
    );
    (pass, cell.max_kkt())
}

fn zeta_sweep() -> (bool, f64) {
    let cfg = design_a(Sparsity::Sparse, 1.0, 800, 200);
    let cell = run_zeta_sweep(&cfg, &SWEEP_ZETAS, 6, &EstimatorConfig::default(), 1).unwrap();
    let values: Vec<f64> = cell.summaries.iter().map(|s| s.relative_mse).collect();
    let (lo, hi) = values.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    let ratio = hi / lo;
    let listed: Vec<String> = cell.summaries.iter().map(|s| format!("{} {:.4}", s.method, s.relative_mse)).collect();
    let pass = report(
        "zeta sweep, 200 reps: max/min DB6 relative MSE <= 2",
        ratio <= 2.0,
        &format!("ratio {ratio:.3}; {}", listed.join(", ")),
    );
    (pass, cell.max_kkt())
}

fn kkt_line(cell: &str, kkt: f64) -> bool {
    report(&format!("KKT residual of every reported lasso fit ({cell}) <= 1e-6"), kkt <= KKT_TOL, &format!("max {kkt:.2e}"))
}

// The Monte Carlo cells take from minutes to well over an hour each; run them with
// `cargo test --release --test acceptance -- --ignored --test-threads 1`.

#[test]
#[ignore]
fn mc_ordering_sparse() {
    let (pass, kkt) = ordering_cell();
    assert!(kkt_line("sparse ordering cell", kkt) & pass);
}

#[test]
#[ignore]
fn mc_dense_propensity() {
    let (pass, kkt) = dense_cell();
    assert!(kkt_line("dense cell", kkt) & pass);
}

#[test]
#[ignore]
fn mc_coverage() {
    let (pass, kkt) = coverage_cell();
    assert!(kkt_line("coverage cell", kkt) & pass);
}

#[test]
#[ignore]
fn mc_zeta_sweep() {
    let (pass, kkt) = zeta_sweep();
    assert!(kkt_line("zeta sweep", kkt) & pass);
}

#[test]
fn monte_carlo_notice() {
    let line = "SKIP Monte Carlo cells (ordering, dense propensity, coverage, zeta sweep): run with --ignored\n";
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
}

#[test]
fn solver_oracle() {
    let r = common::oracle_suite();
    let pass = r.worst_gap <= 1e-4 && r.worst_sum_error <= 1e-9 && r.worst_bound_violation <= 1e-12;
    assert!(report(
        "weight solver vs grid oracle, 100 programs: objective <= oracle + 1e-4, feasible",
        pass,
        &format!(
            "worst excess {:.2e}, sum error {:.1e}, bound violation {:.1e}",
            r.worst_gap, r.worst_sum_error, r.worst_bound_violation
        ),
    ));
}

#[test]
fn lasso_suite() {
    let bad = common::lambda_max_failures();
    let (gap, kkt) = common::newton_gap();
    let pass = bad.is_empty() && gap <= 1e-4 && kkt <= KKT_TOL;
    assert!(report(
        "lasso: zero fit above lambda_max (50 instances), Newton agreement 1e-4 (20 instances)",
        pass,
        &format!("lambda_max failures {bad:?}, max coordinate gap {gap:.2e}, KKT {kkt:.1e}"),
    ));
}

#[test]
fn link_suite() {
    let grid = uniform_grid(-10.0, 10.0, 0.01);
    let links = [Link::Logit, Link::Probit, Link::StudentT { nu: 1 }, Link::StudentT { nu: 3 }, Link::StudentT { nu: 5 }];
    let mut failing = Vec::new();
    for l in links {
        let r = check_link_assumptions(&l, &grid);
        failing.extend(r.checks.iter().filter(|c| !c.pass).map(|c| format!("{l}:{}", c.name)));
    }
    assert!(report(
        "link invariants for logit, probit, t1, t3, t5 on [-10, 10] step 0.01",
        failing.is_empty(),
        &if failing.is_empty() { "all checks pass".to_string() } else { failing.join(", ") },
    ));
}

#[test]
fn algebraic_identities() {
    let a = common::contrast_identity();
    let b = common::true_beta_identity();
    let c = common::constant_propensity_identity();
    let (d, d_scaled) = common::constant_link_identity();
    let pass = a <= 1e-12 && b <= 1e-12 && c <= 1e-12 && d <= 1e-6 && d_scaled <= 1e-6;
    assert!(report(
        "identities: contrast at target moment, true-beta noise, constant-propensity DML, constant-derivative weights",
        pass,
        &format!("gaps {a:.1e}, {b:.1e}, {c:.1e}, {d:.1e}"),
    ));
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn determinism() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_glm-balance");
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let mut ok = true;
    let mut compared = 0;
    let runs: [&[&str]; 3] = [
        &["simulate", "--n", "150", "--p", "40", "--nsim", "4", "--methods", "naive,ipw,dml2,db2,db6", "--seed", "9"],
        &["sweep-zeta", "--n", "150", "--p", "40", "--nsim", "3", "--seed", "9", "--format", "json"],
        &["check-links"],
    ];
    for args in runs {
        let o = Command::new(bin).args(args).arg("--out").arg(&first).output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let o = Command::new(bin).arg(args[0]).arg("--config").arg(first.join("manifest.json")).arg("--out").arg(&second).output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let (a, b) = (snapshot(&first), snapshot(&second));
        compared += a.len();
        ok &= a == b;
        std::fs::remove_dir_all(&first).unwrap();
        std::fs::remove_dir_all(&second).unwrap();
    }
    assert!(report(
        "determinism: re-running from the written manifest reproduces every output byte",
        ok,
        &format!("{compared} files compared across simulate, sweep-zeta and check-links"),
    ));
}

#[test]
fn declared_not_reproducible() {
    let line = "NOT REPRODUCED (declared) NSW table values: the covariate expansion is under-specified, \
                so `estimate` with configs/nsw_60.toml is a workflow demonstration only; full 1000/2000-replication \
                grids are supported through `benchmark --nsim` but not run here\n";
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
}
