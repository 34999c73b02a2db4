use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use glm_balance::cli::parse_config;
use glm_balance::io::{feature_expand, load_csv, ColumnSpec, ExpansionSpec, Interactions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_glm-balance"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn nsw_like(path: &Path, n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = String::from("treat,age,educ,black,hisp,marr,re74,re75,employed78\n");
    for _ in 0..n {
        let age: f64 = rng.random_range(17.0..55.0);
        let educ: f64 = rng.random_range(3.0..16.0);
        let black = rng.random_bool(0.6) as u8;
        let hisp = rng.random_bool(0.15) as u8;
        let marr = rng.random_bool(0.3) as u8;
        let re74: f64 = rng.random_range(0.0..3.0);
        let re75: f64 = rng.random_range(0.0..3.0);
        let score = -0.3 + 0.4 * black as f64 - 0.2 * re74;
        let treat = rng.random_bool(1.0 / (1.0 + (-score).exp())) as u8;
        let lin = -0.5 + 0.3 * treat as f64 + 0.3 * re75 - 0.02 * (age - 30.0);
        let y = rng.random_bool(1.0 / (1.0 + (-lin).exp())) as u8;
        s.push_str(&format!("{treat},{age:.1},{educ:.0},{black},{hisp},{marr},{re74:.3},{re75:.3},{y}\n"));
    }
    fs::write(path, s).unwrap();
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(&path, "zeta = 0.3\nn = 200\n").unwrap();
    let p = path.to_str().unwrap();
    let cfg = parse_config(["glm-balance", "simulate", "--config", p, "--zeta", "0.6"]).unwrap();
    assert_eq!(cfg.estimator.zeta, 0.6);
    assert_eq!(cfg.sim.n, 200);
    let cfg = parse_config(["glm-balance", "simulate", "--config", p]).unwrap();
    assert_eq!(cfg.estimator.zeta, 0.3);

    fs::write(&path, "zeta = 0.3\nbogus = 1\n").unwrap();
    assert!(parse_config(["glm-balance", "simulate", "--config", p]).is_err());
}

#[test]
fn nsw_expansion_yields_sixty_columns() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("nsw.csv");
    nsw_like(&csv, 50, 3);
    let columns = ColumnSpec {
        outcome: "employed78".into(),
        treatment: "treat".into(),
        covariates: Some(["age", "educ", "black", "hisp", "marr", "re74", "re75"].map(String::from).to_vec()),
    };
    let raw = load_csv(&csv, &columns).unwrap();
    let cfg = parse_config([
        "glm-balance",
        "estimate",
        "--config",
        configs().join("nsw_60.toml").to_str().unwrap(),
        "--input",
        csv.to_str().unwrap(),
    ])
    .unwrap();
    let input = cfg.input.unwrap();
    let expanded = feature_expand(&raw, &input.expansion).unwrap();
    assert_eq!(expanded.data.p(), 60);
    assert_eq!(expanded.covariate_names[7], "age^2");
    assert_eq!(expanded.covariate_names[8], "age^3");
    assert!(expanded.covariate_names.contains(&"re74:re75^2".to_string()));
    let i = expanded.covariate_names.iter().position(|n| n == "re74:re75^2").unwrap();
    for r in 0..50 {
        let x = expanded.data.x();
        assert!((x[[r, i]] - x[[r, 5]] * x[[r, 6]].powi(2)).abs() < 1e-12);
    }

    let all = feature_expand(&raw, &ExpansionSpec { degree: 2, interactions: Interactions::AllPairs }).unwrap();
    assert_eq!(all.data.p(), 7 + 4 + 21);
}

#[test]
fn estimate_on_csv_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("nsw.csv");
    nsw_like(&csv, 500, 11);
    let out = dir.path().join("out");
    let status = bin()
        .args(["estimate", "--config"])
        .arg(configs().join("nsw_60.toml"))
        .arg("--input")
        .arg(&csv)
        .args(["--methods", "naive,db6", "--lambda", "0.02", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    let table = fs::read_to_string(out.join("estimates.csv")).unwrap();
    assert!(table.starts_with("method,estimate,std_error,ci_low,ci_high\n"));
    assert_eq!(table.lines().count(), 3);
    let details: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("details.json")).unwrap()).unwrap();
    assert_eq!(details["covariates"].as_array().unwrap().len(), 60);
    let est = details["estimates"][1]["point"].as_f64().unwrap();
    assert!(est.abs() < 1.0);
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(&csv, "y,d,x\n1,1,0.5\n0,7,1\n").unwrap();
    let o = bin().args(["estimate", "--outcome", "y", "--treatment", "d", "--input"]).arg(&csv).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 2"));
    let o = bin().args(["simulate", "--rho", "1.2"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = bin().args(["simulate", "--frobnicate"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn check_links_passes() {
    let o = bin().arg("check-links").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for l in ["logit", "probit", "t1", "t3", "t5"] {
        assert!(text.contains(l));
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let args = ["simulate", "--n", "120", "--p", "30", "--nsim", "3", "--methods", "naive,regression,db6", "--lambda", "0.03", "--seed", "5"];
    let run = |out: &Path, extra: &[&str]| {
        let o = bin().args(args).args(extra).arg("--out").arg(out).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    };
    run(&a, &[]);
    let first = dir_bytes(&a);
    run(&a, &["--threads", "2"]);
    let second = dir_bytes(&a);
    let strip = |v: &[(String, Vec<u8>)]| v.iter().filter(|(n, _)| n != "manifest.json").cloned().collect::<Vec<_>>();
    assert_eq!(strip(&first), strip(&second));

    run(&a, &[]);
    assert_eq!(first, dir_bytes(&a));

    let b = dir.path().join("b");
    let o = bin().args(["simulate", "--config"]).arg(a.join("manifest.json")).arg("--out").arg(&b).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(strip(&first), strip(&dir_bytes(&b)));
}
