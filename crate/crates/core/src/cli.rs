//! Command-line front end: argument and config-file parsing, command dispatch and
//! exit codes (0 success, 1 usage, 2 data, 3 numeric failure).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate_target, Context, EstimatorConfig, LambdaRule, SplitScheme, Target};
use crate::glm::DEFAULT_FOLDS;
use crate::io::{
    emit_report, feature_expand, histograms, load_csv, metrics_table, sig4, ColumnSpec, ExpansionSpec, Format,
    Interactions, Manifest, Metric, MetricsTable,
};
use crate::link::{check_link_assumptions, uniform_grid, Link};
use crate::methods::{run_method, Method};
use crate::rng::derive_seed;
use crate::sim::{
    run_cell, run_zeta_sweep, CellResult, DesignSpec, OutcomeShape, PropensityShape, SimConfig, Sparsity, SWEEP_ZETAS,
};

#[derive(Debug, Parser)]
#[command(name = "glm-balance", version, about = "Debiased treatment-effect estimation for high-dimensional binary-outcome GLMs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo study of one simulation cell.
    Simulate(Flags),
    /// The eight-scenario grid of a design.
    Benchmark(Flags),
    /// Estimate treatment effects on a CSV file.
    Estimate(Flags),
    /// Proposed estimator across balance penalties on shared replications.
    SweepZeta(Flags),
    /// Verify the link-function conditions on [-10, 10] with step 0.01.
    CheckLinks(Flags),
}

impl Command {
    fn parts(self) -> (CommandKind, Flags) {
        match self {
            Command::Simulate(f) => (CommandKind::Simulate, f),
            Command::Benchmark(f) => (CommandKind::Benchmark, f),
            Command::Estimate(f) => (CommandKind::Estimate, f),
            Command::SweepZeta(f) => (CommandKind::SweepZeta, f),
            Command::CheckLinks(f) => (CommandKind::CheckLinks, f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Simulate,
    Benchmark,
    Estimate,
    SweepZeta,
    CheckLinks,
}

impl CommandKind {
    pub fn name(&self) -> &'static str {
        match self {
            CommandKind::Simulate => "simulate",
            CommandKind::Benchmark => "benchmark",
            CommandKind::Estimate => "estimate",
            CommandKind::SweepZeta => "sweep-zeta",
            CommandKind::CheckLinks => "check-links",
        }
    }
}

/// Flags shared by all commands. Every field may also be set in a TOML or JSON config
/// file (`--config`); flags given on the command line take precedence.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Flags {
    /// TOML or JSON file with default values for any flag (a run manifest also works).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Coefficient design: a (sparse outcome, sparse or dense propensity), b (strong
    /// outcome signal), c (sparsity mix).
    #[arg(long, value_parser = ["a", "b", "c"])]
    pub design: Option<String>,
    /// Sample size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of covariates.
    #[arg(long)]
    pub p: Option<usize>,
    /// AR(1) covariate correlation ρ, Σᵢⱼ = ρ^|i−j|.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Monte Carlo replications per cell.
    #[arg(long)]
    pub nsim: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Imbalance/variance trade-off ζ in [0, 1] of the weight program (default 0.5).
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Sample-splitting variant of the proposed estimator: db1 split, db2–db5 cross-fit,
    /// db6 none.
    #[arg(long, value_parser = ["db1", "db2", "db3", "db4", "db5", "db6"])]
    pub split: Option<String>,
    /// Comma-separated methods: naive, regression, ipw, dml1–dml5, aml, arb, db1–db6.
    #[arg(long)]
    pub methods: Option<String>,
    /// Propensity trimming bounds "low,high" (default 0.05,0.95).
    #[arg(long)]
    pub trim: Option<String>,
    /// Cross-validation folds for penalty selection (default 10).
    #[arg(long)]
    pub folds: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_parser = ["csv", "json"])]
    pub format: Option<String>,

    /// Worker threads for replications (0 = all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Outcome-model link used by the estimators: logit, probit or tN (Student-t).
    #[arg(long)]
    pub link: Option<String>,
    /// Fixed penalty instead of cross-validation.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Confidence level of reported intervals.
    #[arg(long)]
    pub level: Option<f64>,
    /// Comma-separated ζ values for sweep-zeta (default 0.2,0.35,0.5,0.65,0.8).
    #[arg(long)]
    pub zetas: Option<String>,

    /// Design a: propensity coefficient shape, sparse (1/j²) or dense (1/√j).
    #[arg(long, value_parser = ["sparse", "dense"])]
    pub propensity: Option<String>,
    /// Design a: ‖β_D‖₂.
    #[arg(long)]
    pub norm_d: Option<f64>,
    /// Designs a and b: ‖β_Y‖₂.
    #[arg(long)]
    pub norm_y: Option<f64>,
    /// Design c: outcome coefficient shape.
    #[arg(long, value_parser = ["dense", "harmonic", "mod-sparse", "sparse"])]
    pub outcome_shape: Option<String>,
    /// Design c: propensity coefficient shape.
    #[arg(long, value_parser = ["dense", "sparse"])]
    pub propensity_shape: Option<String>,

    /// Estimate: input CSV with a header row.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Estimate: outcome column (0/1).
    #[arg(long)]
    pub outcome: Option<String>,
    /// Estimate: treatment column (0/1).
    #[arg(long)]
    pub treatment: Option<String>,
    /// Estimate: comma-separated covariate columns (default: all other columns).
    #[arg(long)]
    pub covariates: Option<String>,
    /// Estimate: highest power added for non-binary covariates.
    #[arg(long)]
    pub degree: Option<u32>,
    /// Estimate: "all" for every covariate pair, or "a:b,c:d" (names may be powers such as age^2).
    #[arg(long)]
    pub interactions: Option<String>,
    /// Estimate: atet, atec or ate (the latter two for the proposed estimator only).
    #[arg(long, value_parser = ["atet", "atec", "ate"])]
    pub target: Option<String>,
}

macro_rules! overlay {
    ($top:expr, $base:expr; $($f:ident),*) => {
        Flags { config: $top.config.clone(), $($f: $top.$f.clone().or($base.$f.clone())),* }
    };
}

impl Flags {
    /// Values from `self`, falling back to `base`.
    pub fn over(&self, base: &Flags) -> Flags {
        overlay!(self, base; design, n, p, rho, nsim, seed, zeta, split, methods, trim, folds, out, format, threads,
            link, lambda, level, zetas, propensity, norm_d, norm_y, outcome_shape, propensity_shape, input, outcome,
            treatment, covariates, degree, interactions, target)
    }

    fn given(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        macro_rules! mark {
            ($($f:ident => $name:literal),*) => { $(if self.$f.is_some() { v.push($name); })* };
        }
        mark!(design => "--design", n => "--n", p => "--p", rho => "--rho", nsim => "--nsim", zeta => "--zeta",
            split => "--split", methods => "--methods", trim => "--trim", folds => "--folds", lambda => "--lambda",
            zetas => "--zetas", propensity => "--propensity", norm_d => "--norm-d", norm_y => "--norm-y",
            outcome_shape => "--outcome-shape", propensity_shape => "--propensity-shape", input => "--input",
            outcome => "--outcome", treatment => "--treatment", covariates => "--covariates", degree => "--degree",
            interactions => "--interactions", target => "--target", link => "--link", level => "--level",
            threads => "--threads", seed => "--seed");
        v
    }
}

/// Where an estimate run reads its data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputConfig {
    pub path: PathBuf,
    pub columns: ColumnSpec,
    pub expansion: ExpansionSpec,
    pub target: Target,
}

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub sim: SimConfig,
    pub methods: Vec<Method>,
    pub split: usize,
    pub estimator: EstimatorConfig,
    pub zetas: Vec<f64>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub threads: usize,
    pub input: Option<InputConfig>,
    /// The merged flags, enough to re-run the command via `--config`.
    pub flags: Flags,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn list<T>(raw: &str, flag: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let items: Vec<T> = raw.split(',').map(str::trim).filter(|s| !s.is_empty()).map(parse).collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(usage(format!("{flag} needs at least one value")));
    }
    Ok(items)
}

fn number(s: &str, flag: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| usage(format!("{flag}: '{s}' is not a number")))
}

fn read_config_file(path: &Path) -> Result<Flags> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("--config {}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) || text.trim_start().starts_with('{');
    if is_json {
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| usage(format!("--config: {e}")))?;
        let inner = match value.get("config").and_then(|c| c.get("flags")) {
            Some(flags) if value.get("tool").is_some() => flags.clone(),
            _ => value,
        };
        serde_json::from_value(inner).map_err(|e| usage(format!("--config: {e}")))
    } else {
        toml::from_str(&text).map_err(|e| usage(format!("--config: {e}")))
    }
}

fn check_applicable(command: CommandKind, cli: &Flags, design: &str) -> Result<()> {
    let sim_only = ["--design", "--n", "--p", "--rho", "--nsim", "--propensity", "--norm-d", "--norm-y", "--outcome-shape", "--propensity-shape"];
    let input_only = ["--input", "--outcome", "--treatment", "--covariates", "--degree", "--interactions", "--target"];
    let given = cli.given();
    let offending = |names: &[&str]| given.iter().copied().find(|g| names.contains(g));
    let bad = match command {
        CommandKind::Estimate => offending(&sim_only).or_else(|| offending(&["--zetas"])),
        CommandKind::CheckLinks => offending(&given.iter().copied().filter(|g| *g != "--seed").collect::<Vec<_>>()),
        CommandKind::SweepZeta => offending(&input_only).or_else(|| offending(&["--methods", "--zeta"])),
        CommandKind::Simulate | CommandKind::Benchmark => offending(&input_only).or_else(|| offending(&["--zetas"])),
    };
    if let Some(flag) = bad {
        return Err(usage(format!("flag {flag} does not apply to {}", command.name())));
    }
    let design_flags: &[&str] = match design {
        "a" => &["--outcome-shape", "--propensity-shape"],
        "b" => &["--propensity", "--norm-d", "--outcome-shape", "--propensity-shape"],
        _ => &["--propensity", "--norm-d", "--norm-y"],
    };
    if command == CommandKind::Benchmark {
        if let Some(flag) = offending(&["--propensity", "--norm-d", "--norm-y", "--outcome-shape", "--propensity-shape"]) {
            return Err(usage(format!("flag {flag} conflicts with benchmark, which sweeps the design's scenarios")));
        }
    }
    if let Some(flag) = offending(design_flags) {
        return Err(usage(format!("flag {flag} conflicts with --design {design}")));
    }
    Ok(())
}

/// Merges command-line flags over the optional config file and validates the result.
pub fn resolve(command: CommandKind, cli: Flags) -> Result<RunConfig> {
    let file = match &cli.config {
        Some(path) => read_config_file(path)?,
        None => Flags::default(),
    };
    let f = cli.over(&file);
    let design_kind = f.design.clone().unwrap_or_else(|| "a".into());
    check_applicable(command, &cli, &design_kind)?;

    let zeta = f.zeta.unwrap_or(0.5);
    if !(0.0..=1.0).contains(&zeta) {
        return Err(usage(format!("--zeta must lie in [0, 1], got {zeta}")));
    }
    let design = match design_kind.as_str() {
        "a" => DesignSpec::A {
            propensity: match f.propensity.as_deref() {
                Some("dense") => Sparsity::Dense,
                None | Some("sparse") => Sparsity::Sparse,
                Some(o) => return Err(usage(format!("--propensity: unknown shape '{o}'"))),
            },
            norm_d: f.norm_d.unwrap_or(1.0),
            norm_y: f.norm_y.unwrap_or(1.0),
        },
        "b" => DesignSpec::B { norm_y: f.norm_y.unwrap_or(10.0) },
        "c" => DesignSpec::C {
            outcome: match f.outcome_shape.as_deref() {
                Some("dense") => OutcomeShape::Dense,
                Some("harmonic") => OutcomeShape::Harmonic,
                Some("mod-sparse") => OutcomeShape::ModSparse,
                None | Some("sparse") => OutcomeShape::Sparse,
                Some(o) => return Err(usage(format!("--outcome-shape: unknown shape '{o}'"))),
            },
            propensity: match f.propensity_shape.as_deref() {
                Some("dense") => PropensityShape::Dense,
                None | Some("sparse") => PropensityShape::Sparse,
                Some(o) => return Err(usage(format!("--propensity-shape: unknown shape '{o}'"))),
            },
        },
        other => return Err(usage(format!("--design: unknown design '{other}'"))),
    };
    let sim = SimConfig {
        n: f.n.unwrap_or(500),
        p: f.p.unwrap_or(800),
        rho: f.rho.unwrap_or(0.5),
        design,
        n_sim: f.nsim.unwrap_or(200),
        seed: f.seed.unwrap_or(0),
        zeta,
    };
    if command != CommandKind::Estimate && command != CommandKind::CheckLinks {
        sim.validate()?;
    }

    let methods = match &f.methods {
        Some(raw) => list(raw, "--methods", |s| s.parse::<Method>())?,
        None => Method::all(),
    };
    let split = match f.split.as_deref() {
        Some(s) => s.strip_prefix("db").and_then(|k| k.parse::<usize>().ok()).filter(|k| (1..=6).contains(k))
            .ok_or_else(|| usage(format!("--split: unknown variant '{s}'")))?,
        None => 6,
    };
    let trim = match &f.trim {
        Some(raw) => {
            let v = list(raw, "--trim", |s| number(s, "--trim"))?;
            if v.len() != 2 || !(0.0 < v[0] && v[0] < v[1] && v[1] < 1.0) {
                return Err(usage(format!("--trim must be 'low,high' with 0 < low < high < 1, got '{raw}'")));
            }
            (v[0], v[1])
        }
        None => (0.05, 0.95),
    };
    let folds = f.folds.unwrap_or(DEFAULT_FOLDS);
    if folds < 2 {
        return Err(usage(format!("--folds must be at least 2, got {folds}")));
    }
    let level = f.level.unwrap_or(0.95);
    if !(level > 0.0 && level < 1.0) {
        return Err(usage(format!("--level must lie in (0, 1), got {level}")));
    }
    let lambda = match f.lambda {
        Some(l) if l >= 0.0 && l.is_finite() => LambdaRule::Fixed(l),
        Some(l) => return Err(usage(format!("--lambda must be nonnegative, got {l}"))),
        None => LambdaRule::Cv { folds, seed: derive_seed(sim.seed, 0xC5) },
    };
    let link: Link = match &f.link {
        Some(s) => s.parse()?,
        None => Link::Logit,
    };
    let estimator = EstimatorConfig { link, zeta, lambda, trim, level, seed: sim.seed, ..EstimatorConfig::default() };
    let zetas = match &f.zetas {
        Some(raw) => list(raw, "--zetas", |s| number(s, "--zetas"))?,
        None => SWEEP_ZETAS.to_vec(),
    };
    if zetas.iter().any(|z| !(0.0..=1.0).contains(z)) {
        return Err(usage("--zetas values must lie in [0, 1]"));
    }
    let format = match f.format.as_deref() {
        None | Some("csv") => Format::Csv,
        Some("json") => Format::Json,
        Some(o) => return Err(usage(format!("--format: unknown format '{o}'"))),
    };
    let input = if command == CommandKind::Estimate {
        let path = f.input.clone().ok_or_else(|| usage("estimate needs --input"))?;
        let outcome = f.outcome.clone().ok_or_else(|| usage("estimate needs --outcome"))?;
        let treatment = f.treatment.clone().ok_or_else(|| usage("estimate needs --treatment"))?;
        if outcome == treatment {
            return Err(usage("--outcome and --treatment must name different columns"));
        }
        let covariates = f.covariates.as_deref().map(|raw| list(raw, "--covariates", |s| Ok(s.to_string()))).transpose()?;
        if let Some(c) = &covariates {
            let mut seen = std::collections::HashSet::new();
            if let Some(dup) = c.iter().find(|n| !seen.insert(n.as_str()) || **n == outcome || **n == treatment) {
                return Err(usage(format!("--covariates: column '{dup}' listed twice or reused")));
            }
        }
        let interactions = match f.interactions.as_deref() {
            None | Some("none") => Interactions::None,
            Some("all") => Interactions::AllPairs,
            Some(raw) => Interactions::Pairs(list(raw, "--interactions", |s| {
                s.split_once(':')
                    .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
                    .ok_or_else(|| usage(format!("--interactions: expected 'a:b', got '{s}'")))
            })?),
        };
        let target = match f.target.as_deref() {
            None | Some("atet") => Target::Atet,
            Some("atec") => Target::Atec,
            Some("ate") => Target::Ate,
            Some(o) => return Err(usage(format!("--target: unknown target '{o}'"))),
        };
        if target != Target::Atet && methods.iter().any(|m| !matches!(m, Method::Db(_))) {
            return Err(usage("--target atec/ate is available for the db1–db6 methods only"));
        }
        Some(InputConfig {
            path,
            columns: ColumnSpec { outcome, treatment, covariates },
            expansion: ExpansionSpec { degree: f.degree.unwrap_or(1), interactions },
            target,
        })
    } else {
        None
    };
    Ok(RunConfig {
        command,
        sim,
        methods,
        split,
        estimator,
        zetas,
        out: f.out.clone(),
        format,
        threads: f.threads.unwrap_or(0),
        input,
        flags: Flags { config: None, ..f },
    })
}

/// Parses `args` (including the program name).
pub fn parse_config<I, T>(args: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| usage(e.to_string()))?;
    let (kind, flags) = cli.command.parts();
    resolve(kind, flags)
}

/// The eight scenarios a benchmark sweeps for a design, in table column order.
pub fn benchmark_grid(base: &SimConfig) -> Vec<SimConfig> {
    let designs: Vec<DesignSpec> = match base.design {
        DesignSpec::A { .. } => [Sparsity::Sparse, Sparsity::Dense]
            .into_iter()
            .flat_map(|s| [1.0, 4.0].into_iter().flat_map(move |d| [1.0, 4.0].into_iter().map(move |y| DesignSpec::A { propensity: s, norm_d: d, norm_y: y })))
            .collect(),
        DesignSpec::B { .. } => (1..=8).map(|k| DesignSpec::B { norm_y: 10.0 * k as f64 }).collect(),
        DesignSpec::C { .. } => [PropensityShape::Dense, PropensityShape::Sparse]
            .into_iter()
            .flat_map(|d| {
                [OutcomeShape::Dense, OutcomeShape::Harmonic, OutcomeShape::ModSparse, OutcomeShape::Sparse]
                    .into_iter()
                    .map(move |o| DesignSpec::C { outcome: o, propensity: d })
            })
            .collect(),
    };
    designs
        .into_iter()
        .enumerate()
        .map(|(i, design)| SimConfig { design, seed: derive_seed(base.seed, i as u64), ..*base })
        .collect()
}

/// What a command produced, before writing.
pub struct Outcome {
    pub tables: Vec<MetricsTable>,
    pub cells: Vec<CellResult>,
    pub extra: serde_json::Value,
    /// Failures beyond policy: flagged cells, failed methods or failed link checks.
    pub numeric_failure: bool,
}

fn cell_tables(cells: &[CellResult]) -> Vec<MetricsTable> {
    [Metric::RelativeMse, Metric::MedianSe, Metric::Coverage, Metric::MeanCiLength, Metric::Failures]
        .iter()
        .map(|m| metrics_table(cells, *m))
        .collect()
}

fn from_cells(cells: Vec<CellResult>) -> Outcome {
    let numeric_failure = cells.iter().any(|c| c.summaries.iter().any(|s| s.flagged));
    Outcome { tables: cell_tables(&cells), cells, extra: serde_json::Value::Null, numeric_failure }
}

/// Runs a resolved configuration.
pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    match cfg.command {
        CommandKind::Simulate => Ok(from_cells(vec![run_cell(&cfg.sim, &cfg.methods, &cfg.estimator, cfg.threads)?])),
        CommandKind::Benchmark => {
            let cells = benchmark_grid(&cfg.sim)
                .iter()
                .map(|c| run_cell(c, &cfg.methods, &cfg.estimator, cfg.threads))
                .collect::<Result<Vec<_>>>()?;
            Ok(from_cells(cells))
        }
        CommandKind::SweepZeta => Ok(from_cells(vec![run_zeta_sweep(&cfg.sim, &cfg.zetas, cfg.split, &cfg.estimator, cfg.threads)?])),
        CommandKind::Estimate => run_estimate(cfg),
        CommandKind::CheckLinks => Ok(run_check_links()),
    }
}

fn run_estimate(cfg: &RunConfig) -> Result<Outcome> {
    let input = cfg.input.as_ref().ok_or_else(|| usage("estimate needs --input"))?;
    let raw = load_csv(&input.path, &input.columns)?;
    let loaded = feature_expand(&raw, &input.expansion)?;
    let data = &loaded.data;
    eprintln!(
        "loaded {} rows ({} treated, {} controls), {} covariates after expansion",
        data.n(),
        data.n_treated(),
        data.n_control(),
        data.p()
    );
    let ctx = Context::new(data, cfg.estimator);
    let columns = vec!["estimate".to_string(), "std_error".into(), "ci_low".into(), "ci_high".into()];
    let mut rows = Vec::new();
    let mut details = Vec::new();
    let mut failed = false;
    for &m in &cfg.methods {
        let result = match (input.target, m) {
            (Target::Atet, _) => run_method(&ctx, m),
            (t, Method::Db(k)) => estimate_target(data, &cfg.estimator, &SplitScheme::db(k, cfg.estimator.seed)?, t),
            _ => Err(usage("--target atec/ate is available for the db1–db6 methods only")),
        };
        match result {
            Ok(e) => {
                rows.push((m.label(), vec![e.point, e.std_error(), e.ci_low, e.ci_high]));
                details.push(serde_json::to_value(&e)?);
            }
            Err(err) => {
                failed = true;
                eprintln!("{m}: {err}");
                rows.push((m.label(), vec![f64::NAN; 4]));
                details.push(serde_json::json!({ "method": m.label(), "error": err.to_string() }));
            }
        }
    }
    let extra = serde_json::json!({ "covariates": loaded.covariate_names, "estimates": details });
    Ok(Outcome {
        tables: vec![MetricsTable { metric: "estimates".into(), scenarios: columns, rows }],
        cells: Vec::new(),
        extra,
        numeric_failure: failed,
    })
}

/// The links checked by `check-links`.
pub fn standard_links() -> Vec<Link> {
    vec![Link::Logit, Link::Probit, Link::StudentT { nu: 1 }, Link::StudentT { nu: 3 }, Link::StudentT { nu: 5 }]
}

fn run_check_links() -> Outcome {
    let grid = uniform_grid(-10.0, 10.0, 0.01);
    let reports: Vec<(Link, crate::link::LinkReport)> =
        standard_links().into_iter().map(|l| (l, check_link_assumptions(&l, &grid))).collect();
    let columns: Vec<String> = reports[0].1.checks.iter().map(|c| c.name.to_string()).collect();
    let rows = reports
        .iter()
        .map(|(l, r)| (l.to_string(), r.checks.iter().map(|c| if c.pass { 1.0 } else { 0.0 }).collect()))
        .collect();
    let numeric_failure = reports.iter().any(|(_, r)| !r.all_pass());
    let extra = serde_json::json!(reports.iter().map(|(l, r)| serde_json::json!({ "link": l.to_string(), "report": r })).collect::<Vec<_>>());
    Outcome {
        tables: vec![MetricsTable { metric: "link_checks".into(), scenarios: columns, rows }],
        cells: Vec::new(),
        extra,
        numeric_failure,
    }
}

fn print_table(t: &MetricsTable) {
    let width = t.rows.iter().map(|(m, _)| m.len()).max().unwrap_or(6).max(6);
    println!("{}", t.metric);
    print!("{:<width$}", "");
    for s in &t.scenarios {
        print!("  {s:>12}");
    }
    println!();
    for (m, vals) in &t.rows {
        print!("{m:<width$}");
        for v in vals {
            print!("  {:>12}", sig4(*v));
        }
        println!();
    }
}

/// Runs the command described by `args`, printing the headline table and writing
/// reports when `--out` is given. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (kind, flags) = cli.command.parts();
    let result = resolve(kind, flags).and_then(|cfg| {
        let outcome = execute(&cfg)?;
        print_table(&outcome.tables[0]);
        if let Some(dir) = &cfg.out {
            let manifest = Manifest::new(kind.name(), serde_json::to_value(&cfg)?);
            let written = emit_report(dir, cfg.format, &manifest, &outcome.tables, &histograms(&outcome.cells), &outcome.extra)?;
            eprintln!("wrote {} files to {}", written.len(), dir.display());
        }
        Ok(outcome.numeric_failure)
    });
    match result {
        Ok(false) => 0,
        Ok(true) => {
            eprintln!("warning: numeric failures beyond policy (see failures table)");
            3
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// 1 usage, 2 data, 3 numeric.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        Error::InvalidData(_) | Error::Row { .. } | Error::Io(_) | Error::Csv(_) | Error::Json(_) => 2,
        Error::Domain(_) | Error::Infeasible { .. } | Error::Singular(_) | Error::Numeric(_) => 3,
    }
}
