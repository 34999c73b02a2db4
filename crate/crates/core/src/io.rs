//! CSV ingestion, covariate expansion and report files.

use std::collections::HashSet;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::sim::{CellResult, MethodSummary};

/// Which CSV columns hold the outcome, the treatment and the covariates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub outcome: String,
    pub treatment: String,
    /// Covariate columns in order; `None` takes every other column.
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
}

/// A dataset with its covariate names.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub data: Dataset,
    pub covariate_names: Vec<String>,
}

fn parse_binary(raw: &str, row: usize, column: &str) -> Result<bool> {
    match raw.trim() {
        "0" | "0.0" => Ok(false),
        "1" | "1.0" => Ok(true),
        "" => Err(Error::Row { row, message: format!("missing value in '{column}'") }),
        other => Err(Error::Row { row, message: format!("'{column}' must be 0 or 1, found '{other}'") }),
    }
}

/// Reads a headed CSV file. Row numbers in errors count data rows from 1.
pub fn load_csv(path: &Path, columns: &ColumnSpec) -> Result<LoadedData> {
    let file = fs::File::open(path).map_err(|e| Error::InvalidData(format!("cannot open {}: {e}", path.display())))?;
    load_csv_from(file, columns)
}

pub fn load_csv_from<R: Read>(reader: R, columns: &ColumnSpec) -> Result<LoadedData> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut seen = HashSet::new();
    if let Some(dup) = header.iter().find(|h| !seen.insert(h.as_str())) {
        return Err(Error::InvalidData(format!("duplicate column '{dup}'")));
    }
    let find = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::InvalidData(format!("missing column '{name}'")))
    };
    let yi = find(&columns.outcome)?;
    let di = find(&columns.treatment)?;
    if yi == di {
        return Err(Error::Config("outcome and treatment must be different columns".into()));
    }
    let cov_idx: Vec<usize> = match &columns.covariates {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..header.len()).filter(|&j| j != yi && j != di).collect(),
    };
    if cov_idx.is_empty() {
        return Err(Error::InvalidData("no covariate columns".into()));
    }
    let mut values = Vec::new();
    let (mut d, mut y) = (Vec::new(), Vec::new());
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec?;
        y.push(if parse_binary(&rec[yi], row, &columns.outcome)? { 1.0 } else { 0.0 });
        d.push(parse_binary(&rec[di], row, &columns.treatment)?);
        for &j in &cov_idx {
            let raw = &rec[j];
            if raw.is_empty() {
                return Err(Error::Row { row, message: format!("missing value in '{}'", header[j]) });
            }
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::Row { row, message: format!("column '{}' is not numeric: '{raw}'", header[j]) })?;
            if !v.is_finite() {
                return Err(Error::Row { row, message: format!("column '{}' is not finite", header[j]) });
            }
            values.push(v);
        }
    }
    if d.is_empty() {
        return Err(Error::InvalidData("no data rows".into()));
    }
    let x = Array2::from_shape_vec((d.len(), cov_idx.len()), values).map_err(|e| Error::InvalidData(e.to_string()))?;
    Ok(LoadedData { data: Dataset::new(x, d, y)?, covariate_names: cov_idx.iter().map(|&j| header[j].clone()).collect() })
}

/// Writes a dataset in the layout [`load_csv`] reads: outcome, treatment, covariates.
pub fn write_csv(path: &Path, loaded: &LoadedData, outcome: &str, treatment: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![outcome.to_string(), treatment.to_string()];
    header.extend(loaded.covariate_names.iter().cloned());
    w.write_record(&header)?;
    let data = &loaded.data;
    for (i, row) in data.x().rows().into_iter().enumerate() {
        let mut rec = vec![format!("{}", data.y()[i]), if data.d()[i] { "1".into() } else { "0".into() }];
        rec.extend(row.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interactions {
    #[default]
    None,
    /// Every pair of original covariates.
    AllPairs,
    /// Listed pairs; names may refer to original columns or to power columns such as `age^2`.
    Pairs(Vec<(String, String)>),
}

/// Polynomial and interaction terms appended to the covariates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpansionSpec {
    /// Highest power of each non-binary column; 1 adds none.
    pub degree: u32,
    pub interactions: Interactions,
}

impl Default for ExpansionSpec {
    fn default() -> Self {
        ExpansionSpec { degree: 1, interactions: Interactions::None }
    }
}

fn is_binary(col: ndarray::ArrayView1<'_, f64>) -> bool {
    col.iter().all(|&v| v == 0.0 || v == 1.0)
}

/// Appends powers 2..=degree of every non-binary column (ordered by column, then
/// degree), then the requested products (ordered by column position of the pair).
pub fn feature_expand(loaded: &LoadedData, spec: &ExpansionSpec) -> Result<LoadedData> {
    if spec.degree < 1 {
        return Err(Error::Config("expansion degree must be at least 1".into()));
    }
    let x = loaded.data.x();
    let mut names = loaded.covariate_names.clone();
    let mut cols: Vec<Vec<f64>> = (0..x.ncols()).map(|j| x.column(j).to_vec()).collect();
    for j in 0..x.ncols() {
        if is_binary(x.column(j)) {
            continue;
        }
        for k in 2..=spec.degree {
            names.push(format!("{}^{k}", loaded.covariate_names[j]));
            cols.push(x.column(j).iter().map(|v| v.powi(k as i32)).collect());
        }
    }
    let position = |name: &str| {
        names.iter().position(|n| n == name).ok_or_else(|| Error::Config(format!("interaction refers to unknown column '{name}'")))
    };
    let mut pairs: Vec<(usize, usize)> = match &spec.interactions {
        Interactions::None => Vec::new(),
        Interactions::AllPairs => {
            let p = x.ncols();
            (0..p).flat_map(|a| (a + 1..p).map(move |b| (a, b))).collect()
        }
        Interactions::Pairs(list) => list
            .iter()
            .map(|(a, b)| {
                let (i, j) = (position(a)?, position(b)?);
                if i == j {
                    return Err(Error::Config(format!("interaction of '{a}' with itself")));
                }
                Ok((i.min(j), i.max(j)))
            })
            .collect::<Result<_>>()?,
    };
    pairs.sort_unstable();
    pairs.dedup();
    let base = names.len();
    for &(a, b) in &pairs {
        names.push(format!("{}:{}", names[a], names[b]));
        cols.push(cols[a].iter().zip(&cols[b]).map(|(u, v)| u * v).collect());
    }
    debug_assert_eq!(names.len(), base + pairs.len());
    let n = x.nrows();
    let mut out = Array2::zeros((n, cols.len()));
    for (j, c) in cols.iter().enumerate() {
        out.column_mut(j).assign(&ndarray::ArrayView1::from(c.as_slice()));
    }
    Ok(LoadedData { data: loaded.data.with_covariates(out)?, covariate_names: names })
}

/// `v` rounded to four significant digits, without exponent notation.
pub fn sig4(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "NA".into() } else { format!("{v}") };
    }
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (3 - mag).max(0) as usize;
    let scale = 10f64.powi(3 - mag);
    let rounded = (v * scale).round() / scale;
    format!("{rounded:.decimals$}")
}

/// Rows = methods, columns = scenarios.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsTable {
    pub metric: String,
    pub scenarios: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    RelativeMse,
    MedianSe,
    Coverage,
    MeanCiLength,
    Failures,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::RelativeMse => "relative_mse",
            Metric::MedianSe => "median_se",
            Metric::Coverage => "coverage",
            Metric::MeanCiLength => "ci_length",
            Metric::Failures => "failures",
        }
    }

    fn value(&self, s: &MethodSummary) -> f64 {
        match self {
            Metric::RelativeMse => s.relative_mse,
            Metric::MedianSe => s.median_se,
            Metric::Coverage => s.coverage,
            Metric::MeanCiLength => s.mean_ci_length,
            Metric::Failures => s.failures as f64,
        }
    }
}

/// One metric across cells; methods in first-cell order, missing entries NaN.
pub fn metrics_table(cells: &[CellResult], metric: Metric) -> MetricsTable {
    let scenarios = cells.iter().map(|c| c.config.design.label()).collect();
    let methods: Vec<String> = cells.first().map(|c| c.summaries.iter().map(|s| s.method.clone()).collect()).unwrap_or_default();
    let rows = methods
        .into_iter()
        .map(|m| {
            let vals = cells.iter().map(|c| c.summary(&m).map_or(f64::NAN, |s| metric.value(s))).collect();
            (m, vals)
        })
        .collect();
    MetricsTable { metric: metric.name().into(), scenarios, rows }
}

/// Per-replication estimates for one method in one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub method: String,
    pub scenario: String,
    pub estimates: Vec<f64>,
    pub tau_true: Vec<f64>,
}

pub fn histograms(cells: &[CellResult]) -> Vec<Histogram> {
    let mut out = Vec::new();
    for cell in cells {
        for s in &cell.summaries {
            let (estimates, tau_true) = cell
                .reps
                .iter()
                .filter_map(|r| r.runs.iter().find(|m| m.method == s.method && m.ok()).map(|m| (m.point, r.tau_true)))
                .unzip();
            out.push(Histogram { method: s.method.clone(), scenario: cell.config.design.label(), estimates, tau_true });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value) -> Manifest {
        Manifest { tool: env!("CARGO_PKG_NAME").into(), version: env!("CARGO_PKG_VERSION").into(), command: command.into(), config }
    }
}

fn file_stem(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

fn table_csv(table: &MetricsTable) -> String {
    let mut s = String::from("method");
    for sc in &table.scenarios {
        s.push(',');
        s.push_str(sc);
    }
    s.push('\n');
    for (m, vals) in &table.rows {
        s.push_str(m);
        for v in vals {
            s.push(',');
            s.push_str(&sig4(*v));
        }
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct JsonReport<'a> {
    tables: &'a [MetricsTable],
    histograms: &'a [Histogram],
    extra: &'a serde_json::Value,
}

/// Writes tables, histogram data and `manifest.json` into `dir` (created if needed).
/// CSV tables carry four significant digits; histogram files and JSON keep full
/// precision. Returns the paths written.
pub fn emit_report(
    dir: &Path,
    format: Format,
    manifest: &Manifest,
    tables: &[MetricsTable],
    hists: &[Histogram],
    extra: &serde_json::Value,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    match format {
        Format::Csv => {
            for t in tables {
                put(format!("{}.csv", t.metric), table_csv(t))?;
            }
            let scenarios: HashSet<&str> = hists.iter().map(|h| h.scenario.as_str()).collect();
            for h in hists {
                let name = if scenarios.len() > 1 {
                    format!("estimates_{}_{}.csv", file_stem(&h.method), file_stem(&h.scenario))
                } else {
                    format!("estimates_{}.csv", file_stem(&h.method))
                };
                let mut body = String::from("estimate,tau_true\n");
                for (e, t) in h.estimates.iter().zip(&h.tau_true) {
                    body.push_str(&format!("{e:?},{t:?}\n"));
                }
                put(name, body)?;
            }
            if !extra.is_null() {
                put("details.json".into(), serde_json::to_string_pretty(extra)? + "\n")?;
            }
        }
        Format::Json => {
            let report = JsonReport { tables, histograms: hists, extra };
            put("results.json".into(), serde_json::to_string_pretty(&report)? + "\n")?;
        }
    }
    put("manifest.json".into(), serde_json::to_string_pretty(manifest)? + "\n")?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ColumnSpec {
        ColumnSpec { outcome: "y".into(), treatment: "d".into(), covariates: None }
    }

    #[test]
    fn toy_file() {
        let loaded = load_csv_from("y,d,x\n1,1,0.5\n0,1,1.5\n0,0,2\n1,0,3\n".as_bytes(), &spec()).unwrap();
        assert_eq!(loaded.data.n(), 4);
        assert_eq!(loaded.data.n_treated(), 2);
        assert_eq!(loaded.covariate_names, vec!["x"]);
    }

    #[test]
    fn bad_treatment_names_row() {
        let err = load_csv_from("y,d,x\n1,1,0.5\n0,2,1.5\n".as_bytes(), &spec()).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
        let err = load_csv_from("y,d,x\n".as_bytes(), &spec()).unwrap_err();
        assert!(err.to_string().contains("no data rows"));
        let err = load_csv_from("y,x\n1,2\n".as_bytes(), &spec()).unwrap_err();
        assert!(err.to_string().contains("'d'"));
        let err = load_csv_from("y,d,x\n1,1,\n0,0,1\n0,0,1\n".as_bytes(), &spec()).unwrap_err();
        assert!(err.to_string().contains("missing"));
        let err = load_csv_from("y,d,x\n1,1,abc\n0,0,1\n0,0,1\n".as_bytes(), &spec()).unwrap_err();
        assert!(err.to_string().contains("row 1") && err.to_string().contains("'x'"));
    }

    #[test]
    fn sig4_examples() {
        assert_eq!(sig4(0.0671234), "0.06712");
        assert_eq!(sig4(1.17649), "1.176");
        assert_eq!(sig4(12.3456), "12.35");
        assert_eq!(sig4(123456.0), "123500");
        assert_eq!(sig4(0.0), "0");
        assert_eq!(sig4(f64::NAN), "NA");
    }

    #[test]
    fn expansion_counts() {
        let loaded =
            load_csv_from("y,d,a,b\n1,1,0.5,2\n0,1,1.5,3\n0,0,2,1\n1,0,3,5\n".as_bytes(), &spec()).unwrap();
        let e = feature_expand(&loaded, &ExpansionSpec { degree: 2, interactions: Interactions::AllPairs }).unwrap();
        assert_eq!(e.covariate_names, vec!["a", "b", "a^2", "b^2", "a:b"]);
        assert_eq!(e.data.x()[[3, 4]], 15.0);
        let same = feature_expand(&loaded, &ExpansionSpec::default()).unwrap();
        assert_eq!(same, loaded);
        let bad = ExpansionSpec { degree: 1, interactions: Interactions::Pairs(vec![("a".into(), "zz".into())]) };
        assert!(feature_expand(&loaded, &bad).is_err());
    }

    #[test]
    fn binary_columns_are_not_powered() {
        let loaded = load_csv_from("y,d,a,b\n1,1,0,2\n0,1,1,3\n0,0,1,1\n1,0,0,5\n".as_bytes(), &spec()).unwrap();
        let e = feature_expand(&loaded, &ExpansionSpec { degree: 3, interactions: Interactions::None }).unwrap();
        assert_eq!(e.covariate_names, vec!["a", "b", "b^2", "b^3"]);
    }
}
