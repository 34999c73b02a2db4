//! The observational sample.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Covariates, treatment indicators and binary outcomes for n units.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    d: Vec<bool>,
    y: Vec<f64>,
}

impl Dataset {
    /// Validates and wraps the three pieces. Outcomes must be exactly 0 or 1.
    pub fn new(x: Array2<f64>, d: Vec<bool>, y: Vec<f64>) -> Result<Dataset> {
        let n = x.nrows();
        if d.len() != n || y.len() != n {
            return Err(Error::InvalidData(format!(
                "length mismatch: X has {n} rows, D has {}, Y has {}",
                d.len(),
                y.len()
            )));
        }
        if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Row { row: i, message: format!("outcome {} is not 0/1", y[i]) });
        }
        if let Some(((i, j), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Row { row: i, message: format!("covariate {j} is not finite") });
        }
        let n_t = d.iter().filter(|&&t| t).count();
        if n_t == 0 {
            return Err(Error::InvalidData("no treated units".into()));
        }
        if n - n_t < 2 {
            return Err(Error::InvalidData(format!("need at least 2 controls, found {}", n - n_t)));
        }
        Ok(Dataset { x, d, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn d(&self) -> &[bool] {
        &self.d
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn n_treated(&self) -> usize {
        self.d.iter().filter(|&&t| t).count()
    }

    pub fn n_control(&self) -> usize {
        self.n() - self.n_treated()
    }

    pub fn treated(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.d[i]).collect()
    }

    pub fn controls(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.d[i]).collect()
    }

    /// Copy of the covariate rows listed in `rows`.
    pub fn rows(&self, rows: &[usize]) -> Array2<f64> {
        self.x.select(Axis(0), rows)
    }

    pub fn outcomes(&self, rows: &[usize]) -> Vec<f64> {
        rows.iter().map(|&i| self.y[i]).collect()
    }

    /// Treatment indicators as 0/1 reals, for fitting propensity models.
    pub fn treatment_as_f64(&self) -> Vec<f64> {
        self.d.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect()
    }

    pub fn mean_outcome(&self, rows: &[usize]) -> f64 {
        rows.iter().map(|&i| self.y[i]).sum::<f64>() / rows.len() as f64
    }

    /// Same units with the treatment labels flipped.
    pub fn with_flipped_treatment(&self) -> Dataset {
        Dataset { x: self.x.clone(), d: self.d.iter().map(|t| !t).collect(), y: self.y.clone() }
    }

    pub fn with_covariates(&self, x: Array2<f64>) -> Result<Dataset> {
        Dataset::new(x, self.d.clone(), self.y.clone())
    }
}
