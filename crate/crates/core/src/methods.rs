//! Method names and dispatch.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::baselines;
use crate::error::{Error, Result};
use crate::estimators::{estimate_atet, Context, Estimate, SplitScheme};

/// Residual-balancing penalty used for the linear-model baseline.
pub const ARB_ZETA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Naive,
    Regression,
    Ipw,
    /// Single split: nuisances on one half, score on the other.
    Dml1,
    /// Cross-fitting over k folds, k in 2..=5.
    Dml(usize),
    Aml,
    Arb,
    /// Proposed estimator; 1 = sample split, 2..=5 = cross-fit folds, 6 = no split.
    Db(usize),
}

impl Method {
    /// Every method, in reporting order.
    pub fn all() -> Vec<Method> {
        let mut v = vec![Method::Naive, Method::Regression, Method::Ipw, Method::Dml1];
        v.extend((2..=5).map(Method::Dml));
        v.extend([Method::Aml, Method::Arb]);
        v.extend((1..=6).map(Method::Db));
        v
    }

    pub fn label(&self) -> String {
        match self {
            Method::Naive => "Naive".into(),
            Method::Regression => "Regression".into(),
            Method::Ipw => "IPW".into(),
            Method::Dml1 => "DML1".into(),
            Method::Dml(k) => format!("DML{k}"),
            Method::Aml => "AML".into(),
            Method::Arb => "ARB".into(),
            Method::Db(k) => format!("DB{k}"),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        let lower = s.trim().to_ascii_lowercase();
        let numbered = |prefix: &str, range: std::ops::RangeInclusive<usize>| -> Option<usize> {
            lower.strip_prefix(prefix)?.parse::<usize>().ok().filter(|k| range.contains(k))
        };
        match lower.as_str() {
            "naive" => return Ok(Method::Naive),
            "regression" | "reg" => return Ok(Method::Regression),
            "ipw" => return Ok(Method::Ipw),
            "dml1" => return Ok(Method::Dml1),
            "aml" => return Ok(Method::Aml),
            "arb" => return Ok(Method::Arb),
            _ => {}
        }
        if let Some(k) = numbered("dml", 2..=5) {
            return Ok(Method::Dml(k));
        }
        if let Some(k) = numbered("db", 1..=6) {
            return Ok(Method::Db(k));
        }
        Err(Error::Config(format!("unknown method '{s}'")))
    }
}

/// Runs `method` on the context's dataset.
pub fn run_method(ctx: &Context<'_>, method: Method) -> Result<Estimate> {
    let level = ctx.config.level;
    match method {
        Method::Naive => baselines::naive(ctx.data, level),
        Method::Regression => baselines::regression_impute(ctx),
        Method::Ipw => baselines::ipw(ctx.data, &baselines::fit_propensity(ctx, None)?, level),
        Method::Dml1 => baselines::dml(ctx, 2, false),
        Method::Dml(k) => baselines::dml(ctx, k, true),
        Method::Aml => baselines::aml(ctx, 2),
        Method::Arb => baselines::arb(ctx, ARB_ZETA),
        Method::Db(k) => estimate_atet(ctx, &SplitScheme::db(k, ctx.config.seed)?),
    }
}
