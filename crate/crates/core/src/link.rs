//! Link functions g: ℝ → (0, 1) for binary-outcome GLMs.
//!
//! All three standard links are symmetric (g(x) + g(−x) = 1), which lets every
//! upper-tail quantity be computed as g(−x) without cancellation.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{normal_cdf, normal_pdf};

/// Anything usable as a link: a CDF-like map with its first two derivatives.
///
/// The standard links implement this through [`Link`]; tests and diagnostics plug
/// in custom (possibly broken) maps.
pub trait LinkFn: Send + Sync {
    fn g(&self, x: f64) -> f64;
    fn g1(&self, x: f64) -> f64;
    fn g2(&self, x: f64) -> f64;

    /// 1 − g(x). Symmetric links override this with g(−x).
    fn complement(&self, x: f64) -> f64 {
        1.0 - self.g(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Logit,
    Probit,
    /// Student-t CDF with `nu` degrees of freedom.
    StudentT { nu: u32 },
}

impl Link {
    pub fn student_t(nu: u32) -> Result<Link> {
        if nu == 0 {
            return Err(Error::Domain("Student-t link needs nu >= 1".into()));
        }
        Ok(Link::StudentT { nu })
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Link::Logit => write!(f, "logit"),
            Link::Probit => write!(f, "probit"),
            Link::StudentT { nu } => write!(f, "t{nu}"),
        }
    }
}

impl FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Link> {
        match s.to_ascii_lowercase().as_str() {
            "logit" | "logistic" => Ok(Link::Logit),
            "probit" => Ok(Link::Probit),
            other => {
                let nu = other
                    .strip_prefix("student-t")
                    .or_else(|| other.strip_prefix('t'))
                    .and_then(|rest| rest.trim_start_matches(['-', ':']).parse::<u32>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown link '{s}'")))?;
                Link::student_t(nu)
            }
        }
    }
}

impl LinkFn for Link {
    fn g(&self, x: f64) -> f64 {
        match *self {
            Link::Logit => logistic(x),
            Link::Probit => normal_cdf(x),
            Link::StudentT { nu } => {
                if x >= 0.0 {
                    1.0 - student_t_upper_tail(x, nu)
                } else {
                    student_t_upper_tail(-x, nu)
                }
            }
        }
    }

    fn g1(&self, x: f64) -> f64 {
        match *self {
            Link::Logit => logistic(x) * logistic(-x),
            Link::Probit => normal_pdf(x),
            Link::StudentT { nu } => {
                let v = nu as f64;
                student_t_norm(nu) * (1.0 + x * x / v).powf(-(v + 1.0) / 2.0)
            }
        }
    }

    fn g2(&self, x: f64) -> f64 {
        match *self {
            Link::Logit => {
                let (p, q) = (logistic(x), logistic(-x));
                p * q * (q - p)
            }
            Link::Probit => -x * normal_pdf(x),
            Link::StudentT { nu } => {
                let v = nu as f64;
                -student_t_norm(nu) * (v + 1.0) / v * x * (1.0 + x * x / v).powf(-(v + 3.0) / 2.0)
            }
        }
    }

    fn complement(&self, x: f64) -> f64 {
        self.g(-x)
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Γ((ν+1)/2) / (√(νπ) Γ(ν/2)).
fn student_t_norm(nu: u32) -> f64 {
    let v = nu as f64;
    (libm::lgamma((v + 1.0) / 2.0) - libm::lgamma(v / 2.0)).exp() / (v * PI).sqrt()
}

/// P(T > t) for t ≥ 0 and integer ν, using the finite trigonometric series for the
/// t distribution (exact up to rounding).
fn student_t_upper_tail(t: f64, nu: u32) -> f64 {
    debug_assert!(t >= 0.0);
    if t == 0.0 {
        return 0.5;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let v = nu as f64;
    // θ = atan(t/√ν); the complementary angle is computed directly for accuracy.
    let theta = (t / v.sqrt()).atan();
    let comp_angle = (v.sqrt() / t).atan();
    let (s, c) = (theta.sin(), theta.cos());
    let c2 = c * c;
    if nu % 2 == 1 {
        // A = (2/π)[θ + s c (1 + (2/3)c² + (2·4)/(3·5)c⁴ + ...)] for ν ≥ 3, A = 2θ/π for ν = 1.
        let mut series = 0.0;
        if nu >= 3 {
            let mut term = 1.0;
            series = 1.0;
            let mut k = 1;
            while 2 * k + 1 < nu {
                term *= (2 * k) as f64 / (2 * k + 1) as f64 * c2;
                series += term;
                k += 1;
            }
        }
        (comp_angle - s * c * series) / PI
    } else {
        // A = s [1 + (1/2)c² + (1·3)/(2·4)c⁴ + ...].
        let mut term = 1.0;
        let mut series = 1.0;
        let mut k = 1;
        while 2 * k < nu {
            term *= (2 * k - 1) as f64 / (2 * k) as f64 * c2;
            series += term;
            k += 1;
        }
        0.5 * (1.0 - s * series)
    }
}

/// Evaluates (g(x), g′(x), g″(x)).
pub fn link_eval(link: &Link, x: f64) -> Result<(f64, f64, f64)> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("link argument must be finite, got {x}")));
    }
    if let Link::StudentT { nu: 0 } = link {
        return Err(Error::Domain("Student-t link needs nu >= 1".into()));
    }
    Ok((link.g(x), link.g1(x), link.g2(x)))
}

/// Outcome of one grid-checked condition.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionCheck {
    pub name: &'static str,
    pub pass: bool,
    /// Worst observed value of the condition's statistic on the grid.
    pub worst: f64,
    pub tolerance: f64,
}

/// Grid verification of the regularity conditions a link must satisfy.
#[derive(Debug, Clone, Serialize)]
pub struct LinkReport {
    pub checks: Vec<ConditionCheck>,
    /// max g′(x) / (1 − g(x)) over the grid.
    pub max_hazard: f64,
    /// max x² g′(x) over the grid.
    pub max_x2_g1: f64,
    /// max |g″(x)| over the grid.
    pub max_abs_g2: f64,
}

impl LinkReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const DERIVATIVE_REL_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-5;
const DERIVATIVE_ABS_FLOOR: f64 = 1e-12;

/// Checks symmetry, range, strict monotonicity, concavity on ℝ₊, analytic-vs-numeric
/// derivatives and the boundedness quantities on `grid`.
///
/// Comparisons on the upper half of the real line use [`LinkFn::complement`] so that a
/// link whose values round to 1.0 in double precision is still judged on its tail.
pub fn check_link_assumptions(link: &dyn LinkFn, grid: &[f64]) -> LinkReport {
    let mut sorted: Vec<f64> = grid.iter().copied().filter(|x| x.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();

    let mut sym_dev = 0.0f64;
    let mut range_ok = true;
    let mut range_worst = 0.0f64;
    let mut mono_ok = true;
    let mut mono_worst = f64::INFINITY;
    let mut concave_worst = 0.0f64;
    let mut d1_worst = 0.0f64;
    let mut d2_worst = 0.0f64;
    let mut max_hazard = 0.0f64;
    let mut max_x2_g1 = 0.0f64;
    let mut max_abs_g2 = 0.0f64;
    let mut finite = true;

    // g below zero, 1 − g above: the side that never rounds to 1.0.
    let lower = |x: f64| if x <= 0.0 { link.g(x) } else { link.complement(x) };

    for (k, &x) in sorted.iter().enumerate() {
        let g = link.g(x);
        let g1 = link.g1(x);
        let g2 = link.g2(x);
        let tail = link.complement(x);
        finite &= g.is_finite() && g1.is_finite() && g2.is_finite();

        sym_dev = sym_dev.max((link.g(x) + link.g(-x) - 1.0).abs());

        let inside = if x <= 0.0 { g > 0.0 && g < 1.0 } else { tail > 0.0 && tail < 1.0 };
        if !inside {
            range_ok = false;
            range_worst = range_worst.max(if x <= 0.0 { g } else { 1.0 - tail });
        }

        if k > 0 {
            let prev = sorted[k - 1];
            let gap = if prev > 0.0 {
                lower(prev) - lower(x)
            } else if x <= 0.0 {
                lower(x) - lower(prev)
            } else {
                link.g(x) - link.g(prev)
            };
            if gap.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
                mono_ok = false;
            }
            mono_worst = mono_worst.min(gap);
        }

        if x > 0.0 {
            concave_worst = concave_worst.max(g2);
        }

        // Central differences, taken on the complement for x > 0.
        let h = FD_STEP;
        let fd1 = if x <= 0.0 {
            (link.g(x + h) - link.g(x - h)) / (2.0 * h)
        } else {
            (link.complement(x - h) - link.complement(x + h)) / (2.0 * h)
        };
        let fd2 = (link.g1(x + h) - link.g1(x - h)) / (2.0 * h);
        d1_worst = d1_worst.max(rel_err(fd1, g1));
        d2_worst = d2_worst.max(rel_err(fd2, g2));

        if tail > 0.0 {
            max_hazard = max_hazard.max(g1 / tail);
        } else {
            max_hazard = f64::INFINITY;
        }
        max_x2_g1 = max_x2_g1.max(x * x * g1);
        max_abs_g2 = max_abs_g2.max(g2.abs());
    }

    let checks = vec![
        ConditionCheck {
            name: "symmetry",
            pass: sym_dev <= SYMMETRY_TOL,
            worst: sym_dev,
            tolerance: SYMMETRY_TOL,
        },
        ConditionCheck { name: "range", pass: range_ok && finite, worst: range_worst, tolerance: 0.0 },
        ConditionCheck {
            name: "monotone",
            pass: mono_ok,
            worst: if mono_worst.is_finite() { mono_worst } else { 0.0 },
            tolerance: 0.0,
        },
        ConditionCheck {
            name: "concave_positive_half",
            pass: concave_worst <= 0.0,
            worst: concave_worst,
            tolerance: 0.0,
        },
        ConditionCheck {
            name: "derivative_g1",
            pass: d1_worst <= DERIVATIVE_REL_TOL,
            worst: d1_worst,
            tolerance: DERIVATIVE_REL_TOL,
        },
        ConditionCheck {
            name: "derivative_g2",
            pass: d2_worst <= DERIVATIVE_REL_TOL,
            worst: d2_worst,
            tolerance: DERIVATIVE_REL_TOL,
        },
        ConditionCheck {
            name: "bounded_hazard_and_x2g1",
            pass: max_hazard.is_finite() && max_x2_g1.is_finite(),
            worst: max_hazard.max(max_x2_g1),
            tolerance: f64::INFINITY,
        },
        ConditionCheck {
            name: "bounded_g2",
            pass: max_abs_g2.is_finite(),
            worst: max_abs_g2,
            tolerance: f64::INFINITY,
        },
    ];
    LinkReport { checks, max_hazard, max_x2_g1, max_abs_g2 }
}

/// Relative error with an absolute floor of `DERIVATIVE_ABS_FLOOR` where the exact value
/// is near zero.
fn rel_err(approx: f64, exact: f64) -> f64 {
    (approx - exact).abs() / exact.abs().max(DERIVATIVE_ABS_FLOOR / DERIVATIVE_REL_TOL)
}

/// Evenly spaced grid from `lo` to `hi` inclusive with the given step.
pub fn uniform_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}
