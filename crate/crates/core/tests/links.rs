use std::f64::consts::PI;

use glm_balance::link::{check_link_assumptions, link_eval, uniform_grid, Link, LinkFn};
use proptest::prelude::*;

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn logit_closed_form() {
    for x in [-30.0, -2.0, 0.0, 0.7, 12.0] {
        let p = 1.0 / (1.0 + (-x as f64).exp());
        let (g, g1, g2) = link_eval(&Link::Logit, x).unwrap();
        assert!((g - p).abs() < 1e-15);
        assert!((g1 - p * (1.0 - p)).abs() < 1e-15);
        assert!((g2 - p * (1.0 - p) * (1.0 - 2.0 * p)).abs() < 1e-15);
    }
}

#[test]
fn probit_matches_quadrature() {
    let pdf = |t: f64| (-t * t / 2.0).exp() / (2.0 * PI).sqrt();
    for x in [-3.0, -1.0, 0.0, 0.5, 2.5] {
        let oracle = 0.5 + simpson(pdf, 0.0, x, 2000);
        assert!((Link::Probit.g(x) - oracle).abs() < 1e-12, "x={x}");
    }
    assert!((Link::Probit.g1(0.0) - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
}

#[test]
fn student_t_closed_forms() {
    let t1 = Link::StudentT { nu: 1 };
    let t3 = Link::StudentT { nu: 3 };
    for x in [-8.0, -1.0, 0.0, 0.3, 4.0] {
        assert!((t1.g(x) - (0.5 + (x as f64).atan() / PI)).abs() < 1e-14);
        let u = x / 3f64.sqrt();
        let c3 = 0.5 + (u.atan() + u / (1.0 + u * u)) / PI;
        assert!((t3.g(x) - c3).abs() < 1e-14);
    }
    assert!((t1.g1(0.0) - 1.0 / PI).abs() < 1e-15);
    let t4 = Link::StudentT { nu: 4 };
    let oracle = 0.5 + simpson(|t| t4.g1(t), 0.0, 1.5, 2000);
    assert!((t4.g(1.5) - oracle).abs() < 1e-12);
}

#[test]
fn parse_and_display() {
    for (s, l) in [("logit", Link::Logit), ("probit", Link::Probit), ("t3", Link::StudentT { nu: 3 })] {
        assert_eq!(s.parse::<Link>().unwrap(), l);
        assert_eq!(l.to_string(), s);
    }
    assert!("t0".parse::<Link>().is_err());
    assert!("cloglog".parse::<Link>().is_err());
    assert!(link_eval(&Link::Logit, f64::NAN).is_err());
}

#[test]
fn standard_links_pass_every_check() {
    let grid = uniform_grid(-10.0, 10.0, 0.01);
    for link in [Link::Logit, Link::Probit, Link::StudentT { nu: 1 }, Link::StudentT { nu: 3 }, Link::StudentT { nu: 5 }] {
        let r = check_link_assumptions(&link, &grid);
        assert!(r.all_pass(), "{link}: {:?}", r.checks.iter().filter(|c| !c.pass).collect::<Vec<_>>());
    }
}

struct Shifted;

impl LinkFn for Shifted {
    fn g(&self, x: f64) -> f64 {
        Link::Logit.g(x - 0.3)
    }
    fn g1(&self, x: f64) -> f64 {
        Link::Logit.g1(x - 0.3)
    }
    fn g2(&self, x: f64) -> f64 {
        Link::Logit.g2(x - 0.3)
    }
}

struct WrongDerivative;

impl LinkFn for WrongDerivative {
    fn g(&self, x: f64) -> f64 {
        Link::Logit.g(x)
    }
    fn g1(&self, x: f64) -> f64 {
        1.01 * Link::Logit.g1(x)
    }
    fn g2(&self, x: f64) -> f64 {
        Link::Logit.g2(x)
    }
}

#[test]
fn broken_links_are_flagged() {
    let grid = uniform_grid(-5.0, 5.0, 0.05);
    let r = check_link_assumptions(&Shifted, &grid);
    assert!(!r.check("symmetry").unwrap().pass);
    assert!(!r.check("concave_positive_half").unwrap().pass);
    let r = check_link_assumptions(&WrongDerivative, &grid);
    assert!(!r.check("derivative_g1").unwrap().pass);
    assert!(r.check("symmetry").unwrap().pass);
}

proptest! {
    #[test]
    fn symmetric_and_increasing(x in -20.0f64..20.0, dx in 1e-3f64..1.0, nu in 1u32..8) {
        for link in [Link::Logit, Link::Probit, Link::StudentT { nu }] {
            prop_assert!((link.g(x) + link.g(-x) - 1.0).abs() < 1e-12);
            prop_assert!(link.g1(x) > 0.0);
            if x.abs() < 6.0 {
                prop_assert!(link.g(x + dx) > link.g(x));
            }
            prop_assert!(x <= 0.0 || link.g2(x) <= 0.0);
        }
    }

    #[test]
    fn derivatives_match_differences(x in -6.0f64..6.0, nu in 1u32..8) {
        let h = 1e-5;
        for link in [Link::Logit, Link::Probit, Link::StudentT { nu }] {
            let fd1 = (link.g(x + h) - link.g(x - h)) / (2.0 * h);
            let fd2 = (link.g1(x + h) - link.g1(x - h)) / (2.0 * h);
            prop_assert!((fd1 - link.g1(x)).abs() < 1e-8);
            prop_assert!((fd2 - link.g2(x)).abs() < 1e-8);
        }
    }
}
