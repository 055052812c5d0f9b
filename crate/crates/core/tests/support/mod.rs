//! Oracles and property checks shared by the integration test targets.

#![allow(dead_code)]

use hfc_core::lti::TransferFunction;
use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

/// Ascending polynomial with the given real roots and leading coefficient.
pub fn from_roots(roots: &[f64], lead: f64) -> Vec<f64> {
    let mut p = vec![lead];
    for &r in roots {
        let mut next = vec![0.0; p.len() + 1];
        for (i, &c) in p.iter().enumerate() {
            next[i] += -r * c;
            next[i + 1] += c;
        }
        p = next;
    }
    p
}

/// Horner evaluation, independent of the library's polynomial module.
pub fn horner(p: &[f64], s: Complex64) -> Complex64 {
    p.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

pub fn eval(num: &[f64], den: &[f64], w: f64) -> Complex64 {
    let s = Complex64::new(0.0, w);
    horner(num, s) / horner(den, s)
}

/// A strictly proper or biproper stable system with distinct real poles,
/// kept as its raw coefficients so oracles can work on them.
#[derive(Debug, Clone)]
pub struct RealPoleSystem {
    pub poles: Vec<f64>,
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

impl RealPoleSystem {
    pub fn tf(&self) -> TransferFunction {
        TransferFunction::new(self.num.clone(), self.den.clone()).unwrap()
    }

    /// Continuous step response from the partial-fraction expansion of
    /// `G(s)/s`: `y(t) = G(0) + Σ Res_i e^{p_i t}`.
    pub fn step_response(&self, t: f64) -> f64 {
        let lead = *self.den.last().unwrap();
        let g0 = self.num[0] / self.den[0];
        let mut y = g0;
        for (i, &p) in self.poles.iter().enumerate() {
            let mut d = lead * p;
            for (j, &q) in self.poles.iter().enumerate() {
                if i != j {
                    d *= p - q;
                }
            }
            let n = horner(&self.num, Complex64::new(p, 0.0)).re;
            y += n / d * (p * t).exp();
        }
        y
    }
}

/// Poles spread in [-20, -0.5] with a minimum gap, numerator degree at most
/// the number of poles.
pub fn real_pole_system() -> impl Strategy<Value = RealPoleSystem> {
    (1usize..=4)
        .prop_flat_map(|n| {
            (
                proptest::collection::vec(0.5f64..20.0, n),
                proptest::collection::vec(-2.0f64..2.0, 1..=n + 1),
                0.2f64..5.0,
            )
        })
        .prop_filter_map("poles too close or zero DC gain", |(mags, num, lead)| {
            let mut poles: Vec<f64> = mags.iter().map(|m| -m).collect();
            poles.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if poles.windows(2).any(|w| (w[1] - w[0]).abs() < 0.3) || num[0].abs() < 0.05 {
                return None;
            }
            let den = from_roots(&poles, lead);
            Some(RealPoleSystem { poles, num, den })
        })
}

/// Any proper rational function with moderate coefficients.
pub fn any_tf() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..=4).prop_flat_map(|n| {
        (
            proptest::collection::vec(-3.0f64..3.0, 1..=n + 1),
            proptest::collection::vec(0.1f64..3.0, n + 1),
        )
    })
}

fn close(a: Complex64, b: Complex64, rel: f64) -> bool {
    (a - b).norm() <= rel * (1.0 + a.norm().max(b.norm()))
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if ok {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

/// Series and parallel connections evaluate to the product and the sum.
pub fn composition_commutes_with_evaluation(
    a: &(Vec<f64>, Vec<f64>),
    b: &(Vec<f64>, Vec<f64>),
    w: f64,
) -> Result<(), TestCaseError> {
    let ga = TransferFunction::new(a.0.clone(), a.1.clone()).unwrap();
    let gb = TransferFunction::new(b.0.clone(), b.1.clone()).unwrap();
    let (va, vb) = (eval(&a.0, &a.1, w), eval(&b.0, &b.1, w));
    let ser = ga.series(&gb).eval(w).unwrap().value;
    check(close(ser, va * vb, 1e-9), || format!("series {ser} vs {}", va * vb))?;
    let par = ga.parallel(&gb).eval(w).unwrap().value;
    check(close(par, va + vb, 1e-9), || format!("parallel {par} vs {}", va + vb))?;
    let conj = ga.eval(-w).unwrap().value;
    check(close(conj, va.conj(), 1e-12), || format!("conjugate symmetry {conj} vs {}", va.conj()))
}

/// `feedback(G, 1)` evaluates to `G / (1 + G)`.
pub fn feedback_identity(a: &(Vec<f64>, Vec<f64>), w: f64) -> Result<(), TestCaseError> {
    let g = TransferFunction::new(a.0.clone(), a.1.clone()).unwrap();
    let v = eval(&a.0, &a.1, w);
    if (1.0 + v).norm() < 1e-6 {
        return Ok(());
    }
    let t = g.feedback(&TransferFunction::one()).unwrap().eval(w).unwrap().value;
    let want = v / (1.0 + v);
    check(close(t, want, 1e-9), || format!("feedback {t} vs {want}"))
}

/// Tustin step response within 1 % of the peak against the analytic one.
/// The step is sampled at its midpoint value at t = 0.
pub fn discretization_matches_step_oracle(sys: &RealPoleSystem) -> Result<(), TestCaseError> {
    let dt = 1e-3;
    let mut f = sys.tf().discretize(dt).unwrap();
    let slowest = sys.poles.iter().fold(f64::INFINITY, |m, p| m.min(p.abs()));
    let steps = ((5.0 / slowest).min(10.0) / dt) as usize;
    let mut peak = 0.0_f64;
    let mut worst = 0.0_f64;
    f.step(0.5).unwrap();
    // The jump sample itself carries Tustin's half-step feedthrough and is
    // not compared; every later sample is.
    for k in 1..=steps {
        let y = f.step(1.0).unwrap();
        let want = sys.step_response(k as f64 * dt);
        peak = peak.max(want.abs());
        worst = worst.max((y - want).abs());
    }
    check(worst <= 0.01 * peak.max(1e-9), || format!("max deviation {worst} vs peak {peak}"))?;
    let g0 = sys.num[0] / sys.den[0];
    let dc = f.dc_gain().unwrap();
    // Σa of a high-order filter at 1 ms is a small difference of O(1)
    // coefficients, so the DC gain read back is judged against the response
    // scale rather than against g0 itself.
    check((dc - g0).abs() <= 1e-4 * peak, || format!("DC gain {dc} vs {g0} (peak {peak})"))
}

/// Two filters built from the same system give bitwise-identical output.
pub fn discretization_is_deterministic(sys: &RealPoleSystem, input: &[f64]) -> Result<(), TestCaseError> {
    let mut a = sys.tf().discretize(1e-3).unwrap();
    let mut b = sys.tf().discretize(1e-3).unwrap();
    for &u in input {
        let (ya, yb) = (a.step(u).unwrap(), b.step(u).unwrap());
        check(ya.to_bits() == yb.to_bits(), || format!("{ya} != {yb}"))?;
    }
    Ok(())
}

/// Run the whole suite for `cases` randomized cases each. Returns the
/// first failure.
pub fn run_lti_suite(cases: u32) -> Result<(), String> {
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    let w = 0.01f64..100.0;
    runner
        .run(&(any_tf(), any_tf(), w.clone()), |(a, b, w)| composition_commutes_with_evaluation(&a, &b, w))
        .map_err(|e| format!("composition: {e}"))?;
    runner.run(&(any_tf(), w), |(a, w)| feedback_identity(&a, w)).map_err(|e| format!("feedback: {e}"))?;
    runner
        .run(&real_pole_system(), |s| discretization_matches_step_oracle(&s))
        .map_err(|e| format!("discretization: {e}"))?;
    runner
        .run(&(real_pole_system(), proptest::collection::vec(-1.0f64..1.0, 1..200)), |(s, u)| {
            discretization_is_deterministic(&s, &u)
        })
        .map_err(|e| format!("determinism: {e}"))?;
    Ok(())
}
