//! Rational transfer functions in the Laplace variable, their frequency
//! response, and Tustin realizations for fixed-step simulation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly;

/// Denominator magnitude below which `jω` is treated as a pole.
pub const POLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LtiError {
    #[error("denominator is identically zero")]
    ZeroDenominator,
    #[error("pole on the evaluation grid at omega = {omega} rad/s")]
    PoleOnGrid { omega: f64 },
    #[error("system is improper (numerator degree {num} > denominator degree {den})")]
    ImproperSystem { num: usize, den: usize },
    #[error("pole at s = 2/dt = {at} makes the bilinear map singular")]
    TustinSingularity { at: f64 },
    #[error("step size must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("non-finite input sample {0}")]
    NonFiniteInput(f64),
    #[error("filter has a pole at z = 1; steady state is undefined")]
    NoSteadyState,
}

/// Block interconnection used by [`tf_connect`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connection {
    Series,
    Parallel,
    /// Negative unity feedback of `a` around `b`: `a / (1 + a b)`.
    Feedback,
}

/// `num(s) / den(s)` with ascending coefficients and no trailing zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTf", into = "RawTf")]
pub struct TransferFunction {
    num: Vec<f64>,
    den: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawTf {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl TryFrom<RawTf> for TransferFunction {
    type Error = LtiError;
    fn try_from(r: RawTf) -> Result<Self, LtiError> {
        TransferFunction::new(r.num, r.den)
    }
}

impl From<TransferFunction> for RawTf {
    fn from(t: TransferFunction) -> Self {
        RawTf { num: t.num, den: t.den }
    }
}

/// One sample of a frequency response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexResponse {
    pub omega: f64,
    pub value: Complex64,
}

impl ComplexResponse {
    pub fn magnitude(&self) -> f64 {
        self.value.norm()
    }

    pub fn phase(&self) -> f64 {
        self.value.arg()
    }
}

impl TransferFunction {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self, LtiError> {
        let num = poly::trim(num);
        let den = poly::trim(den);
        if poly::is_zero(&den) {
            return Err(LtiError::ZeroDenominator);
        }
        Ok(Self { num, den })
    }

    pub fn constant(k: f64) -> Self {
        Self { num: poly::trim(vec![k]), den: vec![1.0] }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    /// The Laplace variable `s`.
    pub fn s() -> Self {
        Self { num: vec![0.0, 1.0], den: vec![1.0] }
    }

    /// `1 / (tau s + 1)`.
    pub fn first_order_lag(tau: f64) -> Self {
        Self { num: vec![1.0], den: poly::trim(vec![1.0, tau]) }
    }

    /// PI controller `kp + ki / s`.
    pub fn pi(kp: f64, ki: f64) -> Self {
        Self { num: poly::trim(vec![ki, kp]), den: vec![0.0, 1.0] }
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        poly::is_zero(&self.num)
    }

    pub fn num_degree(&self) -> usize {
        poly::degree(&self.num)
    }

    pub fn den_degree(&self) -> usize {
        poly::degree(&self.den)
    }

    pub fn is_proper(&self) -> bool {
        self.is_zero() || self.num_degree() <= self.den_degree()
    }

    /// Gain as `s -> 0`; `None` for a pole at the origin.
    pub fn dc_gain(&self) -> Option<f64> {
        if self.den[0] == 0.0 {
            if self.is_zero() {
                return Some(0.0);
            }
            return None;
        }
        Some(self.num[0] / self.den[0])
    }

    /// Every pole strictly in the open left half plane (Routh-Hurwitz).
    pub fn is_stable(&self) -> bool {
        poly::is_hurwitz(&self.den)
    }

    pub fn poles(&self) -> Vec<Complex64> {
        poly::roots(&self.den)
    }

    pub fn zeros(&self) -> Vec<Complex64> {
        poly::roots(&self.num)
    }

    /// Evaluate at an arbitrary complex point; `None` at a pole.
    pub fn eval_s(&self, s: Complex64) -> Option<Complex64> {
        let d = poly::eval(&self.den, s);
        if d.norm() < POLE_TOL {
            return None;
        }
        Some(poly::eval(&self.num, s) / d)
    }

    /// `g(jω)` by Horner evaluation.
    pub fn eval(&self, omega: f64) -> Result<ComplexResponse, LtiError> {
        self.eval_s(Complex64::new(0.0, omega))
            .map(|value| ComplexResponse { omega, value })
            .ok_or(LtiError::PoleOnGrid { omega })
    }

    pub fn magnitude(&self, omega: f64) -> Result<f64, LtiError> {
        Ok(self.eval(omega)?.magnitude())
    }

    pub fn scale(&self, k: f64) -> Self {
        Self { num: poly::scale(&self.num, k), den: self.den.clone() }
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    pub fn series(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self { num: vec![0.0], den: poly::mul(&self.den, &other.den) };
        }
        Self {
            num: poly::mul(&self.num, &other.num),
            den: poly::mul(&self.den, &other.den),
        }
    }

    /// Sum; identical denominators are shared rather than multiplied.
    pub fn parallel(&self, other: &Self) -> Self {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        if self.den == other.den {
            return Self { num: poly::add(&self.num, &other.num), den: self.den.clone() };
        }
        Self {
            num: poly::add(&poly::mul(&self.num, &other.den), &poly::mul(&other.num, &self.den)),
            den: poly::mul(&self.den, &other.den),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        if self == other {
            return Self::zero();
        }
        self.parallel(&other.neg())
    }

    /// Quotient `self / other`.
    pub fn div(&self, other: &Self) -> Result<Self, LtiError> {
        if other.is_zero() {
            return Err(LtiError::ZeroDenominator);
        }
        if self == other {
            return Ok(Self::one());
        }
        if self.den == other.den {
            return Self::new(self.num.clone(), other.num.clone());
        }
        Self::new(poly::mul(&self.num, &other.den), poly::mul(&self.den, &other.num))
    }

    /// `self / (1 + self·h)`.
    pub fn feedback(&self, h: &Self) -> Result<Self, LtiError> {
        let num = poly::mul(&self.num, &h.den);
        let den = poly::add(&poly::mul(&self.den, &h.den), &poly::mul(&self.num, &h.num));
        Self::new(num, den)
    }

    /// Multiply improper blocks by `(s/(100 ω_h) + 1)^-r`, where `ω_h` is the
    /// largest corner frequency among poles and zeros and `r` the excess degree.
    pub fn with_rolloff(&self) -> Self {
        if self.is_proper() {
            return self.clone();
        }
        let excess = self.num_degree() - self.den_degree();
        let corner = self
            .poles()
            .into_iter()
            .chain(self.zeros())
            .map(|z| z.norm())
            .filter(|m| *m > 0.0)
            .fold(1.0_f64, f64::max);
        let lag = poly::pow(&[1.0, 1.0 / (100.0 * corner)], excess);
        Self { num: self.num.clone(), den: poly::mul(&self.den, &lag) }
    }

    /// Tustin realization at step `dt`.
    pub fn discretize(&self, dt: f64) -> Result<DiscreteFilter, LtiError> {
        tf_discretize(self, dt)
    }
}

/// Compose two blocks.
pub fn tf_connect(
    a: &TransferFunction,
    b: &TransferFunction,
    mode: Connection,
) -> Result<TransferFunction, LtiError> {
    match mode {
        Connection::Series => Ok(a.series(b)),
        Connection::Parallel => Ok(a.parallel(b)),
        Connection::Feedback => a.feedback(b),
    }
}

pub fn tf_eval(g: &TransferFunction, omega: f64) -> Result<ComplexResponse, LtiError> {
    g.eval(omega)
}

/// Map `p(s)` of degree ≤ `n` to `(z+1)^n p(c (z-1)/(z+1))`, ascending in z.
fn bilinear_poly(p: &[f64], n: usize, c: f64) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    let mut ck = 1.0;
    for (k, &pk) in p.iter().enumerate() {
        if pk != 0.0 {
            let term = poly::mul(&poly::pow(&[-1.0, 1.0], k), &poly::pow(&[1.0, 1.0], n - k));
            for (i, t) in term.iter().enumerate() {
                out[i] += pk * ck * t;
            }
        }
        ck *= c;
    }
    out
}

/// Split `p` into its leading coefficient and monic real factors: one linear
/// factor per real root, one quadratic per complex-conjugate pair.
fn real_factors(p: &[f64]) -> (f64, Vec<Vec<f64>>) {
    let n = poly::degree(p);
    let lead = p[n];
    let mut factors = Vec::new();
    for r in poly::roots(p) {
        let tol = 1e-9 * (1.0 + r.norm());
        if r.im.abs() <= tol {
            factors.push(vec![-r.re, 1.0]);
        } else if r.im > 0.0 {
            factors.push(vec![r.norm_sqr(), -2.0 * r.re, 1.0]);
        }
    }
    (lead, factors)
}

/// Pair numerator factors with denominator factors into proper sections of
/// order one or two.
fn sections_of(g: &TransferFunction) -> Vec<(Vec<f64>, Vec<f64>)> {
    let (kn, zeros) = real_factors(g.num());
    let (kd, poles) = real_factors(g.den());
    let mut secs: Vec<(Vec<f64>, Vec<f64>)> = poles.into_iter().map(|d| (vec![1.0], d)).collect();
    if secs.is_empty() {
        secs.push((vec![1.0], vec![1.0]));
    }
    let free = |s: &(Vec<f64>, Vec<f64>)| poly::degree(&s.1) - poly::degree(&s.0);
    for z in zeros.iter().filter(|z| z.len() == 3) {
        let i = match secs.iter().position(|s| free(s) == 2) {
            Some(i) => i,
            None => {
                // Merge two first-order sections to make room for the pair.
                let mut idx = secs.iter().enumerate().filter(|(_, s)| free(s) == 1 && s.1.len() == 2).map(|(i, _)| i);
                let (i, j) = (idx.next().expect("proper system"), idx.next().expect("proper system"));
                let (_, dj) = secs.remove(j);
                secs[i].1 = poly::mul(&secs[i].1, &dj);
                i
            }
        };
        secs[i].0 = poly::mul(&secs[i].0, z);
    }
    for z in zeros.iter().filter(|z| z.len() == 2) {
        let i = secs.iter().position(|s| free(s) >= 1).expect("proper system");
        secs[i].0 = poly::mul(&secs[i].0, z);
    }
    let k = kn / kd;
    secs[0].0.iter_mut().for_each(|c| *c *= k);
    secs
}

/// Tustin map of one section with the DC residue moved into the last
/// numerator coefficient.
fn tustin_section(num: &[f64], den: &[f64], dt: f64) -> Result<Section, LtiError> {
    let n = poly::degree(den);
    let c = 2.0 / dt;
    let den_z = bilinear_poly(den, n, c);
    let num_z = bilinear_poly(num, n, c);
    // Coefficient of z^n is den(c); dividing by z^n turns descending z into ascending z^-1.
    let a0 = den_z[n];
    let scale_ref = den_z.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if a0.abs() <= 1e-12 * scale_ref {
        return Err(LtiError::TustinSingularity { at: c });
    }
    let a: Vec<f64> = den_z.iter().rev().map(|v| v / a0).collect();
    let mut b: Vec<f64> = num_z.iter().rev().map(|v| v / a0).collect();
    if den[0] != 0.0 {
        let g0 = num[0] / den[0];
        let sum_a: f64 = a.iter().sum();
        let sum_b: f64 = b.iter().sum();
        b[n] += g0 * sum_a - sum_b;
    }
    Ok(Section::new(b, a))
}

/// Bilinear (Tustin) discretization `s <- (2/dt)(z-1)/(z+1)`, realized as a
/// cascade of first- and second-order sections with exact DC gain each.
/// A single high-order difference equation at millisecond steps has a DC
/// gain that is a small difference of O(1) coefficients; the cascade keeps
/// it accurate to rounding.
pub fn tf_discretize(g: &TransferFunction, dt: f64) -> Result<DiscreteFilter, LtiError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(LtiError::InvalidStep(dt));
    }
    if !g.is_proper() {
        return Err(LtiError::ImproperSystem { num: g.num_degree(), den: g.den_degree() });
    }
    if g.is_zero() {
        return Ok(DiscreteFilter { sections: vec![Section::new(vec![0.0], vec![1.0])], dt });
    }
    let sections = sections_of(g)
        .iter()
        .map(|(num, den)| tustin_section(num, den, dt))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DiscreteFilter { sections, dt })
}

/// One direct-form II transposed difference equation.
#[derive(Debug, Clone, PartialEq)]
struct Section {
    /// Denominator in powers of z^-1, `a[0] == 1`.
    a: Vec<f64>,
    /// Numerator in powers of z^-1, same length as `a`.
    b: Vec<f64>,
    state: Vec<f64>,
}

impl Section {
    fn new(mut b: Vec<f64>, mut a: Vec<f64>) -> Self {
        let len = a.len().max(b.len()).max(1);
        a.resize(len, 0.0);
        b.resize(len, 0.0);
        let a0 = a[0];
        a.iter_mut().for_each(|v| *v /= a0);
        b.iter_mut().for_each(|v| *v /= a0);
        Self { a, b, state: vec![0.0; len - 1] }
    }

    fn dc_gain(&self) -> Option<f64> {
        let sa: f64 = self.a.iter().sum();
        if sa.abs() < 1e-300 {
            return None;
        }
        Some(self.b.iter().sum::<f64>() / sa)
    }

    fn set_equilibrium(&mut self, u: f64, y: f64) {
        let n = self.state.len();
        let mut next = 0.0;
        for i in (0..n).rev() {
            next += self.b[i + 1] * u - self.a[i + 1] * y;
            self.state[i] = next;
        }
    }

    fn step(&mut self, u: f64) -> f64 {
        let n = self.state.len();
        if n == 0 {
            return self.b[0] * u;
        }
        let y = self.b[0] * u + self.state[0];
        for i in 0..n - 1 {
            self.state[i] = self.b[i + 1] * u - self.a[i + 1] * y + self.state[i + 1];
        }
        self.state[n - 1] = self.b[n] * u - self.a[n] * y;
        y
    }
}

/// Proper z-domain transfer function as a cascade of low-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFilter {
    sections: Vec<Section>,
    dt: f64,
}

impl DiscreteFilter {
    /// Single difference equation from z^-1 coefficient lists; `a` is
    /// normalized so `a[0] == 1`.
    pub fn from_coefficients(b: Vec<f64>, a: Vec<f64>, dt: f64) -> Self {
        Self { sections: vec![Section::new(b, a)], dt }
    }

    /// Pass-through filter.
    pub fn unity(dt: f64) -> Self {
        Self::from_coefficients(vec![1.0], vec![1.0], dt)
    }

    /// Number of state variables.
    pub fn order(&self) -> usize {
        self.sections.iter().map(|s| s.state.len()).sum()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn reset(&mut self) {
        self.sections.iter_mut().for_each(|s| s.state.iter_mut().for_each(|v| *v = 0.0));
    }

    /// Steady-state gain; `None` with a pole at z = 1.
    pub fn dc_gain(&self) -> Option<f64> {
        self.sections.iter().try_fold(1.0, |g, s| Some(g * s.dc_gain()?))
    }

    /// Load the steady state for constant input `u`.
    pub fn init_steady(&mut self, u: f64) -> Result<(), LtiError> {
        let mut x = u;
        for s in &mut self.sections {
            let y = s.dc_gain().ok_or(LtiError::NoSteadyState)? * x;
            s.set_equilibrium(x, y);
            x = y;
        }
        Ok(())
    }

    /// Advance one sample.
    pub fn step(&mut self, u: f64) -> Result<f64, LtiError> {
        if !u.is_finite() {
            return Err(LtiError::NonFiniteInput(u));
        }
        Ok(self.step_unchecked(u))
    }

    pub(crate) fn step_unchecked(&mut self, u: f64) -> f64 {
        self.sections.iter_mut().fold(u, |x, s| s.step(x))
    }
}

/// Advance a filter one sample.
pub fn filter_step(f: &mut DiscreteFilter, u: f64) -> Result<f64, LtiError> {
    f.step(u)
}
