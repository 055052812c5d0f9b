//! Dense real polynomials stored as ascending coefficient vectors.

use num_complex::Complex64;

/// Drop exact trailing zeros; the zero polynomial is `[0.0]`.
pub fn trim(mut p: Vec<f64>) -> Vec<f64> {
    while p.len() > 1 && p[p.len() - 1] == 0.0 {
        p.pop();
    }
    if p.is_empty() {
        p.push(0.0);
    }
    p
}

pub fn is_zero(p: &[f64]) -> bool {
    p.iter().all(|&c| c == 0.0)
}

/// Degree of a trimmed polynomial (the zero polynomial reports 0).
pub fn degree(p: &[f64]) -> usize {
    p.iter().rposition(|&c| c != 0.0).unwrap_or(0)
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    let out = (0..n)
        .map(|i| a.get(i).copied().unwrap_or(0.0) + b.get(i).copied().unwrap_or(0.0))
        .collect();
    trim(out)
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    let out = (0..n)
        .map(|i| a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0))
        .collect();
    trim(out)
}

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if is_zero(a) || is_zero(b) {
        return vec![0.0];
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    trim(out)
}

pub fn scale(a: &[f64], k: f64) -> Vec<f64> {
    trim(a.iter().map(|c| c * k).collect())
}

/// `p^k` by repeated multiplication.
pub fn pow(p: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![1.0];
    for _ in 0..k {
        out = mul(&out, p);
    }
    out
}

/// Horner evaluation at a complex point.
pub fn eval(p: &[f64], s: Complex64) -> Complex64 {
    p.iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

pub fn eval_real(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Substitute `s -> s / w`, i.e. coefficient k is divided by `w^k`.
pub fn scale_variable(p: &[f64], w: f64) -> Vec<f64> {
    let mut f = 1.0;
    let mut out = Vec::with_capacity(p.len());
    for &c in p {
        out.push(c * f);
        f /= w;
    }
    trim(out)
}

/// All complex roots by Aberth-Ehrlich iteration.
pub fn roots(p: &[f64]) -> Vec<Complex64> {
    let n = degree(p);
    if n == 0 {
        return Vec::new();
    }
    let lead = p[n];
    let monic: Vec<f64> = p[..=n].iter().map(|c| c / lead).collect();
    let deriv: Vec<f64> = (1..=n).map(|k| monic[k] * k as f64).collect();
    // Cauchy bound for the initial circle.
    let radius = 1.0 + monic[..n].iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(radius, 0.4 + 2.0 * std::f64::consts::PI * k as f64 / n as f64))
        .collect();
    for _ in 0..500 {
        let mut worst = 0.0_f64;
        for i in 0..n {
            let pz = eval(&monic, z[i]);
            let dz = eval(&deriv, z[i]);
            if pz.norm() == 0.0 {
                continue;
            }
            let ratio = pz / dz;
            let repulse: Complex64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d = z[i] - z[j];
                    if d.norm() == 0.0 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        d.inv()
                    }
                })
                .sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulse);
            if step.is_finite() {
                z[i] -= step;
                worst = worst.max(step.norm() / (1.0 + z[i].norm()));
            }
        }
        if worst < 1e-15 {
            break;
        }
    }
    z
}

/// Routh-Hurwitz test: true iff every root has a strictly negative real part.
pub fn is_hurwitz(p: &[f64]) -> bool {
    let n = degree(p);
    if n == 0 {
        return p[0] != 0.0;
    }
    // Descending order, normalized to a positive leading coefficient.
    let sign = p[n].signum();
    let desc: Vec<f64> = p[..=n].iter().rev().map(|c| c * sign).collect();
    if desc.iter().any(|&c| c <= 0.0) {
        return false;
    }
    let mut r0: Vec<f64> = desc.iter().step_by(2).copied().collect();
    let mut r1: Vec<f64> = desc.iter().skip(1).step_by(2).copied().collect();
    for _ in 0..n {
        if r1.is_empty() {
            break;
        }
        let scale = r0.iter().chain(r1.iter()).fold(0.0_f64, |m, c| m.max(c.abs()));
        if r1[0] <= 1e-14 * scale {
            return false;
        }
        let mut next = Vec::with_capacity(r0.len());
        for k in 0..r0.len().saturating_sub(1) {
            let b = r1.get(k + 1).copied().unwrap_or(0.0);
            next.push((r1[0] * r0[k + 1] - r0[0] * b) / r1[0]);
        }
        r0 = r1;
        r1 = next;
        while r1.len() > 1 && r1[r1.len() - 1] == 0.0 {
            r1.pop();
        }
        if r1.len() == 1 && r1[0] == 0.0 {
            r1.clear();
        }
    }
    r0[0] > 0.0
}
