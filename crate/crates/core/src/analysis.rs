//! Frequency-domain design and verification of the frequency response
//! observer: Bode data, closed loops, Q-filter selection, PI tuning and the
//! two robust-stability checks (parameter uncertainty and communication delay).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lti::{LtiError, TransferFunction};
use crate::poly;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error("filter degree {0} outside 1..=6")]
    DegreeOutOfRange(usize),
    #[error("no feasible Q filter: {0}")]
    NoFeasibleFilter(String),
    #[error("no stabilizing PI pair found")]
    UnstableResult,
    #[error("weight fit failed: {0}")]
    WeightFitFailure(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Log-spaced grid with `n` points including both ends.
pub fn log_grid(omega_min: f64, omega_max: f64, n: usize) -> Vec<f64> {
    let (a, b) = (omega_min.log10(), omega_max.log10());
    let mut out: Vec<f64> = (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1).max(1) as f64))
        .collect();
    // Pin the ends so callers can rely on exact endpoints.
    if let Some(first) = out.first_mut() {
        *first = omega_min;
    }
    if n > 1 {
        out[n - 1] = omega_max;
    }
    out
}

/// The 400-point grid over [1e-3, 1e3] rad/s used by the robustness checks.
pub fn robustness_grid() -> Vec<f64> {
    log_grid(1e-3, 1e3, 400)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodePoint {
    pub omega: f64,
    pub mag_db: f64,
    pub phase_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodeData {
    pub grid: Vec<BodePoint>,
}

impl BodeData {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("omega_rad_s,mag_db,phase_deg\n");
        for p in &self.grid {
            out.push_str(&format!("{},{},{}\n", p.omega, p.mag_db, p.phase_deg));
        }
        out
    }
}

/// Bode data at 50 points per decade.
pub fn bode(g: &TransferFunction, omega_min: f64, omega_max: f64) -> Result<BodeData, AnalysisError> {
    if !(omega_min > 0.0 && omega_max > omega_min) {
        return Err(AnalysisError::InvalidArgument(format!(
            "need 0 < omega_min < omega_max, got {omega_min}, {omega_max}"
        )));
    }
    let decades = (omega_max / omega_min).log10();
    let n = ((decades * 50.0).ceil() as usize + 1).max(2);
    bode_on(g, &log_grid(omega_min, omega_max, n))
}

/// Bode data on an explicit increasing grid, phase unwrapped.
pub fn bode_on(g: &TransferFunction, grid: &[f64]) -> Result<BodeData, AnalysisError> {
    let mut out = Vec::with_capacity(grid.len());
    let mut prev: Option<f64> = None;
    for &w in grid {
        let v = g.eval(w)?.value;
        let mut ph = v.arg().to_degrees();
        if let Some(p) = prev {
            while ph - p > 180.0 {
                ph -= 360.0;
            }
            while ph - p < -180.0 {
                ph += 360.0;
            }
        }
        prev = Some(ph);
        out.push(BodePoint { omega: w, mag_db: 20.0 * v.norm().log10(), phase_deg: ph });
    }
    Ok(BodeData { grid: out })
}

/// Unwrapped phase (rad) of `g` along a grid.
fn unwrapped_phase(values: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut prev: Option<f64> = None;
    for v in values {
        let mut ph = v.arg();
        if let Some(p) = prev {
            while ph - p > std::f64::consts::PI {
                ph -= 2.0 * std::f64::consts::PI;
            }
            while ph - p < -std::f64::consts::PI {
                ph += 2.0 * std::f64::consts::PI;
            }
        }
        prev = Some(ph);
        out.push(ph);
    }
    out
}

/// Numerator shape of a Q filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QShape {
    /// Numerator 1: plain Butterworth low-pass.
    LowPass,
    /// Numerator is the Butterworth denominator without its top term, so
    /// `1 - Q = (s/ω_c)^n / B_n(s/ω_c)`.
    Template,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QFilter {
    pub n: usize,
    pub omega_c: f64,
    pub shape: QShape,
    pub tf: TransferFunction,
}

/// Normalized Butterworth polynomial of degree `n`, ascending coefficients.
pub fn butterworth_poly(n: usize) -> Vec<f64> {
    let mut p = vec![1.0];
    // Poles k and n-1-k are conjugates; odd degree adds the real pole at -1.
    for k in 0..n / 2 {
        let theta = std::f64::consts::PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
        p = poly::mul(&p, &[1.0, -2.0 * theta.cos(), 1.0]);
    }
    if n % 2 == 1 {
        p = poly::mul(&p, &[1.0, 1.0]);
    }
    p
}

fn check_q_args(n: usize, omega_c: f64) -> Result<(), AnalysisError> {
    if !(1..=6).contains(&n) {
        return Err(AnalysisError::DegreeOutOfRange(n));
    }
    if !(omega_c > 0.0 && omega_c.is_finite()) {
        return Err(AnalysisError::InvalidArgument(format!("omega_c must be positive, got {omega_c}")));
    }
    Ok(())
}

/// Butterworth low-pass `1 / B_n(s/ω_c)`.
pub fn butterworth_q(n: usize, omega_c: f64) -> Result<QFilter, AnalysisError> {
    check_q_args(n, omega_c)?;
    let den = poly::scale_variable(&butterworth_poly(n), omega_c);
    Ok(QFilter { n, omega_c, shape: QShape::LowPass, tf: TransferFunction::new(vec![1.0], den)? })
}

/// `(1 + Σ_{m<n} f_m x^m) / (1 + Σ_{m≤n} f_m x^m)` with Butterworth `f_m`, `x = s/ω_c`.
pub fn template_q(n: usize, omega_c: f64) -> Result<QFilter, AnalysisError> {
    check_q_args(n, omega_c)?;
    let den = poly::scale_variable(&butterworth_poly(n), omega_c);
    let num = den[..n].to_vec();
    Ok(QFilter { n, omega_c, shape: QShape::Template, tf: TransferFunction::new(num, den)? })
}

pub fn make_q(shape: QShape, n: usize, omega_c: f64) -> Result<QFilter, AnalysisError> {
    match shape {
        QShape::LowPass => butterworth_q(n, omega_c),
        QShape::Template => template_q(n, omega_c),
    }
}

/// Closed loops of the plant loop with the observer in place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrobLoopSet {
    /// Reference to output.
    pub g_yry: TransferFunction,
    /// Asset frequency-control command to output.
    pub g_pdy: TransferFunction,
    /// Measurement noise to output.
    pub g_ny: TransferFunction,
}

/// `Δ = 1 + Q C_p G_n − Q C_p G + C_p G`.
fn shared_denominator(
    c_p: &TransferFunction,
    g: &TransferFunction,
    g_n: &TransferFunction,
    q: &TransferFunction,
) -> TransferFunction {
    let qcg_n = q.series(c_p).series(g_n);
    let qcg = q.series(c_p).series(g);
    let cg = c_p.series(g);
    TransferFunction::one().parallel(&qcg_n.sub(&qcg)).parallel(&cg)
}

pub fn frob_closed_loops(
    c_p: &TransferFunction,
    g: &TransferFunction,
    g_n: &TransferFunction,
    q: &TransferFunction,
    c_a2: &TransferFunction,
    g_a: &TransferFunction,
) -> Result<FrobLoopSet, AnalysisError> {
    let delta = shared_denominator(c_p, g, g_n, q);
    if delta.is_zero() {
        return Err(LtiError::ZeroDenominator.into());
    }
    let cg = c_p.series(g);
    let g_yry = cg.div(&delta)?;
    let one_plus = TransferFunction::one().parallel(&q.series(c_p).series(g_n));
    let g_pdy = c_a2.series(g_a).series(&one_plus.div(&delta)?);
    let one_minus_q = TransferFunction::one().sub(q);
    let g_ny = one_minus_q.series(&cg).neg().div(&delta)?;
    Ok(FrobLoopSet { g_yry, g_pdy, g_ny })
}

/// `L = (1 − Q) C_p G / (1 + Q G_n C_p)`.
pub fn loop_transfer(
    q: &TransferFunction,
    c_p: &TransferFunction,
    g: &TransferFunction,
    g_n: &TransferFunction,
) -> Result<TransferFunction, AnalysisError> {
    let num = TransferFunction::one().sub(q).series(c_p).series(g);
    let den = TransferFunction::one().parallel(&q.series(g_n).series(c_p));
    if num.is_zero() {
        return Ok(TransferFunction::zero());
    }
    Ok(num.div(&den)?)
}

/// Thresholds and grid for [`q_select`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QSelectOptions {
    /// Allowed deviation of the frequency-response path from unity.
    pub eps_acc: f64,
    /// Allowed noise-path gain above the noise frequency.
    pub eps_noise: f64,
    pub shape: QShape,
    pub max_degree: usize,
    /// Analysis grid for band edges.
    pub grid: Vec<f64>,
    /// Cut-off candidates per decade above the noise frequency.
    pub omega_c_per_decade: usize,
    /// Cut-off search spans this many decades above the noise frequency.
    pub omega_c_decades: f64,
}

impl Default for QSelectOptions {
    fn default() -> Self {
        Self {
            eps_acc: 0.05,
            eps_noise: 0.1,
            shape: QShape::Template,
            max_degree: 6,
            grid: robustness_grid(),
            omega_c_per_decade: 50,
            omega_c_decades: 2.0,
        }
    }
}

/// Band edges of one candidate filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandEdges {
    pub n: usize,
    pub omega_c: f64,
    /// First grid frequency where `|G_pdy / (C_A2 G_A) − 1|` exceeds `eps_acc`.
    pub unity_edge: f64,
    /// First grid frequency where the noise path leaves `eps_noise` of the
    /// no-observer noise path, i.e. `|1 − Q| > eps_noise` when `G_n = G`.
    pub attenuation_edge: f64,
    pub feasible: bool,
}

/// Result of the selection with the per-degree trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QSelection {
    pub filter: QFilter,
    pub trace: Vec<BandEdges>,
}

/// Evaluate feasibility and band edges of one candidate.
pub fn q_bands(
    q: &QFilter,
    g_n: &TransferFunction,
    c_p: &TransferFunction,
    c_a2: &TransferFunction,
    g_a: &TransferFunction,
    omega_noise: f64,
    omega_resp: f64,
    opts: &QSelectOptions,
) -> Result<BandEdges, AnalysisError> {
    let loops = frob_closed_loops(c_p, g_n, g_n, &q.tf, c_a2, g_a)?;
    let no_frob = frob_closed_loops(c_p, g_n, g_n, &TransferFunction::zero(), c_a2, g_a)?;
    let fc_path = c_a2.series(g_a);
    let top = *opts.grid.last().unwrap_or(&omega_noise);
    let mut unity_edge = None;
    let mut attenuation_edge = None;
    let mut feasible = true;
    for &w in &opts.grid {
        let pdy = loops.g_pdy.eval(w)?.value;
        let ny = loops.g_ny.eval(w)?.value;
        let ref_path = fc_path.eval(w)?.value;
        let ny_ref = no_frob.g_ny.eval(w)?.value;
        if w <= omega_resp && (pdy.norm() - 1.0).abs() > opts.eps_acc {
            feasible = false;
        }
        if w >= omega_noise && ny.norm() > opts.eps_noise {
            feasible = false;
        }
        if unity_edge.is_none() && (pdy / ref_path - 1.0).norm() > opts.eps_acc {
            unity_edge = Some(w);
        }
        if attenuation_edge.is_none() && ny.norm() > opts.eps_noise * ny_ref.norm() {
            attenuation_edge = Some(w);
        }
    }
    Ok(BandEdges {
        n: q.n,
        omega_c: q.omega_c,
        unity_edge: unity_edge.unwrap_or(top),
        attenuation_edge: attenuation_edge.unwrap_or(top),
        feasible,
    })
}

/// Q-filter selection with default thresholds.
pub fn q_select(
    g_n: &TransferFunction,
    c_p: &TransferFunction,
    c_a2: &TransferFunction,
    g_a: &TransferFunction,
    omega_noise: f64,
    omega_resp: f64,
) -> Result<QFilter, AnalysisError> {
    Ok(q_select_with(g_n, c_p, c_a2, g_a, omega_noise, omega_resp, &QSelectOptions::default())?.filter)
}

/// Degree-then-cut-off search: the cut-off is the smallest feasible candidate
/// at or above `omega_noise` for degree 1; the degree is then raised at fixed
/// cut-off while both bands strictly widen.
pub fn q_select_with(
    g_n: &TransferFunction,
    c_p: &TransferFunction,
    c_a2: &TransferFunction,
    g_a: &TransferFunction,
    omega_noise: f64,
    omega_resp: f64,
    opts: &QSelectOptions,
) -> Result<QSelection, AnalysisError> {
    if !(omega_resp > 0.0 && omega_noise > omega_resp) {
        return Err(AnalysisError::NoFeasibleFilter(format!(
            "response band ({omega_resp} rad/s) must lie below the noise band ({omega_noise} rad/s)"
        )));
    }
    let candidates = log_grid(
        omega_noise,
        omega_noise * 10f64.powf(opts.omega_c_decades),
        (opts.omega_c_per_decade as f64 * opts.omega_c_decades) as usize + 1,
    );
    let bands = |n: usize, wc: f64| -> Result<BandEdges, AnalysisError> {
        let q = make_q(opts.shape, n, wc)?;
        q_bands(&q, g_n, c_p, c_a2, g_a, omega_noise, omega_resp, opts)
    };
    let mut start = None;
    for &wc in &candidates {
        let b = bands(1, wc)?;
        if b.feasible {
            start = Some(b);
            break;
        }
    }
    let first = start.ok_or_else(|| {
        AnalysisError::NoFeasibleFilter(format!(
            "no degree-1 cut-off in [{omega_noise}, {}] rad/s meets the band criteria",
            candidates.last().copied().unwrap_or(omega_noise)
        ))
    })?;
    let wc = first.omega_c;
    let mut trace = vec![first];
    let mut best = first;
    for n in 2..=opts.max_degree {
        let b = bands(n, wc)?;
        trace.push(b);
        let wider = b.unity_edge > best.unity_edge && b.attenuation_edge > best.attenuation_edge;
        if !(b.feasible && wider) {
            break;
        }
        best = b;
    }
    Ok(QSelection { filter: make_q(opts.shape, best.n, wc)?, trace })
}

/// Outcome of [`pi_tune`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiTuning {
    pub kp: f64,
    pub ki: f64,
    pub bandwidth_hz: f64,
    pub phase_margin_deg: f64,
    pub pm_met: bool,
}

/// First frequency where `|T|` falls below `|T(0)|/√2`, refined by bisection.
pub fn closed_loop_bandwidth(t: &TransferFunction) -> Result<Option<f64>, AnalysisError> {
    let dc = t.dc_gain().unwrap_or(1.0).abs();
    let level = dc / 2f64.sqrt();
    let grid = log_grid(1e-4, 1e4, 801);
    let mut prev = grid[0];
    if t.magnitude(prev)? < level {
        return Ok(Some(prev));
    }
    for &w in &grid[1..] {
        if t.magnitude(w)? < level {
            let (mut lo, mut hi) = (prev, w);
            for _ in 0..60 {
                let mid = (lo * hi).sqrt();
                if t.magnitude(mid)? < level {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(Some((lo * hi).sqrt()));
        }
        prev = w;
    }
    Ok(None)
}

/// Phase margin (deg) of open loop `l`: the smallest margin over all gain
/// crossovers, with the crossover frequency where it occurs.
pub fn phase_margin(l: &TransferFunction) -> Result<Option<(f64, f64)>, AnalysisError> {
    let grid = log_grid(1e-4, 1e4, 1601);
    let vals: Vec<Complex64> = grid.iter().map(|&w| l.eval(w).map(|r| r.value)).collect::<Result<_, _>>()?;
    let phase = unwrapped_phase(&vals);
    let mut worst: Option<(f64, f64)> = None;
    for i in 1..grid.len() {
        let (a, b) = (vals[i - 1].norm() >= 1.0, vals[i].norm() >= 1.0);
        if a == b {
            continue;
        }
        let (mut lo, mut hi) = (grid[i - 1], grid[i]);
        for _ in 0..60 {
            let mid = (lo * hi).sqrt();
            if (l.magnitude(mid)? >= 1.0) == a {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let wc = (lo * hi).sqrt();
        // Continue the unwrapped phase from the bracketing sample.
        let mut ph = l.eval(wc)?.value.arg();
        while ph - phase[i - 1] > std::f64::consts::PI {
            ph -= 2.0 * std::f64::consts::PI;
        }
        while ph - phase[i - 1] < -std::f64::consts::PI {
            ph += 2.0 * std::f64::consts::PI;
        }
        // Signed distance to the nearest odd multiple of −180°.
        let deg = ph.to_degrees() + 180.0;
        let pm = deg - 360.0 * (deg / 360.0).round();
        if worst.is_none_or(|(w, _)| pm < w) {
            worst = Some((pm, wc));
        }
    }
    Ok(worst)
}

fn pi_loop(plant: &TransferFunction, kp: f64, ki: f64) -> Result<(TransferFunction, TransferFunction), AnalysisError> {
    let l = TransferFunction::pi(kp, ki).series(plant);
    let t = l.feedback(&TransferFunction::one())?;
    Ok((l, t))
}

/// Tune `kp + ki/s` against `plant_open` for a closed-loop −3 dB bandwidth
/// and, where reachable, a phase margin. For each `kp` on a log grid, `ki` is
/// bisected to hit the bandwidth; the pair with the best phase margin wins.
pub fn pi_tune(plant_open: &TransferFunction, bw_target_hz: f64, pm_target_deg: f64) -> Result<PiTuning, AnalysisError> {
    if !(bw_target_hz > 0.0) {
        return Err(AnalysisError::InvalidArgument(format!("bandwidth must be positive, got {bw_target_hz}")));
    }
    let target = 2.0 * std::f64::consts::PI * bw_target_hz;
    let bw_of = |kp: f64, ki: f64| -> Result<Option<f64>, AnalysisError> {
        let (_, t) = pi_loop(plant_open, kp, ki)?;
        if !t.is_stable() {
            return Ok(None);
        }
        closed_loop_bandwidth(&t)
    };
    let mut best: Option<PiTuning> = None;
    let ki_grid = log_grid(1e-4, 1e4, 81);
    for kp in log_grid(1e-3, 1e2, 101) {
        // Bracket the target between adjacent stable samples, then bisect.
        let mut bracket = None;
        let mut prev: Option<(f64, f64)> = None;
        for &ki in &ki_grid {
            let cur = bw_of(kp, ki)?.map(|b| (ki, b));
            if let (Some((k0, b0)), Some((k1, b1))) = (prev, cur) {
                if b0 < target && b1 >= target {
                    bracket = Some((k0, k1));
                    break;
                }
            }
            prev = cur;
        }
        let Some((mut lo, mut hi)) = bracket else { continue };
        let mut ok = true;
        for _ in 0..60 {
            let mid = (lo * hi).sqrt();
            match bw_of(kp, mid)? {
                Some(b) if b < target => lo = mid,
                Some(_) => hi = mid,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let ki = (lo * hi).sqrt();
        let Some(bw) = bw_of(kp, ki)? else { continue };
        if (bw / target - 1.0).abs() > 0.01 {
            continue;
        }
        let (l, _) = pi_loop(plant_open, kp, ki)?;
        let Some((pm, _)) = phase_margin(&l)? else { continue };
        let cand = PiTuning {
            kp,
            ki,
            bandwidth_hz: bw / (2.0 * std::f64::consts::PI),
            phase_margin_deg: pm,
            pm_met: pm >= pm_target_deg,
        };
        best = match best {
            Some(b) if b.phase_margin_deg >= cand.phase_margin_deg => Some(b),
            _ => Some(cand),
        };
    }
    best.ok_or(AnalysisError::UnstableResult)
}

/// Pointwise comparison of an uncertainty weight with the robustness margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub omega_grid: Vec<f64>,
    /// Uncertainty envelope `sup |M(jω)|`.
    pub m_mag: Vec<f64>,
    pub w_mag: Vec<f64>,
    /// `|1 + 1/L(jω)|`; infinite where `L(jω) = 0`.
    pub margin_mag: Vec<f64>,
    pub satisfied: bool,
    pub min_margin_ratio: f64,
    pub weight: TransferFunction,
}

impl RobustnessReport {
    fn build(omega_grid: Vec<f64>, m_mag: Vec<f64>, w_mag: Vec<f64>, margin_mag: Vec<f64>, weight: TransferFunction) -> Self {
        let min_margin_ratio = margin_mag
            .iter()
            .zip(&w_mag)
            .map(|(m, w)| m / w)
            .fold(f64::INFINITY, f64::min);
        let satisfied = w_mag.iter().zip(&margin_mag).all(|(w, m)| w < m);
        Self { omega_grid, m_mag, w_mag, margin_mag, satisfied, min_margin_ratio, weight }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("omega_rad_s,m_mag,w_mag,margin_mag\n");
        for i in 0..self.omega_grid.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.omega_grid[i], self.m_mag[i], self.w_mag[i], self.margin_mag[i]
            ));
        }
        out
    }
}

fn margin_on(l: &TransferFunction, grid: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    grid.iter()
        .map(|&w| {
            let v = l.eval(w)?.value;
            Ok(if v.norm() == 0.0 { f64::INFINITY } else { (1.0 + v.inv()).norm() })
        })
        .collect()
}

/// `sup_{0≤T≤t_max} |e^{−jωT} − 1|`.
pub fn delay_envelope(omega: f64, t_max: f64) -> f64 {
    let x = omega * t_max;
    if x <= std::f64::consts::PI {
        2.0 * (x / 2.0).sin()
    } else {
        2.0
    }
}

/// `k t_max s / (t_max s / 3.5 + 1)`.
pub fn delay_weight(k: f64, t_max: f64) -> TransferFunction {
    TransferFunction::new(vec![0.0, k * t_max], vec![1.0, t_max / 3.5]).expect("nonzero denominator")
}

/// Robust stability against a time-varying delay in `[0, t_max]`.
pub fn robust_check_delay(l: &TransferFunction, t_max: f64, omega_grid: &[f64]) -> Result<RobustnessReport, AnalysisError> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(AnalysisError::InvalidArgument(format!("t_max must be positive, got {t_max}")));
    }
    let env: Vec<f64> = omega_grid.iter().map(|&w| delay_envelope(w, t_max)).collect();
    let unit = delay_weight(1.0, t_max);
    let mut k_min = 0.0_f64;
    for (&w, &e) in omega_grid.iter().zip(&env) {
        k_min = k_min.max(e / unit.magnitude(w)?);
    }
    let k = k_min * 1.01;
    if !(k <= 10.0) {
        return Err(AnalysisError::WeightFitFailure(format!("delay weight needs k = {k:.3} > 10")));
    }
    let weight = delay_weight(k, t_max);
    let w_mag = omega_grid.iter().map(|&w| weight.magnitude(w)).collect::<Result<Vec<_>, _>>()?;
    let margin = margin_on(l, omega_grid)?;
    Ok(RobustnessReport::build(omega_grid.to_vec(), env, w_mag, margin, weight))
}

/// Smallest value treated as a nonzero envelope when fitting on log magnitude.
const ENV_FLOOR: f64 = 1e-12;

/// `k (s/ω_z + 1) / (s/ω_p + 1)`.
fn lead(k: f64, wz: f64, wp: f64) -> TransferFunction {
    TransferFunction::new(vec![k, k / wz], vec![1.0, 1.0 / wp]).expect("nonzero denominator")
}

/// Fit a first-order lead/lag weight above `env` by least squares on
/// log-magnitude; the gain is then lifted so the weight strictly bounds `env`.
pub fn fit_lead_weight(omega_grid: &[f64], env: &[f64]) -> Result<TransferFunction, AnalysisError> {
    if env.iter().any(|e| !e.is_finite()) {
        return Err(AnalysisError::WeightFitFailure("envelope is not finite".into()));
    }
    let target: Vec<f64> = env.iter().map(|e| e.max(ENV_FLOOR).ln()).collect();
    let corners = log_grid(1e-4, 1e6, 101);
    let mut best: Option<(f64, TransferFunction)> = None;
    for &wz in &corners {
        for &wp in &corners {
            let shape: Vec<f64> = omega_grid
                .iter()
                .map(|&w| {
                    let s = Complex64::new(0.0, w);
                    ((s / wz + 1.0) / (s / wp + 1.0)).norm().ln()
                })
                .collect();
            // Least-squares log gain, then lift to strictly bound the envelope.
            let mean = target.iter().zip(&shape).map(|(t, s)| t - s).sum::<f64>() / shape.len() as f64;
            let lift = target.iter().zip(&shape).map(|(t, s)| t - s - mean).fold(0.0_f64, f64::max);
            let log_k = mean + lift + 0.01;
            let cost: f64 = target.iter().zip(&shape).map(|(t, s)| (log_k + s - t).powi(2)).sum();
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                best = Some((cost, lead(log_k.exp(), wz, wp)));
            }
        }
    }
    let (_, w) = best.ok_or_else(|| AnalysisError::WeightFitFailure("empty grid".into()))?;
    for (&om, &e) in omega_grid.iter().zip(env) {
        if !(w.magnitude(om)? > e) {
            return Err(AnalysisError::WeightFitFailure(format!("weight does not bound envelope at {om} rad/s")));
        }
    }
    Ok(w)
}

/// Robust stability against multiplicative asset-parameter uncertainty.
pub fn robust_check_params(
    g_a_nominal: &TransferFunction,
    g_a_samples: &[TransferFunction],
    l: &TransferFunction,
    omega_grid: &[f64],
) -> Result<RobustnessReport, AnalysisError> {
    if g_a_samples.is_empty() {
        return Err(AnalysisError::InvalidArgument("no parameter samples".into()));
    }
    let mut env = vec![0.0_f64; omega_grid.len()];
    for (i, &w) in omega_grid.iter().enumerate() {
        let nominal = g_a_nominal.eval(w)?.value;
        for sample in g_a_samples {
            let m = (sample.eval(w)?.value / nominal - 1.0).norm();
            env[i] = env[i].max(m);
        }
    }
    let weight = fit_lead_weight(omega_grid, &env)?;
    let w_mag = omega_grid.iter().map(|&w| weight.magnitude(w)).collect::<Result<Vec<_>, _>>()?;
    let margin = margin_on(l, omega_grid)?;
    Ok(RobustnessReport::build(omega_grid.to_vec(), env, w_mag, margin, weight))
}
