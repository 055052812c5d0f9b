//! Simulation building blocks: delay lines, measurement noise, recorded time
//! series and response metrics. The scenario loop itself lives in
//! [`crate::engine`] and is re-exported here as [`run`].

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::engine::run;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("delay history too short: read at {read_t} s but oldest sample is {oldest_t} s")]
    BufferUnderrun { read_t: f64, oldest_t: f64 },
    #[error("channel `{0}` not recorded")]
    ChannelMissing(String),
    #[error("channel `{0}` shows no response after the event")]
    NoResponse(String),
    #[error("channel `{0}` has not settled in the metric window")]
    NoSteadyState(String),
    #[error("metric window [{start}, {end}] s lies outside the record")]
    WindowOutsideRecord { start: f64, end: f64 },
}

/// Delay as a function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayProfile {
    Constant { t: f64 },
    /// `(t_min + t_max)/2 + (t_max − t_min)/2 · sin(0.1 t)`.
    Sinusoidal { t_min: f64, t_max: f64 },
    /// Delay `T_k` from time `t_k` on; before the first entry the first delay applies.
    Piecewise { points: Vec<(f64, f64)> },
}

impl Default for DelayProfile {
    fn default() -> Self {
        DelayProfile::Constant { t: 0.0 }
    }
}

impl DelayProfile {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            DelayProfile::Constant { t: d } => *d,
            DelayProfile::Sinusoidal { t_min, t_max } => {
                (t_min + t_max) / 2.0 + (t_max - t_min) / 2.0 * (0.1 * t).sin()
            }
            DelayProfile::Piecewise { points } => {
                let mut d = points.first().map(|p| p.1).unwrap_or(0.0);
                for &(tk, dk) in points {
                    if t >= tk {
                        d = dk;
                    }
                }
                d
            }
        }
    }

    /// `(min, max)` of the delay over all time.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            DelayProfile::Constant { t } => (*t, *t),
            DelayProfile::Sinusoidal { t_min, t_max } => (*t_min, *t_max),
            DelayProfile::Piecewise { points } => points
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1))),
        }
    }
}

/// Time-stamped history read back at `t − T(t)` with linear interpolation.
#[derive(Debug, Clone)]
pub struct DelayLine {
    buffer: VecDeque<(f64, f64)>,
    profile: DelayProfile,
    /// History kept beyond the largest delay.
    keep: f64,
    last_read_t: f64,
    /// Set once old samples have been discarded; earlier reads are then errors.
    trimmed: bool,
}

impl DelayLine {
    pub fn new(profile: DelayProfile) -> Self {
        let keep = profile.bounds().1.max(0.0) + 0.1;
        Self { buffer: VecDeque::new(), profile, keep, last_read_t: f64::NEG_INFINITY, trimmed: false }
    }

    pub fn profile(&self) -> &DelayProfile {
        &self.profile
    }

    /// Append a sample; times must be non-decreasing.
    pub fn push(&mut self, t: f64, value: f64) {
        if let Some(&(tb, _)) = self.buffer.back() {
            if t <= tb {
                self.buffer.pop_back();
            }
        }
        self.buffer.push_back((t, value));
        while self.buffer.len() > 2 && self.buffer[1].0 < t - self.keep {
            self.buffer.pop_front();
            self.trimmed = true;
        }
    }

    /// Value at `t − T(t)`. Reads before the first sample return the first
    /// sample; read times never move backwards.
    pub fn read(&mut self, t: f64) -> Result<f64, SimError> {
        let Some(&(t0, v0)) = self.buffer.front() else {
            return Ok(0.0);
        };
        let rt = (t - self.profile.at(t)).max(self.last_read_t);
        self.last_read_t = rt;
        if rt < t0 {
            if self.trimmed {
                return Err(SimError::BufferUnderrun { read_t: rt, oldest_t: t0 });
            }
            return Ok(v0);
        }
        let (tn, vn) = *self.buffer.back().unwrap();
        if rt >= tn {
            return Ok(vn);
        }
        // Binary search for the bracketing pair.
        let idx = self.buffer.partition_point(|&(ts, _)| ts <= rt);
        let (ta, va) = self.buffer[idx - 1];
        let (tb, vb) = self.buffer[idx];
        Ok(va + (vb - va) * (rt - ta) / (tb - ta))
    }
}

/// Read a delay line once; see [`DelayLine::read`].
pub fn delay_read(dl: &mut DelayLine, t: f64) -> Result<f64, SimError> {
    dl.read(t)
}

/// First-order-shaped Gaussian measurement noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub seed: u64,
    /// Standard deviation (pu).
    pub amplitude: f64,
    /// rad/s.
    pub corner: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { seed: 1, amplitude: 0.002, corner: 50.0 }
    }
}

/// Stationary AR(1) process with standard deviation `amplitude` and
/// correlation time `1/corner`.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    rng: ChaCha8Rng,
    alpha: f64,
    gain: f64,
    x: f64,
}

impl NoiseSource {
    pub fn new(cfg: &NoiseConfig, dt: f64) -> Self {
        let alpha = (-cfg.corner * dt).exp();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let w: f64 = StandardNormal.sample(&mut rng);
        Self { rng, alpha, gain: (1.0 - alpha * alpha).sqrt() * cfg.amplitude, x: w * cfg.amplitude }
    }

    pub fn sample(&mut self) -> f64 {
        let w: f64 = StandardNormal.sample(&mut self.rng);
        self.x = self.alpha * self.x + self.gain * w;
        self.x
    }
}

/// Column-oriented record of a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimeSeriesRecord {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl TimeSeriesRecord {
    /// Empty record; the first name must be the time column.
    pub fn new(names: Vec<String>) -> Self {
        let columns = vec![Vec::new(); names.len()];
        Self { names, columns }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.columns.len());
        for (c, v) in self.columns.iter_mut().zip(row) {
            c.push(*v);
        }
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, name: &str) -> Result<&[f64], SimError> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| SimError::ChannelMissing(name.to_string()))
    }

    pub fn time(&self) -> &[f64] {
        &self.columns[0]
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.names.join(",");
        out.push('\n');
        for i in 0..self.len() {
            let row: Vec<String> = self.columns.iter().map(|c| format!("{}", c[i])).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty csv")?;
        let names: Vec<String> = header.split(',').map(str::to_string).collect();
        let mut rec = Self::new(names);
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|v| v.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| format!("line {}: {e}", i + 2))?;
            if row.len() != rec.names.len() {
                return Err(format!("line {}: expected {} fields", i + 2, rec.names.len()));
            }
            rec.push_row(&row);
        }
        Ok(rec)
    }
}

/// Response metrics of one channel after an event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseMetrics {
    /// 10 % to 90 % of the post-event steady change (s).
    pub rise_time: f64,
    /// Event to the 90 % crossing (s); includes any transport delay.
    pub response_time: f64,
    pub nadir_hz: f64,
    pub steady_state_dev_hz: f64,
    /// Time after the event until the channel stays within 5 % of the change (s).
    pub settle_time: f64,
    pub overshoot_pct: f64,
}

impl ResponseMetrics {
    pub fn to_text(&self) -> String {
        format!(
            "rise_time_s={}\nresponse_time_s={}\nnadir_hz={}\nsteady_state_dev_hz={}\nsettle_time_s={}\novershoot_pct={}\n",
            self.rise_time, self.response_time, self.nadir_hz, self.steady_state_dev_hz, self.settle_time, self.overshoot_pct
        )
    }
}

/// Where metrics are computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWindow {
    pub event_t: f64,
    /// End of the pre-restoration window; the last 10 % defines steady state.
    pub end_t: f64,
    pub f_nom: f64,
}

fn first_crossing(t: &[f64], x: &[f64], level: f64, from: usize) -> Option<f64> {
    for i in from.max(1)..x.len() {
        if x[i] >= level && x[i - 1] < level {
            return Some(t[i - 1] + (level - x[i - 1]) / (x[i] - x[i - 1]) * (t[i] - t[i - 1]));
        }
        if i == from.max(1) && x[i - 1] >= level {
            return Some(t[i - 1]);
        }
    }
    None
}

/// Rise time, nadir, steady-state deviation, settling and overshoot.
pub fn metrics(rec: &TimeSeriesRecord, window: MetricWindow, channel: &str) -> Result<ResponseMetrics, SimError> {
    let t = rec.time();
    let x = rec.channel(channel)?;
    let f = rec.channel("f_hz")?;
    let (Some(&t_first), Some(&t_last)) = (t.first(), t.last()) else {
        return Err(SimError::WindowOutsideRecord { start: window.event_t, end: window.end_t });
    };
    if window.event_t <= t_first || window.end_t > t_last + 1e-9 || window.end_t <= window.event_t {
        return Err(SimError::WindowOutsideRecord { start: window.event_t, end: window.end_t });
    }
    let i_event = t.partition_point(|&v| v < window.event_t);
    let i_end = t.partition_point(|&v| v < window.end_t - 1e-9);
    let i_tail = t.partition_point(|&v| v < window.end_t - 0.1 * (window.end_t - window.event_t));
    let baseline = x[i_event - 1];
    let tail = &x[i_tail..i_end];
    let final_v = tail.iter().sum::<f64>() / tail.len() as f64;
    let change = final_v - baseline;
    let scale = x[i_event..i_end].iter().fold(0.0_f64, |m, v| m.max((v - baseline).abs()));
    if scale < 1e-9 || change.abs() < 1e-6 * scale.max(1e-9) {
        return Err(SimError::NoResponse(channel.to_string()));
    }
    let spread = tail.iter().fold(0.0_f64, |m, v| m.max((v - final_v).abs()));
    if spread > 0.05 * change.abs() {
        return Err(SimError::NoSteadyState(channel.to_string()));
    }
    // Normalize so the response rises from 0 to 1.
    let norm: Vec<f64> = x[..i_end].iter().map(|v| (v - baseline) / change).collect();
    let t10 = first_crossing(&t[..i_end], &norm, 0.1, i_event).ok_or_else(|| SimError::NoResponse(channel.to_string()))?;
    let t90 = first_crossing(&t[..i_end], &norm, 0.9, i_event).ok_or_else(|| SimError::NoResponse(channel.to_string()))?;
    let overshoot = norm[i_event..].iter().fold(0.0_f64, |m, v| m.max(v - 1.0)) * 100.0;
    let mut settle = 0.0;
    for i in (i_event..i_end).rev() {
        if (norm[i] - 1.0).abs() > 0.05 {
            settle = t[(i + 1).min(i_end - 1)] - window.event_t;
            break;
        }
    }
    let nadir = f[i_event..i_end].iter().copied().fold(f64::INFINITY, f64::min);
    let f_tail = &f[i_tail..i_end];
    let f_ss = f_tail.iter().sum::<f64>() / f_tail.len() as f64;
    Ok(ResponseMetrics {
        rise_time: t90 - t10,
        response_time: t90 - window.event_t,
        nadir_hz: nadir,
        steady_state_dev_hz: f_ss - window.f_nom,
        settle_time: settle,
        overshoot_pct: overshoot,
    })
}

/// Peak-to-peak spread of `channel` over the last `frac` of the record.
pub fn tail_peak_to_peak(rec: &TimeSeriesRecord, channel: &str, frac: f64) -> Result<f64, SimError> {
    let x = rec.channel(channel)?;
    let start = ((1.0 - frac.clamp(0.0, 1.0)) * x.len() as f64) as usize;
    let tail = &x[start.min(x.len())..];
    let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(if tail.is_empty() { 0.0 } else { hi - lo })
}

/// `RMS(a − b) / RMS(b)` over samples with `t ∈ [start, end]`.
pub fn rms_relative(t: &[f64], a: &[f64], b: &[f64], start: f64, end: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..t.len() {
        if t[i] >= start && t[i] <= end {
            num += (a[i] - b[i]).powi(2);
            den += b[i].powi(2);
        }
    }
    if den == 0.0 {
        return if num == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (num / den).sqrt()
}
