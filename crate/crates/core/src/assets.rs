//! Asset-level models: converter-control command tracking for wind, solar and
//! storage units, and the asset frequency controller (droop FCR with a soft
//! deadband plus a latched FFR trapezoid).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lti::{DiscreteFilter, LtiError, TransferFunction};

/// Reserve vector index of each frequency service.
pub const FFR: usize = 0;
pub const FCR: usize = 1;
pub const FRR: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssetError {
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error("inner loop `{0}` is unstable")]
    UnstableComposition(&'static str),
    #[error("parameter {name} = {value} outside [{min}, {max}]")]
    OutOfRange { name: &'static str, value: f64, min: f64, max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetKind {
    /// Wind turbine.
    Wt,
    /// Photovoltaic unit.
    Pv,
    /// Energy storage.
    Es,
}

/// Converter-control constants of one unit. Gains and time constants are
/// per unit on the asset rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetParams {
    pub kind: AssetKind,
    /// MW.
    pub rating: f64,
    pub t_cc_msc: f64,
    pub kp_pc_msc: f64,
    pub ki_pc_msc: f64,
    pub t_cc_gsc: f64,
    pub kp_vc_gsc: f64,
    pub ki_vc_gsc: f64,
    /// Upper power limit in pu (wind/solar resource); storage is symmetric ±1.
    pub available_power: f64,
}

/// Allowed ranges of the six uncertain converter constants, in field order.
pub const PARAM_RANGES: [(&str, f64, f64); 6] = [
    ("t_cc_msc", 0.001, 0.1),
    ("kp_pc_msc", 0.05, 0.15),
    ("ki_pc_msc", 5.0, 15.0),
    ("t_cc_gsc", 0.001, 0.1),
    ("kp_vc_gsc", 7.5, 22.5),
    ("ki_vc_gsc", 75.0, 225.0),
];

impl AssetParams {
    /// Midpoint of every range.
    pub fn nominal(kind: AssetKind, rating: f64) -> Self {
        let mid = |i: usize| (PARAM_RANGES[i].1 + PARAM_RANGES[i].2) / 2.0;
        Self {
            kind,
            rating,
            t_cc_msc: mid(0),
            kp_pc_msc: mid(1),
            ki_pc_msc: mid(2),
            t_cc_gsc: mid(3),
            kp_vc_gsc: mid(4),
            ki_vc_gsc: mid(5),
            available_power: 1.0,
        }
    }

    pub fn uncertain_values(&self) -> [f64; 6] {
        [self.t_cc_msc, self.kp_pc_msc, self.ki_pc_msc, self.t_cc_gsc, self.kp_vc_gsc, self.ki_vc_gsc]
    }

    pub fn with_uncertain_values(&self, v: [f64; 6]) -> Self {
        Self {
            t_cc_msc: v[0],
            kp_pc_msc: v[1],
            ki_pc_msc: v[2],
            t_cc_gsc: v[3],
            kp_vc_gsc: v[4],
            ki_vc_gsc: v[5],
            ..self.clone()
        }
    }

    /// Same unit with each uncertain constant at its lower (`false`) or upper
    /// (`true`) bound.
    pub fn corner(&self, upper: [bool; 6]) -> Self {
        let mut v = [0.0; 6];
        for (i, (_, lo, hi)) in PARAM_RANGES.iter().enumerate() {
            v[i] = if upper[i] { *hi } else { *lo };
        }
        self.with_uncertain_values(v)
    }

    /// All 64 corners of the uncertainty box.
    pub fn all_corners(&self) -> Vec<Self> {
        (0..64u32)
            .map(|bits| {
                let mut up = [false; 6];
                for (i, u) in up.iter_mut().enumerate() {
                    *u = bits & (1 << i) != 0;
                }
                self.corner(up)
            })
            .collect()
    }

    pub fn check_ranges(&self) -> Result<(), AssetError> {
        for ((name, min, max), value) in PARAM_RANGES.iter().zip(self.uncertain_values()) {
            if !(value >= *min && value <= *max) {
                return Err(AssetError::OutOfRange { name, value, min: *min, max: *max });
            }
        }
        Ok(())
    }

    /// Output power limits (pu of rating).
    pub fn limits(&self) -> (f64, f64) {
        match self.kind {
            AssetKind::Es => (-1.0, 1.0),
            AssetKind::Wt | AssetKind::Pv => (0.0, self.available_power),
        }
    }
}

/// Command-to-PoC-power transfer of one unit: power PI closed on a unit plant,
/// machine-side current lag, DC-link PI closed on an integrator, grid-side
/// current lag.
pub fn build_asset_dynamics(p: &AssetParams) -> Result<TransferFunction, AssetError> {
    let power_loop = TransferFunction::new(vec![p.ki_pc_msc, p.kp_pc_msc], vec![p.ki_pc_msc, 1.0 + p.kp_pc_msc])?;
    if !power_loop.is_stable() {
        return Err(AssetError::UnstableComposition("power control"));
    }
    let msc = TransferFunction::first_order_lag(p.t_cc_msc);
    if !msc.is_stable() {
        return Err(AssetError::UnstableComposition("machine-side current"));
    }
    let dc_link = TransferFunction::new(vec![p.ki_vc_gsc, p.kp_vc_gsc], vec![p.ki_vc_gsc, p.kp_vc_gsc, 1.0])?;
    if !dc_link.is_stable() {
        return Err(AssetError::UnstableComposition("dc-link voltage"));
    }
    let gsc = TransferFunction::first_order_lag(p.t_cc_gsc);
    if !gsc.is_stable() {
        return Err(AssetError::UnstableComposition("grid-side current"));
    }
    Ok(power_loop.series(&msc).series(&dc_link).series(&gsc))
}

/// Frequency-control settings carried by a setpoint bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcSettings {
    /// FFR rise, hold and fall times (s).
    pub t_ffr: [f64; 3],
    /// Hz.
    pub db_ffr: f64,
    /// Hz.
    pub db_fcr: f64,
    /// pu frequency per pu power.
    pub r_fcr: f64,
    /// FFR, FCR, FRR amounts (pu).
    pub reserves_up: [f64; 3],
    pub reserves_down: [f64; 3],
}

impl Default for FcSettings {
    fn default() -> Self {
        Self {
            t_ffr: [1.0, 10.0, 5.0],
            db_ffr: 0.15,
            db_fcr: 0.1,
            r_fcr: 0.04,
            reserves_up: [0.0; 3],
            reserves_down: [0.0; 3],
        }
    }
}

impl FcSettings {
    /// Same settings with every reserve multiplied by `k`.
    pub fn scaled_reserves(&self, k: f64) -> Self {
        Self {
            reserves_up: self.reserves_up.map(|r| r * k),
            reserves_down: self.reserves_down.map(|r| r * k),
            ..self.clone()
        }
    }
}

/// Droop response with a subtractive deadband, clamped to the FCR reserves.
pub fn fcr_droop(delta_f: f64, s: &FcSettings, f_nom: f64) -> f64 {
    let e = delta_f.signum() * (delta_f.abs() - s.db_fcr).max(0.0);
    let raw = -(e / f_nom) / s.r_fcr;
    raw.clamp(-s.reserves_down[FCR], s.reserves_up[FCR])
}

/// Trapezoid of height `p`: ramp up over `t[0]`, hold `t[1]`, ramp down over `t[2]`.
pub fn ffr_trapezoid(elapsed: f64, t: [f64; 3], p: f64) -> f64 {
    let [rise, hold, fall] = t;
    if elapsed < 0.0 {
        0.0
    } else if elapsed < rise {
        p * elapsed / rise
    } else if elapsed <= rise + hold {
        p
    } else if elapsed < rise + hold + fall {
        p * (1.0 - (elapsed - rise - hold) / fall)
    } else {
        0.0
    }
}

/// Threshold latch driving one FFR activation per event.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FfrTrigger {
    /// Activation time and direction (+1 under-frequency, −1 over-frequency).
    latch: Option<(f64, f64)>,
}

impl FfrTrigger {
    pub fn is_latched(&self) -> bool {
        self.latch.is_some()
    }

    pub fn latched_at(&self) -> Option<f64> {
        self.latch.map(|(t, _)| t)
    }

    /// FFR power at `t_now` for measured frequency `f_meas`.
    pub fn output(&mut self, t_now: f64, f_meas: f64, s: &FcSettings, f_nom: f64) -> f64 {
        let df = f_meas - f_nom;
        let duration: f64 = s.t_ffr.iter().sum();
        if let Some((t0, _)) = self.latch {
            if t_now - t0 > duration && df.abs() <= s.db_ffr {
                self.latch = None;
            }
        }
        if self.latch.is_none() {
            if df < -s.db_ffr {
                self.latch = Some((t_now, 1.0));
            } else if df > s.db_ffr {
                self.latch = Some((t_now, -1.0));
            }
        }
        match self.latch {
            Some((t0, dir)) if dir > 0.0 => ffr_trapezoid(t_now - t0, s.t_ffr, s.reserves_up[FFR]),
            Some((t0, _)) => -ffr_trapezoid(t_now - t0, s.t_ffr, s.reserves_down[FFR]),
            None => 0.0,
        }
    }
}

/// Mutable state of one unit inside the simulation loop.
#[derive(Debug, Clone)]
pub struct AssetState {
    /// Discretized command-to-output dynamics.
    pub power_filter: DiscreteFilter,
    pub ffr: FfrTrigger,
    pub p_ref_local: f64,
    pub malfunction: bool,
    /// False when frequency control is located at the HPP controller.
    pub fc_enabled: bool,
    pub limits: (f64, f64),
}

/// Result of one asset step, all in pu of the asset rating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssetOutput {
    pub p_out: f64,
    pub p_fc: f64,
    pub command: f64,
    pub saturated: bool,
}

impl AssetState {
    /// Realize `p` at step `dt`, settled at reference `p_ref`.
    pub fn new(p: &AssetParams, dt: f64, p_ref: f64) -> Result<Self, AssetError> {
        let mut power_filter = build_asset_dynamics(p)?.discretize(dt)?;
        power_filter.init_steady(p_ref)?;
        Ok(Self {
            power_filter,
            ffr: FfrTrigger::default(),
            p_ref_local: p_ref,
            malfunction: false,
            fc_enabled: true,
            limits: p.limits(),
        })
    }
}

/// FFR contribution of one asset, latching on its own frequency measurement.
pub fn ffr_output(t_now: f64, f_meas: f64, s: &FcSettings, st: &mut AssetState, f_nom: f64) -> f64 {
    st.ffr.output(t_now, f_meas, s, f_nom)
}

/// One asset step: frequency control added to the reference, saturated, then
/// passed through the converter dynamics.
pub fn asset_step(
    st: &mut AssetState,
    p_ref: f64,
    f_meas: f64,
    s: &FcSettings,
    t: f64,
    f_nom: f64,
) -> Result<AssetOutput, AssetError> {
    if !p_ref.is_finite() {
        return Err(LtiError::NonFiniteInput(p_ref).into());
    }
    if !f_meas.is_finite() {
        return Err(LtiError::NonFiniteInput(f_meas).into());
    }
    st.p_ref_local = p_ref;
    let p_fc = if st.fc_enabled && !st.malfunction {
        fcr_droop(f_meas - f_nom, s, f_nom) + ffr_output(t, f_meas, s, st, f_nom)
    } else {
        0.0
    };
    let raw = p_ref + p_fc;
    let command = raw.clamp(st.limits.0, st.limits.1);
    let p_out = st.power_filter.step(command)?;
    Ok(AssetOutput { p_out, p_fc, command, saturated: command != raw })
}
