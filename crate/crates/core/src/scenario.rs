//! Declarative scenario description (JSON, schema version 1) and its
//! validation. Validation reports every violation with a path.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::QShape;
use crate::assets::{AssetKind, AssetParams, FcSettings, PARAM_RANGES};
use crate::design::{DesignOptions, HppDesignOptions};
use crate::grid::{GridEvent, GridParams};
use crate::hierarchy::{ControlMode, SetpointBundle, Strategy};
use crate::simkit::{DelayProfile, NoiseConfig};

pub const SCHEMA_VERSION: u32 = 1;
/// Declared communication-delay range (s).
pub const DELAY_RANGE: (f64, f64) = (0.0, 2.0);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("{} validation error(s):\n{}", .0.len(), .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<Violation>),
}

/// Converter constants overriding the nominal midpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConverterParams {
    pub t_cc_msc: f64,
    pub kp_pc_msc: f64,
    pub ki_pc_msc: f64,
    pub t_cc_gsc: f64,
    pub kp_vc_gsc: f64,
    pub ki_vc_gsc: f64,
}

impl ConverterParams {
    pub fn values(&self) -> [f64; 6] {
        [self.t_cc_msc, self.kp_pc_msc, self.ki_pc_msc, self.t_cc_gsc, self.kp_vc_gsc, self.ki_vc_gsc]
    }
}

/// A group of identical assets inside a plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetGroup {
    pub count: usize,
    /// MW per asset.
    pub rating: f64,
    #[serde(default = "one")]
    pub available_power: f64,
    /// Actual converter constants; nominal midpoints when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ConverterParams>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    pub name: String,
    pub kind: AssetKind,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    pub assets: Vec<AssetGroup>,
    pub bundle: SetpointBundle,
    /// Asset-level FFR/FCR; defaults to on in distributed mode, off in centralized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset_fc: Option<bool>,
}

fn default_strategy() -> Strategy {
    Strategy::Frob
}

impl PlantConfig {
    /// MW.
    pub fn rating(&self) -> f64 {
        self.assets.iter().map(|g| g.count as f64 * g.rating).sum()
    }

    pub fn asset_count(&self) -> usize {
        self.assets.iter().map(|g| g.count).sum()
    }

    /// Upper output limit of the plant (pu of its rating).
    pub fn upper_limit(&self) -> f64 {
        match self.kind {
            AssetKind::Es => 1.0,
            _ => {
                let r = self.rating();
                self.assets.iter().map(|g| g.count as f64 * g.rating * g.available_power).sum::<f64>() / r
            }
        }
    }

    pub fn lower_limit(&self) -> f64 {
        match self.kind {
            AssetKind::Es => -1.0,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HppcConfig {
    /// When false, plant references stay at their bundle values.
    pub enabled: bool,
}

impl Default for HppcConfig {
    fn default() -> Self {
        Self { enabled: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DelayConfig {
    /// Communication delay `T_cd`: plant-to-asset link in distributed mode,
    /// HPPC-to-plant link in centralized mode.
    pub t_cd: DelayProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corner {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct UncertaintyConfig {
    /// Every asset at the lower or upper end of all six ranges.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corner: Option<Corner>,
    /// Fraction of assets per plant whose FFR/FCR silently fails.
    pub malfunction_fraction: f64,
    pub seed: u64,
}

/// Explicit Q filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QSpec {
    pub n: usize,
    pub omega_c: f64,
    pub shape: QShape,
}

/// Explicit PI + observer filter for one control level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelController {
    pub kp: f64,
    pub ki: f64,
    pub q: QSpec,
}

/// Chosen controller gains; produced by `design` and consumed by `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub plant: LevelController,
    pub hppc: LevelController,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct DesignConfig {
    pub plant: DesignOptions,
    pub hppc: HppDesignOptions,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    /// Record every n-th simulation step.
    pub decimation: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { decimation: 10 }
    }
}

/// Full description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    /// s.
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_plant_period")]
    pub plant_period: f64,
    #[serde(default = "default_hppc_period")]
    pub hppc_period: f64,
    #[serde(default)]
    pub mode: ControlMode,
    #[serde(default)]
    pub grid: GridParams,
    #[serde(default)]
    pub events: Vec<GridEvent>,
    #[serde(default)]
    pub hppc: HppcConfig,
    pub plants: Vec<PlantConfig>,
    #[serde(default)]
    pub delays: DelayConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub uncertainty: UncertaintyConfig,
    #[serde(default)]
    pub design: DesignConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controllers: Option<ControllerConfig>,
    #[serde(default)]
    pub outputs: OutputConfig,
}

fn default_dt() -> f64 {
    0.001
}

fn default_plant_period() -> f64 {
    0.01
}

fn default_hppc_period() -> f64 {
    0.02
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// MW.
    pub fn hpp_rating(&self) -> f64 {
        self.plants.iter().map(PlantConfig::rating).sum()
    }

    /// HPP power reference implied by the plant bundles (HPP pu).
    pub fn hpp_p_ref(&self) -> f64 {
        let total = self.hpp_rating();
        self.plants.iter().map(|p| p.rating() / total * p.bundle.p_ref).sum()
    }

    /// Whether the assets of `plant` run their own FFR/FCR.
    pub fn asset_fc_enabled(&self, plant: &PlantConfig) -> bool {
        plant.asset_fc.unwrap_or(self.mode == ControlMode::Distributed)
    }

    /// Actual parameters of the assets in one group, after uncertainty.
    pub fn actual_params(&self, plant: &PlantConfig, group: &AssetGroup) -> AssetParams {
        let base = AssetParams { available_power: group.available_power, ..AssetParams::nominal(plant.kind, group.rating) };
        let base = match group.params {
            Some(p) => base.with_uncertain_values(p.values()),
            None => base,
        };
        match self.uncertainty.corner {
            Some(Corner::Lower) => base.corner([false; 6]),
            Some(Corner::Upper) => base.corner([true; 6]),
            None => base,
        }
    }
}

fn ratio_is_integer(period: f64, dt: f64) -> bool {
    let r = period / dt;
    r >= 1.0 - 1e-9 && (r - r.round()).abs() < 1e-6
}

/// Check every constraint and return the config with defaults normalized
/// (centralized mode forces plain PI at the plants).
pub fn validate(sc: &ScenarioConfig) -> Result<ScenarioConfig, ConfigError> {
    let mut v = Vec::new();
    let mut err = |path: String, message: String| v.push(Violation { path, message });

    if sc.schema_version != SCHEMA_VERSION {
        err("schema_version".into(), format!("expected {SCHEMA_VERSION}, got {}", sc.schema_version));
    }
    if !(sc.duration > 0.0 && sc.duration.is_finite()) {
        err("duration".into(), format!("must be positive, got {}", sc.duration));
    }
    if !(sc.dt > 0.0 && sc.dt <= 0.01) {
        err("dt".into(), format!("must lie in (0, 0.01] s, got {}", sc.dt));
    } else {
        if !ratio_is_integer(sc.plant_period, sc.dt) {
            err("plant_period".into(), format!("must be an integer multiple of dt, got {}", sc.plant_period));
        }
        if !ratio_is_integer(sc.hppc_period, sc.dt) {
            err("hppc_period".into(), format!("must be an integer multiple of dt, got {}", sc.hppc_period));
        }
    }

    let g = &sc.grid;
    if !(g.h > 0.0) {
        err("grid.h".into(), "must be positive".into());
    }
    if !(g.r_sys > 0.0) {
        err("grid.r_sys".into(), "must be positive".into());
    }
    if !(g.t_gov >= 0.0 && g.t_turb >= 0.0) {
        err("grid".into(), "governor and turbine lags must be nonnegative".into());
    }
    if !(g.hpp_share > 0.0 && g.hpp_share <= 1.0) {
        err("grid.hpp_share".into(), format!("must lie in (0, 1], got {}", g.hpp_share));
    }
    if !(g.f_nom > 0.0) {
        err("grid.f_nom".into(), "must be positive".into());
    }
    if !(g.d_load >= 0.0 && g.k_agc >= 0.0) {
        err("grid".into(), "d_load and k_agc must be nonnegative".into());
    }
    for (i, e) in sc.events.iter().enumerate() {
        if !(e.t >= 0.0) {
            err(format!("events[{i}].t"), "must be nonnegative".into());
        }
        if i > 0 && e.t < sc.events[i - 1].t {
            err(format!("events[{i}].t"), "events must be sorted by time".into());
        }
    }

    if sc.plants.is_empty() {
        err("plants".into(), "at least one plant is required".into());
    }
    for (i, p) in sc.plants.iter().enumerate() {
        let at = |f: &str| format!("plants[{i}].{f}");
        if p.assets.is_empty() {
            err(at("assets"), "at least one asset group is required".into());
        }
        for (j, a) in p.assets.iter().enumerate() {
            if a.count == 0 {
                err(at(&format!("assets[{j}].count")), "must be at least 1".into());
            }
            if !(a.rating > 0.0) {
                err(at(&format!("assets[{j}].rating")), "must be positive".into());
            }
            if !(a.available_power > 0.0 && a.available_power <= 1.0) {
                err(at(&format!("assets[{j}].available_power")), "must lie in (0, 1]".into());
            }
            if let Some(cp) = a.params {
                for ((name, lo, hi), val) in PARAM_RANGES.iter().zip(cp.values()) {
                    if !(val >= *lo && val <= *hi) {
                        err(at(&format!("assets[{j}].params.{name}")), format!("{val} outside [{lo}, {hi}]"));
                    }
                }
            }
        }
        let fc = &p.bundle.fc;
        if fc.reserves_up.iter().chain(&fc.reserves_down).any(|r| !(*r >= 0.0)) {
            err(at("bundle"), "reserves must be nonnegative".into());
        }
        if fc.t_ffr.iter().any(|t| !(*t >= 0.0)) {
            err(at("bundle.t_ffr"), "times must be nonnegative".into());
        }
        if !(fc.db_ffr >= 0.0 && fc.db_fcr >= 0.0) {
            err(at("bundle"), "deadbands must be nonnegative".into());
        }
        if !(fc.r_fcr > 0.0) {
            err(at("bundle.r_fcr"), "droop must be positive".into());
        }
        if !p.assets.is_empty() && p.assets.iter().all(|a| a.rating > 0.0) {
            let up_room = p.upper_limit() - p.bundle.p_ref;
            let down_room = p.bundle.p_ref - p.lower_limit();
            let up: f64 = fc.reserves_up.iter().sum();
            let down: f64 = fc.reserves_down.iter().sum();
            if up > up_room + 1e-9 {
                err(at("bundle.reserves_up"), format!("upward reserves {up:.4} exceed headroom {up_room:.4}"));
            }
            if down > down_room + 1e-9 {
                err(at("bundle.reserves_down"), format!("downward reserves {down:.4} exceed headroom {down_room:.4}"));
            }
            if p.bundle.p_ref > p.upper_limit() + 1e-9 || p.bundle.p_ref < p.lower_limit() - 1e-9 {
                err(at("bundle.p_ref"), "outside plant limits".into());
            }
        }
        if sc.mode == ControlMode::Centralized && p.asset_fc == Some(true) {
            err(at("asset_fc"), "centralized mode computes FFR/FCR at the HPP controller".into());
        }
    }
    if sc.mode == ControlMode::Centralized && !sc.hppc.enabled {
        err("hppc.enabled".into(), "centralized mode needs the HPP controller".into());
    }

    let (lo, hi) = sc.delays.t_cd.bounds();
    if !(lo >= DELAY_RANGE.0 && hi <= DELAY_RANGE.1) {
        err(
            "delays.t_cd".into(),
            format!("delay bounds [{lo}, {hi}] s outside the declared range [{}, {}] s", DELAY_RANGE.0, DELAY_RANGE.1),
        );
    }
    if let DelayProfile::Sinusoidal { t_min, t_max } = sc.delays.t_cd {
        if t_min > t_max {
            err("delays.t_cd".into(), "t_min exceeds t_max".into());
        }
    }
    if !(sc.noise.amplitude >= 0.0) {
        err("noise.amplitude".into(), "must be nonnegative".into());
    }
    if !(sc.noise.corner > 0.0) {
        err("noise.corner".into(), "must be positive".into());
    }
    let mf = sc.uncertainty.malfunction_fraction;
    if !(0.0..=1.0).contains(&mf) {
        err("uncertainty.malfunction_fraction".into(), format!("must lie in [0, 1], got {mf}"));
    }
    if sc.outputs.decimation == 0 {
        err("outputs.decimation".into(), "must be at least 1".into());
    }
    if let Some(c) = &sc.controllers {
        for (name, l) in [("plant", &c.plant), ("hppc", &c.hppc)] {
            if !(l.kp >= 0.0 && l.ki >= 0.0 && l.kp + l.ki > 0.0) {
                err(format!("controllers.{name}"), "gains must be nonnegative and not both zero".into());
            }
            if !(1..=6).contains(&l.q.n) || !(l.q.omega_c > 0.0) {
                err(format!("controllers.{name}.q"), "degree must lie in 1..=6 with positive cut-off".into());
            }
        }
    }

    if !v.is_empty() {
        return Err(ConfigError::Validation(v));
    }
    let mut out = sc.clone();
    if out.mode == ControlMode::Centralized {
        for p in &mut out.plants {
            p.strategy = Strategy::NoCoordination;
            p.asset_fc = Some(false);
        }
    } else {
        for p in &mut out.plants {
            p.asset_fc = Some(p.asset_fc.unwrap_or(true));
        }
    }
    Ok(out)
}

/// Settings with every reserve set; used by preset builders and tests.
pub fn fc_settings(reserves_up: [f64; 3], reserves_down: [f64; 3]) -> FcSettings {
    FcSettings { reserves_up, reserves_down, ..FcSettings::default() }
}
