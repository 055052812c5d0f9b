//! Ready-made scenarios for the case studies: the two benchmarks, the
//! single-plant strategy study and the delay study.

use crate::assets::AssetKind;
use crate::grid::{GridEvent, GridEventKind, GridParams};
use crate::hierarchy::{ControlMode, SetpointBundle, Strategy};
use crate::scenario::{
    fc_settings, AssetGroup, DelayConfig, DesignConfig, HppcConfig, OutputConfig, PlantConfig, ScenarioConfig,
    UncertaintyConfig, SCHEMA_VERSION,
};
use crate::simkit::{DelayProfile, NoiseConfig};

/// Time of the load step in every preset (s).
pub const EVENT_T: f64 = 150.0;
/// Time of FRR dispatch and AGC activation (s).
pub const RESTORE_T: f64 = 400.0;

fn plant(name: &str, kind: AssetKind, count: usize, rating: f64, p_ref: f64, up: [f64; 3], down: [f64; 3]) -> PlantConfig {
    PlantConfig {
        name: name.into(),
        kind,
        strategy: Strategy::Frob,
        assets: vec![AssetGroup { count, rating, available_power: 1.0, params: None }],
        bundle: SetpointBundle { p_ref, fc: fc_settings(up, down) },
        asset_fc: None,
    }
}

fn base(name: &str, plants: Vec<PlantConfig>, events: Vec<GridEvent>, duration: f64) -> ScenarioConfig {
    ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        name: name.into(),
        duration,
        dt: 0.001,
        plant_period: 0.01,
        hppc_period: 0.02,
        mode: ControlMode::Distributed,
        grid: GridParams::default(),
        events,
        hppc: HppcConfig::default(),
        plants,
        delays: DelayConfig::default(),
        noise: NoiseConfig::default(),
        uncertainty: UncertaintyConfig::default(),
        design: DesignConfig::default(),
        controllers: None,
        outputs: OutputConfig::default(),
    }
}

fn events(load_step: f64, frr: Option<f64>) -> Vec<GridEvent> {
    let mut ev = vec![GridEvent { t: EVENT_T, kind: GridEventKind::LoadStep, magnitude: load_step }];
    if let Some(m) = frr {
        ev.push(GridEvent { t: RESTORE_T, kind: GridEventKind::FrrDispatch, magnitude: m });
        ev.push(GridEvent { t: RESTORE_T, kind: GridEventKind::AgcOn, magnitude: 0.0 });
    }
    ev
}

/// HPP reference 0.9 pu; only the storage plant holds reserves (0.05 HPP pu).
pub fn benchmark_a() -> ScenarioConfig {
    let plants = vec![
        plant("wpp", AssetKind::Wt, 10, 7.0, 0.97, [0.0; 3], [0.0; 3]),
        plant("spp", AssetKind::Pv, 10, 2.0, 0.955, [0.0; 3], [0.0; 3]),
        plant("ess", AssetKind::Es, 4, 2.5, 0.3, [0.2, 0.2, 0.1], [0.2, 0.2, 0.1]),
    ];
    base("benchmark_a", plants, events(0.1, Some(0.01)), 600.0)
}

/// HPP reference 0.84 pu with 0.10 pu of reserves: storage holds FFR and FCR,
/// the wind plant FCR and FRR.
pub fn benchmark_b() -> ScenarioConfig {
    let plants = vec![
        plant("wpp", AssetKind::Wt, 10, 7.0, 0.9, [0.0, 0.03, 0.04], [0.0, 0.03, 0.04]),
        plant("spp", AssetKind::Pv, 10, 2.0, 0.9, [0.0; 3], [0.0; 3]),
        plant("ess", AssetKind::Es, 4, 2.5, 0.3, [0.3, 0.21, 0.0], [0.3, 0.21, 0.0]),
    ];
    base("benchmark_b", plants, events(0.1, Some(0.028)), 600.0)
}

/// One storage plant on the grid without an HPP controller; the plant output
/// change equals its frequency response. Used for the strategy comparisons.
pub fn strategy_study(strategy: Strategy) -> ScenarioConfig {
    let mut p = plant("ess", AssetKind::Es, 10, 2.0, 0.2, [0.3, 0.3, 0.0], [0.3, 0.3, 0.0]);
    p.strategy = strategy;
    let mut sc = base("strategy_study", vec![p], events(0.1, None), 300.0);
    sc.hppc.enabled = false;
    sc.grid.hpp_share = 0.05;
    sc
}

/// Benchmark A with FCR only and no restoration, for rise-time comparisons
/// across communication delays and control modes.
pub fn delay_study(mode: ControlMode, t_cd: f64) -> ScenarioConfig {
    let mut sc = benchmark_a();
    sc.name = "delay_study".into();
    sc.plants[2].bundle.fc = fc_settings([0.0, 0.4, 0.1], [0.0, 0.4, 0.1]);
    sc.events = events(0.1, None);
    sc.duration = 400.0;
    sc.mode = mode;
    // Measurement noise would mask the small HPP-level FCR change.
    sc.noise.amplitude = 0.0;
    sc.delays.t_cd = DelayProfile::Constant { t: t_cd };
    sc
}
