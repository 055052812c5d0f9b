//! The scenario loop: builds assets, plant controllers, the HPP controller and
//! the grid from a validated [`ScenarioConfig`] and advances them at a fixed step.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::make_q;
use crate::assets::{asset_step, build_asset_dynamics, AssetError, AssetKind, AssetParams, AssetState, FcSettings};
use crate::design::{design_hppc, design_plant, DesignError};
use crate::grid::{apply_events, grid_step, EventSchedule, GridError, GridEventKind, GridState};
use crate::hierarchy::{
    build_hpp_nominal, dispatch, frr_weights, ControlMode, DispatchTarget, FrobInstance, HppController, NominalModel,
    PlantController, PlantLink, Strategy,
};
use crate::lti::{DiscreteFilter, LtiError};
use crate::scenario::{validate, ConfigError, ControllerConfig, LevelController, QSpec, ScenarioConfig};
use crate::simkit::{
    tail_peak_to_peak, DelayLine, DelayProfile, MetricWindow, NoiseConfig, NoiseSource, SimError, TimeSeriesRecord,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("controller design failed: {0}")]
    Design(#[from] DesignError),
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("numerical divergence at t = {t} s")]
    NumericalDivergence { t: f64 },
}

/// Gains from the config, or designed from the nominal asset when absent.
pub fn resolve_controllers(sc: &ScenarioConfig) -> Result<ControllerConfig, EngineError> {
    if let Some(c) = sc.controllers {
        return Ok(c);
    }
    let nominal = AssetParams::nominal(AssetKind::Wt, 1.0);
    let plant = design_plant(&nominal, &sc.design.plant)?;
    let hppc = design_hppc(&plant, &sc.design.hppc, &sc.design.plant)?;
    let level = |kp: f64, ki: f64, q: &crate::analysis::QFilter| LevelController {
        kp,
        ki,
        q: QSpec { n: q.n, omega_c: q.omega_c, shape: q.shape },
    };
    Ok(ControllerConfig {
        plant: level(plant.pi.kp, plant.pi.ki, plant.q()),
        hppc: level(hppc.pi.kp, hppc.pi.ki, &hppc.selection.filter),
    })
}

/// Metric window of a scenario: from the first load step to the next later
/// event (restoration) or the end of the run.
pub fn metric_window(sc: &ScenarioConfig) -> Option<MetricWindow> {
    let ev = sc.events.iter().find(|e| e.kind == GridEventKind::LoadStep)?;
    let end_t = sc.events.iter().map(|e| e.t).find(|&t| t > ev.t).unwrap_or(sc.duration).min(sc.duration);
    Some(MetricWindow { event_t: ev.t, end_t, f_nom: sc.grid.f_nom })
}

/// Peak-to-peak limit on the HPP output over the last 10 % of a run for the
/// run to count as stable (pu).
pub const STABLE_TAIL_PP: f64 = 0.01;

/// Whether a finished run settled: HPP output spread over the final 10 %
/// below [`STABLE_TAIL_PP`].
pub fn is_stable(rec: &TimeSeriesRecord) -> bool {
    tail_peak_to_peak(rec, "p_hpp_pu", 0.1).is_ok_and(|pp| pp < STABLE_TAIL_PP)
}

/// Replace every seed in the scenario (noise and uncertainty).
pub fn override_seed(sc: &mut ScenarioConfig, seed: u64) {
    sc.noise.seed = seed;
    sc.uncertainty.seed = seed;
}

/// Settings whose FCR and FFR outputs are `k` times those of `s`.
fn scaled_output(s: &FcSettings, k: f64) -> FcSettings {
    FcSettings { r_fcr: s.r_fcr / k, ..s.scaled_reserves(k) }
}

struct AssetRt {
    state: AssetState,
    /// Same dynamics driven by the frequency-control part of the command only.
    fc_filter: DiscreteFilter,
    /// Share of the plant rating.
    share: f64,
    link: DelayLine,
}

struct PlantRt {
    assets: Vec<AssetRt>,
    ctrl: PlantController,
    fc: FcSettings,
    /// HPP controller to plant reference link.
    ref_link: DelayLine,
    noise: NoiseSource,
    setpoints: Vec<f64>,
    p_ref_bundle: f64,
    share: f64,
    power: f64,
    fc_actual: f64,
    saturated: bool,
}

struct Sim {
    plants: Vec<PlantRt>,
    hppc: Option<(HppController, NoiseSource)>,
    plant_refs: Vec<f64>,
    grid: GridState,
    schedule: EventSchedule,
    p_hpp0: f64,
}

fn steps_per(period: f64, dt: f64) -> usize {
    ((period / dt).round() as usize).max(1)
}

fn build(sc: &ScenarioConfig, ctrl: &ControllerConfig) -> Result<Sim, EngineError> {
    let dt = sc.dt;
    let nominal = AssetParams::nominal(AssetKind::Wt, 1.0);
    let g_n = build_asset_dynamics(&nominal)?;
    let q_plant = make_q(ctrl.plant.q.shape, ctrl.plant.q.n, ctrl.plant.q.omega_c).map_err(DesignError::from)?;
    let hpp_rating = sc.hpp_rating();
    let (plant_delay, ref_delay) = match sc.mode {
        ControlMode::Distributed => (sc.delays.t_cd.clone(), DelayProfile::default()),
        ControlMode::Centralized => (DelayProfile::default(), sc.delays.t_cd.clone()),
    };

    let mut plants = Vec::with_capacity(sc.plants.len());
    for (pi, pc) in sc.plants.iter().enumerate() {
        let rating = pc.rating();
        let fc_on = sc.asset_fc_enabled(pc);
        let mut targets = Vec::new();
        let mut params = Vec::new();
        for g in &pc.assets {
            let p = sc.actual_params(pc, g);
            for _ in 0..g.count {
                targets.push(DispatchTarget { rating: g.rating, capacity: g.rating * p.limits().1.max(1e-9), limits: p.limits() });
                params.push(p.clone());
            }
        }
        let (setpoints, _) = dispatch(pc.bundle.p_ref * rating, &targets);
        let n_assets = params.len();
        let broken: Vec<usize> = {
            let k = (sc.uncertainty.malfunction_fraction * n_assets as f64).round() as usize;
            let mut rng = ChaCha8Rng::seed_from_u64(sc.uncertainty.seed.wrapping_add(pi as u64));
            sample(&mut rng, n_assets, k.min(n_assets)).into_vec()
        };
        let mut assets = Vec::with_capacity(n_assets);
        for (i, p) in params.iter().enumerate() {
            let mut state = AssetState::new(p, dt, setpoints[i])?;
            state.fc_enabled = fc_on;
            state.malfunction = broken.contains(&i);
            let mut fc_filter = build_asset_dynamics(p)?.discretize(dt)?;
            fc_filter.init_steady(0.0)?;
            let mut link = DelayLine::new(plant_delay.clone());
            link.push(0.0, setpoints[i]);
            assets.push(AssetRt { state, fc_filter, share: p.rating / rating, link });
        }

        let p_ref = pc.bundle.p_ref;
        let frob = match pc.strategy {
            Strategy::Frob => Some(FrobInstance::new(NominalModel::siso(&g_n, sc.plant_period)?, &q_plant.tf, sc.plant_period, &[p_ref])?),
            _ => None,
        };
        let controller = PlantController {
            kp: ctrl.plant.kp,
            ki: ctrl.plant.ki,
            xi: p_ref,
            strategy: pc.strategy,
            frob,
            ff_model: match pc.strategy {
                Strategy::Feedforward => {
                    let mut m = g_n.discretize(sc.plant_period)?;
                    m.init_steady(0.0)?;
                    Some(m)
                }
                _ => None,
            },
            ff_trigger: Default::default(),
            ff_settings: scaled_output(&pc.bundle.fc, 1.0 / n_assets as f64),
            ff_count: n_assets,
            targets,
            rating,
            period: sc.plant_period,
            last_command: p_ref,
            last_estimate: 0.0,
            saturated: false,
        };
        let mut ref_link = DelayLine::new(ref_delay.clone());
        ref_link.push(0.0, p_ref);
        let noise = NoiseSource::new(&NoiseConfig { seed: sc.noise.seed.wrapping_add(1 + pi as u64), ..sc.noise.clone() }, dt);
        plants.push(PlantRt {
            assets,
            ctrl: controller,
            fc: pc.bundle.fc.clone(),
            ref_link,
            noise,
            setpoints,
            p_ref_bundle: p_ref,
            share: rating / hpp_rating,
            power: p_ref,
            fc_actual: 0.0,
            saturated: false,
        });
    }

    let shares: Vec<f64> = plants.iter().map(|p| p.share).collect();
    let fcs: Vec<FcSettings> = plants.iter().map(|p| p.fc.clone()).collect();
    let weights = frr_weights(&shares, &fcs);
    let hppc = if sc.hppc.enabled {
        let plant_design = design_loops(&g_n, &ctrl.plant, &q_plant.tf)?;
        let q_h = make_q(ctrl.hppc.q.shape, ctrl.hppc.q.n, ctrl.hppc.q.omega_c).map_err(DesignError::from)?;
        let loops = vec![plant_design; plants.len()];
        let model = build_hpp_nominal(&loops, &shares, sc.hppc_period)?;
        let u0: Vec<f64> = plants.iter().map(|p| p.p_ref_bundle).collect();
        let frob = FrobInstance::new(model, &q_h.tf, sc.hppc_period, &u0)?;
        let links = plants
            .iter()
            .zip(&weights)
            .map(|(p, &w)| PlantLink { share: p.share, p_ref: p.p_ref_bundle, weight: w, fc: p.fc.clone() })
            .collect();
        let hc = HppController::new(ctrl.hppc.kp, ctrl.hppc.ki, Some(frob), sc.mode, links, sc.hppc_period);
        Some((hc, NoiseSource::new(&sc.noise, dt)))
    } else {
        None
    };
    let plant_refs = plants.iter().map(|p| p.p_ref_bundle).collect();
    let p_hpp0 = plants.iter().map(|p| p.share * p.p_ref_bundle).sum();
    Ok(Sim { plants, hppc, plant_refs, grid: GridState::default(), schedule: EventSchedule::new(sc.events.clone())?, p_hpp0 })
}

/// Plant loops with the observer for the HPP-level nominal model.
fn design_loops(
    g_n: &crate::lti::TransferFunction,
    c: &LevelController,
    q: &crate::lti::TransferFunction,
) -> Result<crate::analysis::FrobLoopSet, EngineError> {
    let c_p = crate::lti::TransferFunction::pi(c.kp, c.ki);
    let one = crate::lti::TransferFunction::one();
    Ok(crate::analysis::frob_closed_loops(&c_p, g_n, g_n, q, g_n, &one).map_err(DesignError::from)?)
}

/// Recorded channel names for a scenario, in column order.
pub fn column_names(sc: &ScenarioConfig) -> Vec<String> {
    let mut names: Vec<String> = [
        "t_s",
        "f_hz",
        "p_hpp_pu",
        "p_hpp_ref_pu",
        "p_fc_poc_pu",
        "p_fc_actual_pu",
        "p_fc_estimate_pu",
        "p_fc_estimate_hppc_pu",
        "p_fc_hppc_pu",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for p in &sc.plants {
        for suffix in ["pu", "ref_pu", "fc_pu", "est_pu", "cmd_pu"] {
            names.push(format!("p_{}_{}", p.name, suffix));
        }
    }
    names
}

fn lti_at(e: LtiError, t: f64) -> EngineError {
    match e {
        LtiError::NonFiniteInput(_) => EngineError::NumericalDivergence { t },
        other => other.into(),
    }
}

fn asset_at(e: AssetError, t: f64) -> EngineError {
    match e {
        AssetError::Lti(l) => lti_at(l, t),
        other => other.into(),
    }
}

/// Validate, build and run a scenario; the record holds every
/// `outputs.decimation`-th step.
pub fn run(sc: &ScenarioConfig) -> Result<TimeSeriesRecord, EngineError> {
    let sc = validate(sc)?;
    let ctrl = resolve_controllers(&sc)?;
    run_with(&sc, &ctrl)
}

/// Run an already validated scenario with fixed controller gains.
pub fn run_with(sc: &ScenarioConfig, ctrl: &ControllerConfig) -> Result<TimeSeriesRecord, EngineError> {
    let mut sim = build(sc, ctrl)?;
    let dt = sc.dt;
    let gp = &sc.grid;
    let f_nom = gp.f_nom;
    let n_steps = (sc.duration / dt).round() as usize;
    let plant_every = steps_per(sc.plant_period, dt);
    let hppc_every = steps_per(sc.hppc_period, dt);
    let mut rec = TimeSeriesRecord::new(column_names(sc));
    let mut row = vec![0.0; rec.names.len()];
    let mut f = f_nom;

    for k in 0..=n_steps {
        let t = k as f64 * dt;
        apply_events(&mut sim.schedule, t, &mut sim.grid);

        // Assets.
        let mut fc_actual = 0.0;
        for p in &mut sim.plants {
            let (mut power, mut fc_plant, mut sat) = (0.0, 0.0, false);
            for a in &mut p.assets {
                let p_ref = a.link.read(t)?;
                let out = asset_step(&mut a.state, p_ref, f, &p.fc, t, f_nom).map_err(|e| asset_at(e, t))?;
                let fc_out = a.fc_filter.step(out.command - p_ref).map_err(|e| lti_at(e, t))?;
                power += out.p_out * a.share;
                fc_plant += fc_out * a.share;
                sat |= out.saturated;
            }
            p.power = power;
            p.fc_actual = fc_plant;
            p.saturated = sat;
            fc_actual += fc_plant * p.share;
        }
        let p_hpp: f64 = sim.plants.iter().map(|p| p.share * p.power).sum();

        // Plant controllers.
        let run_plants = k % plant_every == 0;
        for p in &mut sim.plants {
            let noise = p.noise.sample();
            let y_r = p.ref_link.read(t)?;
            if run_plants {
                let out = p.ctrl.step(y_r, p.power + noise, f, t, f_nom, p.saturated).map_err(|e| lti_at(e, t))?;
                p.setpoints = out.setpoints;
            }
            for (a, &sp) in p.assets.iter_mut().zip(&p.setpoints) {
                a.link.push(t, sp);
            }
        }

        // HPP controller.
        let mut hpp_ref = sim.p_hpp0;
        let (mut est_hppc, mut fc_hppc) = (0.0, 0.0);
        if let Some((hc, noise)) = sim.hppc.as_mut() {
            let n = noise.sample();
            hc.p_frr_set = sim.grid.p_frr_set;
            if k % hppc_every == 0 {
                sim.plant_refs = hc.step(sim.p_hpp0, p_hpp + n, f, t, f_nom).map_err(|e| lti_at(e, t))?;
            }
            hpp_ref = sim.p_hpp0 + hc.p_frr_set;
            est_hppc = hc.last_estimate;
            fc_hppc = hc.last_fc;
        }
        for (p, &r) in sim.plants.iter_mut().zip(&sim.plant_refs) {
            p.ref_link.push(t, r);
        }

        if k % sc.outputs.decimation == 0 {
            let est: f64 = sim.plants.iter().map(|p| p.share * p.ctrl.last_estimate).sum();
            row[0] = t;
            row[1] = f;
            row[2] = p_hpp;
            row[3] = hpp_ref;
            row[4] = p_hpp - hpp_ref;
            row[5] = fc_actual;
            row[6] = est;
            row[7] = est_hppc;
            row[8] = fc_hppc;
            let mut c = 9;
            for (p, &r) in sim.plants.iter().zip(&sim.plant_refs) {
                row[c..c + 5].copy_from_slice(&[p.power, r, p.fc_actual, p.ctrl.last_estimate, p.ctrl.last_command]);
                c += 5;
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(EngineError::NumericalDivergence { t });
            }
            rec.push_row(&row);
        }

        f = grid_step(&mut sim.grid, gp, p_hpp - sim.p_hpp0, dt).map_err(|_| EngineError::NumericalDivergence { t })?;
        if !f.is_finite() || (f - f_nom).abs() > f_nom {
            return Err(EngineError::NumericalDivergence { t });
        }
    }
    Ok(rec)
}
