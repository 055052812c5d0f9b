//! Single-bus frequency dynamics: swing equation, aggregate conventional
//! generation with a governor, load steps and secondary control (AGC).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("event schedule not sorted by time at index {0}")]
    UnsortedSchedule(usize),
    #[error("non-finite grid input {0}")]
    NonFiniteInput(f64),
}

/// System parameters on the system power base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridParams {
    /// Inertia constant (s).
    pub h: f64,
    /// Load damping (pu power per pu frequency).
    pub d_load: f64,
    /// Governor droop (pu frequency per pu power).
    pub r_sys: f64,
    pub t_gov: f64,
    pub t_turb: f64,
    pub f_nom: f64,
    /// HPP rating as a fraction of the system base.
    pub hpp_share: f64,
    /// AGC integral gain (pu power per Hz per s).
    pub k_agc: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self { h: 4.0, d_load: 1.0, r_sys: 0.05, t_gov: 0.2, t_turb: 0.5, f_nom: 50.0, hpp_share: 0.2, k_agc: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridEventKind {
    /// Add `magnitude` (system pu) to the load.
    LoadStep,
    /// Set the HPP FRR setpoint to `magnitude` (HPP pu).
    FrrDispatch,
    /// Enable AGC.
    AgcOn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridEvent {
    pub t: f64,
    pub kind: GridEventKind,
    #[serde(default)]
    pub magnitude: f64,
}

/// Integration state. Powers are deviations from the initial operating point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridState {
    /// Frequency deviation (pu).
    pub df: f64,
    /// Governor output.
    pub gov: f64,
    /// Turbine (conventional generation) output.
    pub p_conv: f64,
    pub p_load: f64,
    pub agc_on: bool,
    /// AGC contribution to the governor reference.
    pub agc: f64,
    /// HPP FRR setpoint requested by the operator (HPP pu).
    pub p_frr_set: f64,
}

impl GridState {
    pub fn frequency(&self, p: &GridParams) -> f64 {
        p.f_nom * (1.0 + self.df)
    }

    /// `2H dΔf/dt` for a given HPP injection (system pu).
    pub fn accel_power(&self, p: &GridParams, p_hpp_sys: f64) -> f64 {
        self.p_conv + p_hpp_sys - self.p_load - p.d_load * self.df
    }
}

/// One explicit-Euler step; `p_hpp_dev` is the HPP output change in HPP pu.
/// Returns the frequency (Hz) at the end of the step.
pub fn grid_step(st: &mut GridState, p: &GridParams, p_hpp_dev: f64, dt: f64) -> Result<f64, GridError> {
    if !p_hpp_dev.is_finite() {
        return Err(GridError::NonFiniteInput(p_hpp_dev));
    }
    let p_hpp_sys = p_hpp_dev * p.hpp_share;
    let d_df = st.accel_power(p, p_hpp_sys) / (2.0 * p.h);
    let gov_ref = -st.df / p.r_sys + st.agc;
    let d_agc = if st.agc_on { -p.k_agc * st.df * p.f_nom } else { 0.0 };
    // Zero lags collapse to algebraic pass-through.
    let (gov_next, conv_next) = {
        let gov = if p.t_gov > 0.0 { st.gov + dt * (gov_ref - st.gov) / p.t_gov } else { gov_ref };
        let conv = if p.t_turb > 0.0 { st.p_conv + dt * (st.gov - st.p_conv) / p.t_turb } else { gov };
        (gov, conv)
    };
    st.df += dt * d_df;
    st.gov = gov_next;
    st.p_conv = conv_next;
    st.agc += dt * d_agc;
    Ok(st.frequency(p))
}

/// Time-ordered events, each fired exactly once.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventSchedule {
    events: Vec<GridEvent>,
    next: usize,
}

impl EventSchedule {
    pub fn new(events: Vec<GridEvent>) -> Result<Self, GridError> {
        if let Some(i) = events.windows(2).position(|w| w[1].t < w[0].t) {
            return Err(GridError::UnsortedSchedule(i + 1));
        }
        Ok(Self { events, next: 0 })
    }

    pub fn events(&self) -> &[GridEvent] {
        &self.events
    }
}

/// Fire every pending event with `event.t <= t`.
pub fn apply_events(schedule: &mut EventSchedule, t: f64, st: &mut GridState) {
    while let Some(ev) = schedule.events.get(schedule.next) {
        if ev.t > t {
            break;
        }
        match ev.kind {
            GridEventKind::LoadStep => st.p_load += ev.magnitude,
            GridEventKind::FrrDispatch => st.p_frr_set = ev.magnitude,
            GridEventKind::AgcOn => st.agc_on = true,
        }
        schedule.next += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(p: &GridParams, events: Vec<GridEvent>, t_end: f64) -> (GridState, Vec<f64>) {
        let dt = 0.001;
        let mut st = GridState::default();
        let mut sched = EventSchedule::new(events).unwrap();
        let mut f = Vec::new();
        for k in 0..(t_end / dt) as usize {
            apply_events(&mut sched, k as f64 * dt, &mut st);
            f.push(grid_step(&mut st, p, 0.0, dt).unwrap());
        }
        (st, f)
    }

    #[test]
    fn balanced_system_stays_nominal() {
        let (_, f) = run(&GridParams::default(), vec![], 10.0);
        assert!(f.iter().all(|&x| x == 50.0));
    }

    #[test]
    fn droop_steady_state() {
        let p = GridParams::default();
        let ev = GridEvent { t: 1.0, kind: GridEventKind::LoadStep, magnitude: 0.08 };
        let (st, f) = run(&p, vec![ev], 60.0);
        let expected = -0.08 / (1.0 / p.r_sys + p.d_load);
        assert!((st.df - expected).abs() < 1e-6);
        let nadir = f.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(nadir < 50.0 * (1.0 + expected));
    }

    #[test]
    fn agc_restores_frequency() {
        let p = GridParams::default();
        let ev = vec![
            GridEvent { t: 1.0, kind: GridEventKind::LoadStep, magnitude: 0.08 },
            GridEvent { t: 30.0, kind: GridEventKind::AgcOn, magnitude: 0.0 },
        ];
        let (st, _) = run(&p, ev, 120.0);
        assert!((st.frequency(&p) - 50.0).abs() < 0.01);
    }

    #[test]
    fn events_fire_once_in_order() {
        let mut st = GridState::default();
        let mut sched =
            EventSchedule::new(vec![GridEvent { t: 150.0, kind: GridEventKind::LoadStep, magnitude: 0.08 }]).unwrap();
        apply_events(&mut sched, 149.999, &mut st);
        assert_eq!(st.p_load, 0.0);
        apply_events(&mut sched, 150.0, &mut st);
        apply_events(&mut sched, 150.001, &mut st);
        assert_eq!(st.p_load, 0.08);
        let mut empty = EventSchedule::default();
        let before = st.clone();
        apply_events(&mut empty, 1e9, &mut st);
        assert_eq!(st, before);
        let bad = vec![
            GridEvent { t: 2.0, kind: GridEventKind::AgcOn, magnitude: 0.0 },
            GridEvent { t: 1.0, kind: GridEventKind::AgcOn, magnitude: 0.0 },
        ];
        assert_eq!(EventSchedule::new(bad), Err(GridError::UnsortedSchedule(1)));
    }

    #[test]
    fn energy_bookkeeping() {
        let p = GridParams::default();
        let dt = 0.001;
        let mut st = GridState { p_load: 0.05, ..GridState::default() };
        for _ in 0..5000 {
            let before = st.clone();
            grid_step(&mut st, &p, 0.1, dt).unwrap();
            let lhs = 2.0 * p.h * (st.df - before.df) / dt;
            assert!((lhs - before.accel_power(&p, 0.1 * p.hpp_share)).abs() < 1e-12);
        }
    }
}
