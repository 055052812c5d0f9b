//! Plant controllers and the HPP controller, the frequency response observer
//! that keeps them from counteracting asset-level frequency control, and the
//! setpoint bundles passed down the hierarchy.

use serde::{Deserialize, Serialize};

use crate::analysis::FrobLoopSet;
use crate::assets::{fcr_droop, FcSettings, FfrTrigger, FFR, FRR};
use crate::lti::{DiscreteFilter, LtiError, TransferFunction};

/// Reference message sent to a plant: power reference plus frequency-control settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetpointBundle {
    /// pu of the receiver rating.
    pub p_ref: f64,
    #[serde(flatten)]
    pub fc: FcSettings,
}

impl SetpointBundle {
    /// Power reference plus upward reserves never exceed the receiver rating.
    pub fn headroom_ok(&self) -> bool {
        self.p_ref + self.fc.reserves_up.iter().sum::<f64>() <= 1.0 + 1e-12
    }
}

/// How a plant controller treats asset-level frequency response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Strategy #1: setpoints pass straight through; no feedback at all.
    OpenLoop,
    /// Strategy #2: feedback corrected by a settings-based estimate.
    Feedforward,
    /// Strategy #3: feedback corrected by the observer estimate.
    Frob,
    /// Plain PI on the PoC measurement (counteracts asset response).
    NoCoordination,
}

impl Strategy {
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::OpenLoop => "open_loop",
            Strategy::Feedforward => "feedforward",
            Strategy::Frob => "frob",
            Strategy::NoCoordination => "no_coordination",
        }
    }
}

/// Where FFR/FCR are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    /// At the asset controllers.
    #[default]
    Distributed,
    /// At the HPP controller, sent down as setpoints.
    Centralized,
}

impl ControlMode {
    pub fn label(&self) -> &'static str {
        match self {
            ControlMode::Distributed => "distributed",
            ControlMode::Centralized => "centralized",
        }
    }
}

/// Sum of weighted discretized branches `Σ w_i G_i(u_i)`.
#[derive(Debug, Clone)]
pub struct NominalModel {
    branches: Vec<(f64, DiscreteFilter)>,
}

impl NominalModel {
    pub fn siso(g: &TransferFunction, dt: f64) -> Result<Self, LtiError> {
        Ok(Self { branches: vec![(1.0, g.discretize(dt)?)] })
    }

    pub fn inputs(&self) -> usize {
        self.branches.len()
    }

    pub fn init_steady(&mut self, u: &[f64]) -> Result<(), LtiError> {
        for ((_, f), &ui) in self.branches.iter_mut().zip(u) {
            f.init_steady(ui)?;
        }
        Ok(())
    }

    pub fn step(&mut self, u: &[f64]) -> Result<f64, LtiError> {
        let mut y = 0.0;
        for ((w, f), &ui) in self.branches.iter_mut().zip(u) {
            y += *w * f.step(ui)?;
        }
        Ok(y)
    }
}

/// HPP nominal model: each plant's reference-to-output loop weighted by its
/// share of the HPP rating.
pub fn build_hpp_nominal(plant_loops: &[FrobLoopSet], shares: &[f64], dt: f64) -> Result<NominalModel, LtiError> {
    let branches = plant_loops
        .iter()
        .zip(shares)
        .map(|(l, &w)| Ok((w, l.g_yry.discretize(dt)?)))
        .collect::<Result<Vec<_>, LtiError>>()?;
    Ok(NominalModel { branches })
}

/// Observer state: `ŷ = Q (y_m − G_n u)`.
#[derive(Debug, Clone)]
pub struct FrobInstance {
    pub g_n: NominalModel,
    pub q_filter: DiscreteFilter,
    pub last_estimate: f64,
}

impl FrobInstance {
    /// Observer settled at commands `u0` with a zero estimate.
    pub fn new(mut g_n: NominalModel, q: &TransferFunction, dt: f64, u0: &[f64]) -> Result<Self, LtiError> {
        g_n.init_steady(u0)?;
        let mut q_filter = q.discretize(dt)?;
        q_filter.init_steady(0.0)?;
        Ok(Self { g_n, q_filter, last_estimate: 0.0 })
    }

    pub fn step(&mut self, u: &[f64], y_m: f64) -> Result<f64, LtiError> {
        if !y_m.is_finite() {
            return Err(LtiError::NonFiniteInput(y_m));
        }
        let y_n = self.g_n.step(u)?;
        self.last_estimate = self.q_filter.step(y_m - y_n)?;
        Ok(self.last_estimate)
    }
}

/// Single-input observer step.
pub fn frob_step(fr: &mut FrobInstance, u: f64, y_m: f64) -> Result<f64, LtiError> {
    fr.step(&[u], y_m)
}

/// Settings-based estimate of the asset response seen at the plant: `count`
/// identical assets each following the droop law and the nominal FFR
/// trapezoid, triggered by the plant PoC frequency.
pub fn strategy2_estimate(
    f_poc: f64,
    per_asset: &FcSettings,
    asset_count_assumed: usize,
    trigger: &mut FfrTrigger,
    t: f64,
    f_nom: f64,
) -> f64 {
    let one = fcr_droop(f_poc - f_nom, per_asset, f_nom) + trigger.output(t, f_poc, per_asset, f_nom);
    one * asset_count_assumed as f64
}

/// One dispatch target as seen by a plant controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispatchTarget {
    /// MW.
    pub rating: f64,
    /// Dispatch weight source (MW of headroom).
    pub capacity: f64,
    /// pu of the asset rating.
    pub limits: (f64, f64),
}

/// Split a plant command (MW) over assets in proportion to capacity,
/// renormalizing around assets that hit a limit. Returns per-asset pu
/// setpoints and whether the command could not be met.
pub fn dispatch(total_mw: f64, targets: &[DispatchTarget]) -> (Vec<f64>, bool) {
    let n = targets.len();
    let mut out = vec![0.0; n];
    let mut fixed = vec![false; n];
    let mut remaining = total_mw;
    for _ in 0..=n {
        let free_cap: f64 = (0..n).filter(|&i| !fixed[i]).map(|i| targets[i].capacity).sum();
        if free_cap <= 0.0 {
            break;
        }
        let mut clipped = false;
        for i in (0..n).filter(|&i| !fixed[i]) {
            let t = &targets[i];
            let pu = remaining * t.capacity / free_cap / t.rating;
            out[i] = pu;
            if pu < t.limits.0 || pu > t.limits.1 {
                clipped = true;
            }
        }
        if !clipped {
            return (out, false);
        }
        for i in 0..n {
            if fixed[i] {
                continue;
            }
            let t = &targets[i];
            if out[i] < t.limits.0 || out[i] > t.limits.1 {
                out[i] = out[i].clamp(t.limits.0, t.limits.1);
                fixed[i] = true;
                remaining -= out[i] * t.rating;
            }
        }
    }
    let met = (out.iter().zip(targets).map(|(p, t)| p * t.rating).sum::<f64>() - total_mw).abs() < 1e-9;
    (out, !met)
}

/// Plant-level PI with one of the coordination strategies.
#[derive(Debug, Clone)]
pub struct PlantController {
    pub kp: f64,
    pub ki: f64,
    /// Integrator state (plant pu).
    pub xi: f64,
    pub strategy: Strategy,
    pub frob: Option<FrobInstance>,
    /// Nominal dynamics applied to the settings-based estimate (Strategy #2).
    pub ff_model: Option<DiscreteFilter>,
    pub ff_trigger: FfrTrigger,
    /// Per-asset settings in plant pu, for the settings-based estimate.
    pub ff_settings: FcSettings,
    pub ff_count: usize,
    pub targets: Vec<DispatchTarget>,
    /// MW.
    pub rating: f64,
    /// Controller period (s).
    pub period: f64,
    pub last_command: f64,
    pub last_estimate: f64,
    pub saturated: bool,
}

/// Output of one plant-controller evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantOutput {
    /// Per-asset setpoints (pu of each asset).
    pub setpoints: Vec<f64>,
    /// Plant command before dispatch (plant pu).
    pub command: f64,
    pub estimate: f64,
}

impl PlantController {
    /// One evaluation. `y_r`, `y_m` in plant pu; `assets_saturated` reports
    /// whether any asset clipped its command on the previous step.
    pub fn step(
        &mut self,
        y_r: f64,
        y_m: f64,
        f_poc: f64,
        t: f64,
        f_nom: f64,
        assets_saturated: bool,
    ) -> Result<PlantOutput, LtiError> {
        for v in [y_r, y_m, f_poc] {
            if !v.is_finite() {
                return Err(LtiError::NonFiniteInput(v));
            }
        }
        let u_prev = self.last_command;
        let estimate = match self.strategy {
            Strategy::Frob => match self.frob.as_mut() {
                Some(fr) => fr.step(&[u_prev], y_m)?,
                None => 0.0,
            },
            Strategy::Feedforward => {
                let raw = strategy2_estimate(f_poc, &self.ff_settings, self.ff_count, &mut self.ff_trigger, t, f_nom);
                match self.ff_model.as_mut() {
                    Some(f) => f.step(raw)?,
                    None => raw,
                }
            }
            Strategy::OpenLoop | Strategy::NoCoordination => 0.0,
        };
        let command = match self.strategy {
            Strategy::OpenLoop => y_r,
            _ => {
                let e = y_r - (y_m - estimate);
                let u = self.kp * e + self.xi;
                if !(assets_saturated || self.saturated) {
                    self.xi += self.ki * e * self.period;
                }
                u
            }
        };
        let (setpoints, sat) = dispatch(command * self.rating, &self.targets);
        self.saturated = sat;
        self.last_command = command;
        self.last_estimate = estimate;
        Ok(PlantOutput { setpoints, command, estimate })
    }
}

/// Per-plant link as seen from the HPP controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantLink {
    /// Plant rating over HPP rating.
    pub share: f64,
    /// Bundle power reference (plant pu).
    pub p_ref: f64,
    /// Weight of this plant in the HPP correction (sums to 1 over plants).
    pub weight: f64,
    /// Plant-level settings used when frequency control is centralized.
    pub fc: FcSettings,
}

/// HPP-level PI with observer, FRR input and optional centralized FFR/FCR.
#[derive(Debug, Clone)]
pub struct HppController {
    pub kp: f64,
    pub ki: f64,
    pub xi: f64,
    pub frob: Option<FrobInstance>,
    pub p_frr_set: f64,
    pub mode: ControlMode,
    pub plants: Vec<PlantLink>,
    pub triggers: Vec<FfrTrigger>,
    pub period: f64,
    /// Plant references excluding centralized frequency control (plant pu).
    last_pi_refs: Vec<f64>,
    pub last_estimate: f64,
    pub last_fc: f64,
}

impl HppController {
    pub fn new(
        kp: f64,
        ki: f64,
        frob: Option<FrobInstance>,
        mode: ControlMode,
        plants: Vec<PlantLink>,
        period: f64,
    ) -> Self {
        let xi = plants.iter().map(|p| p.share * p.p_ref).sum();
        let last_pi_refs = plants.iter().map(|p| p.p_ref).collect();
        let triggers = vec![FfrTrigger::default(); plants.len()];
        Self {
            kp,
            ki,
            xi,
            frob,
            p_frr_set: 0.0,
            mode,
            plants,
            triggers,
            period,
            last_pi_refs,
            last_estimate: 0.0,
            last_fc: 0.0,
        }
    }

    /// Initial plant references (plant pu).
    pub fn initial_refs(&self) -> Vec<f64> {
        self.plants.iter().map(|p| p.p_ref).collect()
    }

    /// Centralized FFR + FCR per plant (plant pu) from the PoC frequency.
    fn centralized_fc(&mut self, f_poc: f64, t: f64, f_nom: f64) -> Vec<f64> {
        self.plants
            .iter()
            .zip(self.triggers.iter_mut())
            .map(|(p, trig)| fcr_droop(f_poc - f_nom, &p.fc, f_nom) + trig.output(t, f_poc, &p.fc, f_nom))
            .collect()
    }

    /// One evaluation; returns per-plant references (plant pu).
    pub fn step(&mut self, p_hpp_ref: f64, y_m_poc: f64, f_poc: f64, t: f64, f_nom: f64) -> Result<Vec<f64>, LtiError> {
        for v in [p_hpp_ref, y_m_poc, f_poc] {
            if !v.is_finite() {
                return Err(LtiError::NonFiniteInput(v));
            }
        }
        let estimate = match self.frob.as_mut() {
            Some(fr) => fr.step(&self.last_pi_refs, y_m_poc)?,
            None => 0.0,
        };
        let e = p_hpp_ref + self.p_frr_set - (y_m_poc - estimate);
        let u = self.kp * e + self.xi;
        self.xi += self.ki * e * self.period;
        let base: f64 = self.plants.iter().map(|p| p.share * p.p_ref).sum();
        let correction = u - base;
        let pi_refs: Vec<f64> = self
            .plants
            .iter()
            .map(|p| if p.share > 0.0 { p.p_ref + correction * p.weight / p.share } else { p.p_ref })
            .collect();
        let mut refs = pi_refs.clone();
        self.last_fc = 0.0;
        if self.mode == ControlMode::Centralized {
            let fc = self.centralized_fc(f_poc, t, f_nom);
            for ((r, f), p) in refs.iter_mut().zip(&fc).zip(&self.plants) {
                *r += f;
                self.last_fc += f * p.share;
            }
        }
        self.last_pi_refs = pi_refs;
        self.last_estimate = estimate;
        Ok(refs)
    }
}

/// HPP correction weights: proportional to each plant's upward FRR reserve in
/// MW, or to the plant ratings when no plant holds FRR.
pub fn frr_weights(shares: &[f64], reserves: &[FcSettings]) -> Vec<f64> {
    let frr: Vec<f64> = shares.iter().zip(reserves).map(|(s, r)| s * r.reserves_up[FRR]).collect();
    let total: f64 = frr.iter().sum();
    if total > 0.0 {
        return frr.iter().map(|v| v / total).collect();
    }
    let total: f64 = shares.iter().sum();
    shares.iter().map(|s| s / total).collect()
}

/// Upward FFR plus FCR of a settings block, the bound on asset FC output.
pub fn fc_bound_up(s: &FcSettings) -> f64 {
    s.reserves_up[FFR] + s.reserves_up[crate::assets::FCR]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::frob_closed_loops;
    use crate::assets::{build_asset_dynamics, AssetKind, AssetParams};

    fn settings() -> FcSettings {
        FcSettings { reserves_up: [0.05, 0.05, 0.0], reserves_down: [0.05, 0.05, 0.0], ..FcSettings::default() }
    }

    #[test]
    fn dispatch_conserves_and_renormalizes() {
        let t = DispatchTarget { rating: 2.0, capacity: 2.0, limits: (0.0, 1.0) };
        let (sp, sat) = dispatch(2.0, &[t, t]);
        assert_eq!(sp, vec![0.5, 0.5]);
        assert!(!sat);
        let small = DispatchTarget { rating: 2.0, capacity: 2.0, limits: (0.0, 0.25) };
        let (sp, sat) = dispatch(2.0, &[small, t]);
        assert_eq!(sp, vec![0.25, 0.75]);
        assert!(!sat);
        let (_, sat) = dispatch(10.0, &[small, t]);
        assert!(sat);
    }

    #[test]
    fn observer_zero_without_disturbance() {
        let g = build_asset_dynamics(&AssetParams::nominal(AssetKind::Wt, 1.0)).unwrap();
        let q = crate::analysis::template_q(3, 50.0).unwrap().tf;
        let dt = 0.001;
        let mut fr = FrobInstance::new(NominalModel::siso(&g, dt).unwrap(), &q, dt, &[0.4]).unwrap();
        let mut plant = g.discretize(dt).unwrap();
        plant.init_steady(0.4).unwrap();
        for k in 0..3000 {
            let u = if k > 100 { 0.6 } else { 0.4 };
            let y = plant.step(u).unwrap();
            let est = frob_step(&mut fr, u, y).unwrap();
            assert!(est.abs() < 1e-9);
        }
    }

    #[test]
    fn observer_recovers_injection() {
        let g = build_asset_dynamics(&AssetParams::nominal(AssetKind::Es, 1.0)).unwrap();
        let q = crate::analysis::template_q(3, 50.0).unwrap().tf;
        let dt = 0.001;
        let mut fr = FrobInstance::new(NominalModel::siso(&g, dt).unwrap(), &q, dt, &[0.0]).unwrap();
        let mut plant = g.discretize(dt).unwrap();
        let mut est = 0.0;
        for _ in 0..3000 {
            let y = plant.step(0.0 + 0.05).unwrap();
            est = frob_step(&mut fr, 0.0, y).unwrap();
        }
        assert!((est - 0.05).abs() < 0.02 * 0.05);
    }

    #[test]
    fn strategy2_scales_with_count() {
        let s = settings();
        let mut trig = FfrTrigger::default();
        assert_eq!(strategy2_estimate(50.05, &s, 4, &mut trig, 0.0, 50.0), 0.0);
        let mut trig = FfrTrigger::default();
        let one = strategy2_estimate(49.7, &s, 1, &mut trig, 0.0, 50.0);
        let mut trig = FfrTrigger::default();
        let four = strategy2_estimate(49.7, &s, 4, &mut trig, 0.0, 50.0);
        assert_eq!(four, 4.0 * one);
    }

    #[test]
    fn nominal_bank_is_linear() {
        let g = build_asset_dynamics(&AssetParams::nominal(AssetKind::Wt, 1.0)).unwrap();
        let c = TransferFunction::pi(0.9, 1.7);
        let one = TransferFunction::one();
        let loops = frob_closed_loops(&c, &g, &g, &one, &g, &one).unwrap();
        let dt = 0.01;
        let mut single = build_hpp_nominal(std::slice::from_ref(&loops), &[1.0], dt).unwrap();
        let mut double = build_hpp_nominal(&[loops.clone(), loops], &[1.0, 1.0], dt).unwrap();
        for k in 0..500 {
            let u = (k as f64 * 0.05).sin();
            let a = single.step(&[u]).unwrap();
            let b = double.step(&[u, u]).unwrap();
            assert!((b - 2.0 * a).abs() < 1e-12);
        }
    }

    #[test]
    fn frr_weights_fall_back_to_ratings() {
        let s = settings();
        assert_eq!(frr_weights(&[0.5, 0.5], &[s.clone(), s.clone()]), vec![0.5, 0.5]);
        let mut with = s.clone();
        with.reserves_up[FRR] = 0.1;
        assert_eq!(frr_weights(&[0.7, 0.3], &[with, s]), vec![1.0, 0.0]);
    }

    #[test]
    fn bundle_headroom() {
        let b = SetpointBundle { p_ref: 0.9, fc: settings() };
        assert!(b.headroom_ok());
        let b = SetpointBundle { p_ref: 0.95, fc: settings() };
        assert!(!b.headroom_ok());
    }
}
