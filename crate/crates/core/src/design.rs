//! End-to-end controller design for one plant loop: PI tuning, Q selection,
//! closed loops and both robustness checks.

use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, frob_closed_loops, loop_transfer, pi_tune, q_select_with, robust_check_delay, robust_check_params,
    AnalysisError, FrobLoopSet, PiTuning, QFilter, QSelectOptions, QSelection, RobustnessReport,
};
use crate::assets::{build_asset_dynamics, AssetError, AssetParams};
use crate::lti::TransferFunction;

#[derive(Debug, thiserror::Error)]
pub enum DesignError {
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Asset(#[from] AssetError),
}

/// Targets of the plant-level design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignOptions {
    /// Lowest measurement-noise frequency (rad/s).
    pub omega_noise: f64,
    /// Upper edge of the frequency-response band (rad/s).
    pub omega_resp: f64,
    /// Closed-loop bandwidth target (Hz).
    pub bw_hz: f64,
    /// Phase-margin target (deg), soft.
    pub pm_deg: f64,
    /// Upper bound of the plant-to-asset communication delay (s).
    pub delay_max: f64,
    pub eps_acc: f64,
    pub eps_noise: f64,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            omega_noise: 50.0,
            omega_resp: 1.0,
            bw_hz: 0.25,
            pm_deg: 150.0,
            delay_max: 2.0,
            eps_acc: 0.05,
            eps_noise: 0.1,
        }
    }
}

impl DesignOptions {
    pub fn q_options(&self) -> QSelectOptions {
        QSelectOptions { eps_acc: self.eps_acc, eps_noise: self.eps_noise, ..QSelectOptions::default() }
    }
}

/// Everything the plant controller and the robustness study need.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantDesign {
    /// Nominal command-to-output dynamics of the plant (`G = G_n`).
    pub g: TransferFunction,
    pub pi: PiTuning,
    pub c_p: TransferFunction,
    pub selection: QSelection,
    pub loops: FrobLoopSet,
    pub loop_tf: TransferFunction,
}

impl PlantDesign {
    pub fn q(&self) -> &QFilter {
        &self.selection.filter
    }
}

/// Tune the PI against the nominal asset dynamics and select Q.
pub fn design_plant(asset: &AssetParams, opts: &DesignOptions) -> Result<PlantDesign, DesignError> {
    let g = build_asset_dynamics(asset)?;
    let pi = pi_tune(&g, opts.bw_hz, opts.pm_deg)?;
    let c_p = TransferFunction::pi(pi.kp, pi.ki);
    let one = TransferFunction::one();
    // Frequency control enters at the asset command, so C_A2 G_A is the asset path itself.
    let selection = q_select_with(&g, &c_p, &g, &one, opts.omega_noise, opts.omega_resp, &opts.q_options())?;
    let loops = frob_closed_loops(&c_p, &g, &g, &selection.filter.tf, &g, &one)?;
    let loop_tf = loop_transfer(&selection.filter.tf, &c_p, &g, &g)?;
    Ok(PlantDesign { g, pi, c_p, selection, loops, loop_tf })
}

/// Targets of the HPP-level design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HppDesignOptions {
    pub omega_noise: f64,
    pub omega_resp: f64,
    pub bw_hz: f64,
    pub pm_deg: f64,
}

impl Default for HppDesignOptions {
    fn default() -> Self {
        // Same measurement noise and response band as the plants; bandwidth
        // one octave below the plant loops.
        Self { omega_noise: 50.0, omega_resp: 1.0, bw_hz: 0.125, pm_deg: 150.0 }
    }
}

/// HPP controller design against the plant reference-to-output loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HppDesign {
    /// Nominal plant loop seen by the HPP controller.
    pub g_yry: TransferFunction,
    pub pi: PiTuning,
    pub c: TransferFunction,
    pub selection: QSelection,
}

/// Tune the HPP PI on the plant closed loop and select its Q. Frequency
/// control enters through the plant's `G_pdy`.
pub fn design_hppc(plant: &PlantDesign, opts: &HppDesignOptions, plant_opts: &DesignOptions) -> Result<HppDesign, DesignError> {
    let g_yry = plant.loops.g_yry.clone();
    let pi = pi_tune(&g_yry, opts.bw_hz, opts.pm_deg)?;
    let c = TransferFunction::pi(pi.kp, pi.ki);
    let selection = q_select_with(
        &g_yry,
        &c,
        &plant.loops.g_pdy,
        &TransferFunction::one(),
        opts.omega_noise,
        opts.omega_resp,
        &plant_opts.q_options(),
    )?;
    Ok(HppDesign { g_yry, pi, c, selection })
}

/// Both robust-stability checks for a finished design.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustnessSummary {
    pub params: RobustnessReport,
    pub delay: RobustnessReport,
}

/// Parameter check over all 64 corners of the asset uncertainty box and the
/// delay check at `opts.delay_max`.
pub fn check_robustness(
    design: &PlantDesign,
    asset: &AssetParams,
    opts: &DesignOptions,
) -> Result<RobustnessSummary, DesignError> {
    let grid = analysis::robustness_grid();
    let samples = asset
        .all_corners()
        .iter()
        .map(build_asset_dynamics)
        .collect::<Result<Vec<_>, _>>()?;
    let params = robust_check_params(&design.g, &samples, &design.loop_tf, &grid)?;
    let delay = robust_check_delay(&design.loop_tf, opts.delay_max, &grid)?;
    Ok(RobustnessSummary { params, delay })
}
