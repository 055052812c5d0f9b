//! Plot sets derived from the CSV outputs.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use hfc_core::simkit::TimeSeriesRecord;

use crate::svg::{Chart, Series};

fn series<'a>(rec: &'a TimeSeriesRecord, names: &[&str]) -> Vec<Series<'a>> {
    let t = rec.time();
    names
        .iter()
        .filter_map(|n| rec.channel(n).ok().map(|y| Series { name: n.to_string(), x: t, y }))
        .collect()
}

fn write(dir: &Path, file: &str, chart: &Chart) -> Result<()> {
    fs::write(dir.join(file), chart.render()).with_context(|| format!("writing {file}"))
}

/// Frequency, power and frequency-response charts of one run.
pub fn timeseries(rec: &TimeSeriesRecord, dir: &Path) -> Result<()> {
    let chart = |title: &str, y: &str, s| Chart { title: title.into(), x_label: "t (s)".into(), y_label: y.into(), log_x: false, series: s };
    write(dir, "frequency.svg", &chart("Grid frequency", "Hz", series(rec, &["f_hz"])))?;
    let derived = ["_ref_pu", "_fc_pu", "_est_pu", "_cmd_pu"];
    let power: Vec<&str> = rec
        .names
        .iter()
        .map(String::as_str)
        .filter(|n| n.starts_with("p_") && n.ends_with("_pu") && !n.starts_with("p_fc_"))
        .filter(|n| *n == "p_hpp_ref_pu" || !derived.iter().any(|d| n.ends_with(d)))
        .collect();
    write(dir, "power.svg", &chart("HPP and plant output", "pu", series(rec, &power)))?;
    let fc = ["p_fc_poc_pu", "p_fc_actual_pu", "p_fc_estimate_pu", "p_fc_estimate_hppc_pu", "p_fc_hppc_pu"];
    write(dir, "frequency_response.svg", &chart("Frequency response at the HPP PoC", "HPP pu", series(rec, &fc)))
}

/// One curve per sweep job for every channel present in `comparison.csv`.
pub fn comparison(rec: &TimeSeriesRecord, dir: &Path) -> Result<()> {
    let t = rec.time();
    for (suffix, title, unit) in [("_fc_pu", "Frequency response at the PoC", "HPP pu"), ("_f_hz", "Grid frequency", "Hz")] {
        let s: Vec<Series> = rec
            .names
            .iter()
            .zip(&rec.columns)
            .filter(|(n, _)| n.ends_with(suffix))
            .map(|(n, y)| Series { name: n.trim_end_matches(suffix).to_string(), x: t, y })
            .collect();
        let file = format!("comparison{suffix}.svg").replace("_pu", "").replace("_hz", "");
        write(dir, &file, &Chart { title: title.into(), x_label: "t (s)".into(), y_label: unit.into(), log_x: false, series: s })?;
    }
    Ok(())
}

/// Magnitude and phase charts of a Bode CSV whose columns come in
/// `<name>_mag_db` / `<name>_phase_deg` pairs after `omega_rad_s`.
pub fn bode(rec: &TimeSeriesRecord, dir: &Path, stem: &str, title: &str) -> Result<()> {
    let w = rec.time();
    for (suffix, what, unit) in [("_mag_db", "magnitude", "dB"), ("_phase_deg", "phase", "deg")] {
        let s: Vec<Series> = rec
            .names
            .iter()
            .zip(&rec.columns)
            .filter(|(n, _)| n.ends_with(suffix))
            .map(|(n, y)| Series { name: n.trim_end_matches(suffix).to_string(), x: w, y })
            .collect();
        let chart = Chart { title: format!("{title} {what}"), x_label: "ω (rad/s)".into(), y_label: unit.into(), log_x: true, series: s };
        write(dir, &format!("{stem}{}.svg", if suffix == "_mag_db" { "_mag" } else { "_phase" }), &chart)?;
    }
    Ok(())
}

/// Uncertainty weight against the robustness margin.
pub fn robustness(rec: &TimeSeriesRecord, dir: &Path, stem: &str, title: &str) -> Result<()> {
    let chart = Chart {
        title: title.into(),
        x_label: "ω (rad/s)".into(),
        y_label: "magnitude".into(),
        log_x: true,
        series: series(rec, &["m_mag", "w_mag", "margin_mag"]),
    };
    write(dir, &format!("{stem}.svg"), &chart)
}
