//! Subcommand implementations. Every command validates its input completely
//! before it creates the output directory.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use hfc_core::analysis::{self, bode_on, frob_closed_loops, make_q, AnalysisError, BandEdges};
use hfc_core::assets::{AssetKind, AssetParams};
use hfc_core::design::{check_robustness, design_hppc, design_plant, DesignError};
use hfc_core::engine::{self, EngineError};
use hfc_core::hierarchy::{ControlMode, Strategy};
use hfc_core::lti::TransferFunction;
use hfc_core::scenario::{
    validate, ConfigError, ControllerConfig, Corner, LevelController, QSpec, ScenarioConfig,
};
use hfc_core::simkit::{metrics, DelayProfile, TimeSeriesRecord};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::plots;

/// Exit categories of the CLI.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Divergence(String),
    Design(String),
    SweepFailed(usize),
    Other(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Divergence(_) => 3,
            Failure::SweepFailed(_) => 4,
            Failure::Design(_) => 5,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(c) => c.into(),
            EngineError::Design(d) => Failure::Design(d.to_string()),
            EngineError::NumericalDivergence { .. } => Failure::Divergence(e.to_string()),
            other => Failure::Other(other.into()),
        }
    }
}

impl From<DesignError> for Failure {
    fn from(e: DesignError) -> Self {
        Failure::Design(e.to_string())
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        Failure::Other(e.into())
    }
}

/// Parse a scenario and apply the `HFC_SEED` override. Not yet validated.
fn load_config(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut sc = ScenarioConfig::from_json(&text)?;
    if let Ok(seed) = std::env::var("HFC_SEED") {
        let seed: u64 = seed
            .trim()
            .parse()
            .map_err(|_| Failure::Validation(format!("HFC_SEED: expected an unsigned integer, got {seed:?}")))?;
        engine::override_seed(&mut sc, seed);
    }
    Ok(sc)
}

fn create_dir(out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    Ok(())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Controller fragment: `{"controllers": {...}}`, as written by `design`.
#[derive(Serialize, Deserialize)]
struct ControllerFragment {
    controllers: ControllerConfig,
}

fn metrics_text(sc: &ScenarioConfig, rec: &TimeSeriesRecord) -> String {
    let mut text = format!(
        "scenario={}\nmode={}\nstable={}\n",
        sc.name,
        sc.mode.label(),
        engine::is_stable(rec)
    );
    match engine::metric_window(sc) {
        Some(w) => match metrics(rec, w, "p_fc_poc_pu") {
            Ok(m) => text.push_str(&m.to_text()),
            Err(e) => text.push_str(&format!("metrics_error={e}\n")),
        },
        None => text.push_str("metrics_error=no load step in the scenario\n"),
    }
    text
}

pub fn simulate(config: &Path, out: &Path, controllers: Option<&Path>) -> Result<(), Failure> {
    let mut raw = load_config(config)?;
    if let Some(p) = controllers {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let frag: ControllerFragment = serde_json::from_str(&text)
            .map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))?;
        raw.controllers = Some(frag.controllers);
    }
    let mut sc = validate(&raw)?;
    let ctrl = engine::resolve_controllers(&sc)?;
    create_dir(out)?;
    let rec = engine::run_with(&sc, &ctrl)?;
    write(&out.join("timeseries.csv"), rec.to_csv())?;
    write(&out.join("metrics.txt"), metrics_text(&sc, &rec))?;
    sc.controllers = Some(ctrl);
    write(&out.join("scenario.validated.json"), sc.to_json())?;
    plots::timeseries(&rec, out)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dim {
    Delay,
    Strategy,
    Mode,
    Malfunction,
    Corner,
}

impl Dim {
    fn parse(s: &str) -> Result<Self, String> {
        Ok(match s {
            "delay" => Dim::Delay,
            "strategy" => Dim::Strategy,
            "mode" => Dim::Mode,
            "malfunction" => Dim::Malfunction,
            "corner" => Dim::Corner,
            _ => return Err(format!("unknown sweep dimension {s:?} (delay, strategy, mode, malfunction, corner)")),
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum Value {
    Delay(f64),
    Strategy(Strategy),
    Mode(ControlMode),
    Malfunction(f64),
    Corner(Option<Corner>),
}

fn parse_value(dim: Dim, v: &str) -> Result<Value, String> {
    let bad = |what: &str| format!("{v:?} is not a valid {what}");
    Ok(match dim {
        Dim::Delay => Value::Delay(v.parse().map_err(|_| bad("delay in seconds"))?),
        Dim::Strategy => Value::Strategy(match v {
            "open_loop" => Strategy::OpenLoop,
            "feedforward" => Strategy::Feedforward,
            "frob" => Strategy::Frob,
            "no_coordination" => Strategy::NoCoordination,
            _ => return Err(bad("strategy (open_loop, feedforward, frob, no_coordination)")),
        }),
        Dim::Mode => Value::Mode(match v {
            "distributed" => ControlMode::Distributed,
            "centralized" => ControlMode::Centralized,
            _ => return Err(bad("mode (distributed, centralized)")),
        }),
        Dim::Malfunction => {
            let frac = match v.strip_suffix('%') {
                Some(p) => p.trim().parse::<f64>().map(|x| x / 100.0),
                None => v.parse::<f64>(),
            };
            Value::Malfunction(frac.map_err(|_| bad("malfunction fraction"))?)
        }
        Dim::Corner => Value::Corner(match v {
            "nominal" => None,
            "lower" => Some(Corner::Lower),
            "upper" => Some(Corner::Upper),
            _ => return Err(bad("corner (nominal, lower, upper)")),
        }),
    })
}

fn parse_over(over: &[String]) -> Result<Vec<(Dim, Vec<Value>)>, String> {
    let mut dims: Vec<(Dim, Vec<Value>)> = Vec::new();
    for spec in over {
        let (name, values) = spec.split_once('=').ok_or_else(|| format!("--over {spec:?}: expected dim=v1,v2,..."))?;
        let dim = Dim::parse(name.trim())?;
        if dims.iter().any(|(d, _)| *d == dim) {
            return Err(format!("--over: dimension {name:?} given twice"));
        }
        let values = values
            .split(',')
            .filter(|v| !v.trim().is_empty())
            .map(|v| parse_value(dim, v.trim()))
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err(format!("--over {spec:?}: no values"));
        }
        dims.push((dim, values));
    }
    Ok(dims)
}

fn apply(sc: &mut ScenarioConfig, v: Value) {
    match v {
        Value::Delay(t) => sc.delays.t_cd = DelayProfile::Constant { t },
        Value::Strategy(s) => sc.plants.iter_mut().for_each(|p| p.strategy = s),
        Value::Mode(m) => sc.mode = m,
        Value::Malfunction(f) => sc.uncertainty.malfunction_fraction = f,
        Value::Corner(c) => sc.uncertainty.corner = c,
    }
}

/// Cartesian product, last dimension varying fastest.
fn combinations(dims: &[(Dim, Vec<Value>)]) -> Vec<Vec<Value>> {
    dims.iter().fold(vec![Vec::new()], |acc, (_, values)| {
        acc.iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut c = prefix.clone();
                    c.push(*v);
                    c
                })
            })
            .collect()
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportRow {
    scenario_id: String,
    strategy: String,
    mode: String,
    delay_s: String,
    malfunction: f64,
    corner: String,
    rise_time_s: Option<f64>,
    response_time_s: Option<f64>,
    nadir_hz: Option<f64>,
    ss_dev_hz: Option<f64>,
    stable: bool,
    error: String,
}

struct JobResult {
    row: ReportRow,
    failed: bool,
    trace: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
}

fn delay_label(p: &DelayProfile) -> String {
    match p {
        DelayProfile::Constant { t } => t.to_string(),
        DelayProfile::Sinusoidal { t_min, t_max } => format!("sin[{t_min};{t_max}]"),
        DelayProfile::Piecewise { .. } => "piecewise".into(),
    }
}

fn strategy_label(sc: &ScenarioConfig) -> String {
    let mut labels: Vec<&str> = sc.plants.iter().map(|p| p.strategy.label()).collect();
    labels.dedup();
    labels.join("+")
}

fn run_job(id: String, raw: &ScenarioConfig) -> JobResult {
    let mut row = ReportRow {
        scenario_id: id,
        strategy: strategy_label(raw),
        mode: raw.mode.label().into(),
        delay_s: delay_label(&raw.delays.t_cd),
        malfunction: raw.uncertainty.malfunction_fraction,
        corner: match raw.uncertainty.corner {
            None => "nominal".into(),
            Some(Corner::Lower) => "lower".into(),
            Some(Corner::Upper) => "upper".into(),
        },
        rise_time_s: None,
        response_time_s: None,
        nadir_hz: None,
        ss_dev_hz: None,
        stable: false,
        error: String::new(),
    };
    let sc = match validate(raw) {
        Ok(sc) => sc,
        Err(e) => {
            row.error = e.to_string().replace('\n', " ");
            return JobResult { row, failed: true, trace: None };
        }
    };
    row.strategy = strategy_label(&sc);
    let rec = match engine::run(&sc) {
        Ok(r) => r,
        Err(e) => {
            row.error = e.to_string();
            return JobResult { row, failed: true, trace: None };
        }
    };
    row.stable = engine::is_stable(&rec);
    match engine::metric_window(&sc).map(|w| metrics(&rec, w, "p_fc_poc_pu")) {
        Some(Ok(m)) => {
            row.rise_time_s = Some(m.rise_time);
            row.response_time_s = Some(m.response_time);
            row.nadir_hz = Some(m.nadir_hz);
            row.ss_dev_hz = Some(m.steady_state_dev_hz);
        }
        Some(Err(e)) => row.error = format!("metrics: {e}"),
        None => row.error = "metrics: no load step".into(),
    }
    let col = |n: &str| rec.channel(n).map(<[f64]>::to_vec).unwrap_or_default();
    let trace = Some((rec.time().to_vec(), col("p_fc_poc_pu"), col("f_hz")));
    JobResult { row, failed: false, trace }
}

pub fn sweep(config: &Path, over: &[String], out: &Path, jobs: Option<usize>) -> Result<(), Failure> {
    let raw = load_config(config)?;
    validate(&raw)?;
    let dims = parse_over(over).map_err(Failure::Validation)?;
    let scenarios: Vec<(String, ScenarioConfig)> = combinations(&dims)
        .into_iter()
        .enumerate()
        .map(|(i, combo)| {
            let mut sc = raw.clone();
            combo.into_iter().for_each(|v| apply(&mut sc, v));
            (format!("run_{i:03}"), sc)
        })
        .collect();
    create_dir(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| anyhow!("thread pool: {e}"))?;
    let results: Vec<JobResult> =
        pool.install(|| scenarios.into_par_iter().map(|(id, sc)| run_job(id, &sc)).collect());

    let mut w = csv::Writer::from_path(out.join("report.csv")).context("writing report.csv")?;
    for r in &results {
        w.serialize(&r.row).context("writing report.csv")?;
    }
    w.flush().context("writing report.csv")?;

    // Only traces on the common time base of the first successful run.
    let base = results.iter().find_map(|r| r.trace.as_ref().map(|t| t.0.clone()));
    if let Some(t) = base {
        let mut names = vec!["t_s".to_string()];
        let mut cols = vec![t.clone()];
        for r in &results {
            if let Some((tt, fc, f)) = &r.trace {
                if tt.len() == t.len() {
                    names.push(format!("{}_fc_pu", r.row.scenario_id));
                    cols.push(fc.clone());
                    names.push(format!("{}_f_hz", r.row.scenario_id));
                    cols.push(f.clone());
                }
            }
        }
        let mut rec = TimeSeriesRecord::new(names);
        for i in 0..t.len() {
            rec.push_row(&cols.iter().map(|c| c[i]).collect::<Vec<_>>());
        }
        write(&out.join("comparison.csv"), rec.to_csv())?;
        plots::comparison(&rec, out)?;
    }
    write(&out.join("report.md"), report_table(&fs::read_to_string(out.join("report.csv")).context("reading report.csv")?)?)?;

    let failed = results.iter().filter(|r| r.failed).count();
    if failed > 0 {
        return Err(Failure::SweepFailed(failed));
    }
    Ok(())
}

/// Markdown table of a CSV file.
fn report_table(csv_text: &str) -> Result<String, Failure> {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let header: Vec<String> = r.headers().context("report.csv header")?.iter().map(str::to_string).collect();
    let mut out = format!("| {} |\n|{}\n", header.join(" | "), "---|".repeat(header.len()));
    for rec in r.records() {
        let rec = rec.context("report.csv")?;
        out.push_str(&format!("| {} |\n", rec.iter().collect::<Vec<_>>().join(" | ")));
    }
    Ok(out)
}

#[derive(Serialize)]
struct QRow {
    level: &'static str,
    n: usize,
    omega_c: f64,
    unity_edge: f64,
    attenuation_edge: f64,
    feasible: bool,
    selected: bool,
}

fn bode_table(grid: &[f64], curves: &[(String, TransferFunction)]) -> Result<TimeSeriesRecord, Failure> {
    let mut names = vec!["omega_rad_s".to_string()];
    let mut cols = vec![grid.to_vec()];
    for (name, tf) in curves {
        let b = bode_on(tf, grid)?;
        names.push(format!("{name}_mag_db"));
        cols.push(b.grid.iter().map(|p| p.mag_db).collect());
        names.push(format!("{name}_phase_deg"));
        cols.push(b.grid.iter().map(|p| p.phase_deg).collect());
    }
    let mut rec = TimeSeriesRecord::new(names);
    for i in 0..grid.len() {
        rec.push_row(&cols.iter().map(|c| c[i]).collect::<Vec<_>>());
    }
    Ok(rec)
}

fn level(kp: f64, ki: f64, q: &analysis::QFilter) -> LevelController {
    LevelController { kp, ki, q: QSpec { n: q.n, omega_c: q.omega_c, shape: q.shape } }
}

pub fn design(config: &Path, out: &Path) -> Result<(), Failure> {
    let sc = validate(&load_config(config)?)?;
    let nominal = AssetParams::nominal(AssetKind::Wt, 1.0);
    let plant = design_plant(&nominal, &sc.design.plant)?;
    let hppc = design_hppc(&plant, &sc.design.hppc, &sc.design.plant)?;
    let rob = check_robustness(&plant, &nominal, &sc.design.plant)?;
    create_dir(out)?;

    let grid = analysis::robustness_grid();
    let wc = plant.q().omega_c;
    let shape = plant.q().shape;
    let mut pdy = vec![];
    let mut ny = vec![];
    for n in 1..=3 {
        let q = make_q(shape, n, wc)?;
        let loops = frob_closed_loops(&plant.c_p, &plant.g, &plant.g, &q.tf, &plant.g, &TransferFunction::one())?;
        pdy.push((format!("n{n}"), loops.g_pdy));
        ny.push((format!("n{n}"), loops.g_ny));
    }
    let cg = plant.c_p.series(&plant.g);
    let no_frob = cg.neg().div(&TransferFunction::one().parallel(&cg)).map_err(|e| anyhow!(e))?;
    ny.push(("no_frob".into(), no_frob));
    let pdy = bode_table(&grid, &pdy)?;
    let ny = bode_table(&grid, &ny)?;
    write(&out.join("bode_g_pdy.csv"), pdy.to_csv())?;
    write(&out.join("bode_g_ny.csv"), ny.to_csv())?;
    plots::bode(&pdy, out, "bode_g_pdy", "Frequency-control path G_pdy")?;
    plots::bode(&ny, out, "bode_g_ny", "Noise path G_ny")?;

    let mut w = csv::Writer::from_path(out.join("q_selection.csv")).context("writing q_selection.csv")?;
    let rows = |lvl: &'static str, trace: &[BandEdges], chosen: usize| {
        trace
            .iter()
            .map(|b| QRow {
                level: lvl,
                n: b.n,
                omega_c: b.omega_c,
                unity_edge: b.unity_edge,
                attenuation_edge: b.attenuation_edge,
                feasible: b.feasible,
                selected: b.n == chosen,
            })
            .collect::<Vec<_>>()
    };
    for r in rows("plant", &plant.selection.trace, plant.q().n)
        .into_iter()
        .chain(rows("hppc", &hppc.selection.trace, hppc.selection.filter.n))
    {
        w.serialize(r).context("writing q_selection.csv")?;
    }
    w.flush().context("writing q_selection.csv")?;

    write(&out.join("robustness_params.csv"), rob.params.to_csv())?;
    write(&out.join("robustness_delay.csv"), rob.delay.to_csv())?;
    for stem in ["robustness_params", "robustness_delay"] {
        let rec = TimeSeriesRecord::from_csv(&fs::read_to_string(out.join(format!("{stem}.csv"))).context(stem)?)
            .map_err(|e| anyhow!(e))?;
        plots::robustness(&rec, out, stem, &format!("{stem}: weight vs margin"))?;
    }

    let frag = ControllerFragment {
        controllers: ControllerConfig {
            plant: level(plant.pi.kp, plant.pi.ki, plant.q()),
            hppc: level(hppc.pi.kp, hppc.pi.ki, &hppc.selection.filter),
        },
    };
    let json = serde_json::to_string_pretty(&frag).context("serializing design.json")?;
    write(&out.join("design.json"), json + "\n")?;

    let summary = format!(
        "plant_kp={}\nplant_ki={}\nplant_bandwidth_hz={}\nplant_phase_margin_deg={}\nplant_pm_met={}\n\
         plant_q_degree={}\nplant_q_omega_c={}\n\
         hppc_kp={}\nhppc_ki={}\nhppc_bandwidth_hz={}\nhppc_phase_margin_deg={}\nhppc_pm_met={}\n\
         hppc_q_degree={}\nhppc_q_omega_c={}\n\
         robust_params={}\nrobust_params_min_ratio={}\nrobust_delay={}\nrobust_delay_min_ratio={}\n",
        plant.pi.kp,
        plant.pi.ki,
        plant.pi.bandwidth_hz,
        plant.pi.phase_margin_deg,
        plant.pi.pm_met,
        plant.q().n,
        plant.q().omega_c,
        hppc.pi.kp,
        hppc.pi.ki,
        hppc.pi.bandwidth_hz,
        hppc.pi.phase_margin_deg,
        hppc.pi.pm_met,
        hppc.selection.filter.n,
        hppc.selection.filter.omega_c,
        rob.params.satisfied,
        rob.params.min_margin_ratio,
        rob.delay.satisfied,
        rob.delay.min_margin_ratio,
    );
    write(&out.join("summary.txt"), summary)?;
    Ok(())
}

fn read_record(path: &Path) -> Result<Option<TimeSeriesRecord>, Failure> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rec = TimeSeriesRecord::from_csv(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    Ok(Some(rec))
}

pub fn report(dir: &Path) -> Result<(), Failure> {
    if !dir.is_dir() {
        return Err(anyhow!("{} is not a directory", dir.display()).into());
    }
    let mut found = 0;
    if let Some(rec) = read_record(&dir.join("timeseries.csv"))? {
        plots::timeseries(&rec, dir)?;
        found += 1;
    }
    if let Some(rec) = read_record(&dir.join("comparison.csv"))? {
        plots::comparison(&rec, dir)?;
        found += 1;
    }
    for (stem, title) in [("bode_g_pdy", "Frequency-control path G_pdy"), ("bode_g_ny", "Noise path G_ny")] {
        if let Some(rec) = read_record(&dir.join(format!("{stem}.csv")))? {
            plots::bode(&rec, dir, stem, title)?;
            found += 1;
        }
    }
    for stem in ["robustness_params", "robustness_delay"] {
        if let Some(rec) = read_record(&dir.join(format!("{stem}.csv")))? {
            plots::robustness(&rec, dir, stem, &format!("{stem}: weight vs margin"))?;
            found += 1;
        }
    }
    let report_csv = dir.join("report.csv");
    if report_csv.exists() {
        let text = fs::read_to_string(&report_csv).context("reading report.csv")?;
        let table = report_table(&text)?;
        print!("{table}");
        write(&dir.join("report.md"), table)?;
        found += 1;
    }
    if found == 0 {
        return Err(anyhow!("no known CSV files in {}", dir.display()).into());
    }
    Ok(())
}
