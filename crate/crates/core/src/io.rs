//! Scenario files, diagnostics CSV, JSON reports, run manifests and
//! gnuplot-ready exports.
//!
//! Scenario files are UTF-8 `key = value` lines; `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiments::{PhaseReport, Problem, RunOutput, Scenario, Shape};
use crate::functionals::DiagnosticsRecord;
use crate::grid::Field;
use crate::solver::SnapshotSchedule;

pub const CSV_HEADER: &str = "t,E,D,gap_bump,gap_glued,V,V_tilde,V_minus,shift_c,zero_a,zero_b,xi_sup,linf_f,trusted";

/// Keys in canonical order.
pub const CONFIG_KEYS: &[&str] = &[
    "id",
    "problem",
    "L",
    "Lambda",
    "n",
    "mean",
    "shape",
    "amplitude",
    "width",
    "offset",
    "w0",
    "epsilon",
    "eps_phase",
    "t0_gap",
    "t0_linf",
    "v_cap",
    "tail_sentinel",
    "exp_floor",
    "noise",
    "seed",
    "dt",
    "stabilization",
    "t_end",
    "adapt",
    "dealias",
    "tolerance",
    "dt_min",
    "dt_max",
    "t_first",
    "per_decade",
    "times",
    "log_steps",
];

fn syntax(line: usize, msg: impl Into<String>) -> Error {
    Error::ConfigSyntax { line, msg: msg.into() }
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| syntax(line, format!("`{key}` expects a number, got `{v}`")))
}

fn flag(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(syntax(line, format!("`{key}` expects true or false, got `{v}`"))),
    }
}

fn auto_or(line: usize, key: &str, v: &str) -> Result<Option<f64>> {
    if v == "auto" {
        Ok(None)
    } else {
        num(line, key, v).map(Some)
    }
}

pub fn parse_config(path: &Path) -> Result<Scenario> {
    parse_config_str(&fs::read_to_string(path)?)
}

/// Parse a scenario; missing keys take the defaults of the reference
/// scenario for the given `problem`.
pub fn parse_config_str(text: &str) -> Result<Scenario> {
    let mut entries: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| syntax(lineno, "expected `key = value`"))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(syntax(lineno, "empty key or value"));
        }
        if !CONFIG_KEYS.contains(&k) {
            return Err(Error::UnknownKey(k.to_string()));
        }
        if entries.iter().any(|(_, e, _)| e == k) {
            return Err(syntax(lineno, format!("duplicate key `{k}`")));
        }
        entries.push((lineno, k.to_string(), v.to_string()));
    }
    let problem = match entries.iter().find(|(_, k, _)| k == "problem") {
        Some((line, _, v)) => v
            .parse::<Problem>()
            .map_err(|_| syntax(*line, format!("unknown problem `{v}` (torus, line, sub2)")))?,
        None => return Err(Error::ConstraintViolation("problem".into())),
    };
    let mut s = Scenario::reference(problem);
    let mut t_first = None;
    let mut per_decade = None;
    for (line, k, v) in &entries {
        let (line, v) = (*line, v.as_str());
        match k.as_str() {
            "id" => s.id = v.to_string(),
            "problem" => {}
            "L" => s.l = num(line, k, v)?,
            "Lambda" => s.lambda = num(line, k, v)?,
            "n" => s.n = num(line, k, v)?,
            "mean" => s.mean = num(line, k, v)?,
            "shape" => {
                s.disturbance.shape = v
                    .parse::<Shape>()
                    .map_err(|_| syntax(line, format!("unknown shape `{v}` (bump, dip)")))?
            }
            "amplitude" => s.disturbance.amplitude = num(line, k, v)?,
            "width" => s.disturbance.width = auto_or(line, k, v)?,
            "offset" => s.disturbance.offset = auto_or(line, k, v)?,
            "w0" => s.w0 = num(line, k, v)?,
            "epsilon" => s.epsilon = num(line, k, v)?,
            "eps_phase" => s.eps_phase = num(line, k, v)?,
            "t0_gap" => s.t0_gap = num(line, k, v)?,
            "t0_linf" => s.t0_linf = num(line, k, v)?,
            "v_cap" => s.v_cap = num(line, k, v)?,
            "tail_sentinel" => s.tail_sentinel = num(line, k, v)?,
            "exp_floor" => s.exp_floor = num(line, k, v)?,
            "noise" => s.noise = num(line, k, v)?,
            "seed" => s.seed = num(line, k, v)?,
            "dt" => s.solver.dt = num(line, k, v)?,
            "stabilization" => s.solver.stabilization = num(line, k, v)?,
            "t_end" => s.solver.t_end = num(line, k, v)?,
            "adapt" => s.solver.adapt = flag(line, k, v)?,
            "dealias" => s.solver.dealias = flag(line, k, v)?,
            "tolerance" => s.solver.tolerance = num(line, k, v)?,
            "dt_min" => s.solver.dt_min = num(line, k, v)?,
            "dt_max" => s.solver.dt_max = num(line, k, v)?,
            "t_first" => t_first = Some(num::<f64>(line, k, v)?),
            "per_decade" => per_decade = Some(num::<usize>(line, k, v)?),
            "times" => {
                let ts = v
                    .split(',')
                    .map(|x| num::<f64>(line, k, x.trim()))
                    .collect::<Result<Vec<f64>>>()?;
                s.solver.schedule = SnapshotSchedule::Times(ts);
            }
            "log_steps" => s.solver.log_steps = flag(line, k, v)?,
            _ => unreachable!("keys are checked above"),
        }
    }
    if t_first.is_some() || per_decade.is_some() {
        if matches!(s.solver.schedule, SnapshotSchedule::Times(_)) {
            return Err(Error::ConstraintViolation("times".into()));
        }
        if let SnapshotSchedule::LogSpaced {
            t_first: tf,
            per_decade: pd,
        } = &mut s.solver.schedule
        {
            *tf = t_first.unwrap_or(*tf);
            *pd = per_decade.unwrap_or(*pd);
        }
    }
    if let SnapshotSchedule::LogSpaced { t_first, per_decade } = &s.solver.schedule {
        if !(*t_first > 0.0) {
            return Err(Error::ConstraintViolation("t_first".into()));
        }
        if *per_decade == 0 {
            return Err(Error::ConstraintViolation("per_decade".into()));
        }
    }
    s.validate()?;
    Ok(s)
}

/// Canonical text of a scenario: every key, in [`CONFIG_KEYS`] order.
pub fn emit_config(s: &Scenario) -> String {
    let opt = |v: Option<f64>| v.map_or("auto".to_string(), |x| format!("{x:?}"));
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("id", s.id.clone());
    kv("problem", s.problem.to_string());
    kv("L", format!("{:?}", s.l));
    kv("Lambda", format!("{:?}", s.lambda));
    kv("n", s.n.to_string());
    kv("mean", format!("{:?}", s.mean));
    kv("shape", s.disturbance.shape.to_string());
    kv("amplitude", format!("{:?}", s.disturbance.amplitude));
    kv("width", opt(s.disturbance.width));
    kv("offset", opt(s.disturbance.offset));
    kv("w0", format!("{:?}", s.w0));
    kv("epsilon", format!("{:?}", s.epsilon));
    kv("eps_phase", format!("{:?}", s.eps_phase));
    kv("t0_gap", format!("{:?}", s.t0_gap));
    kv("t0_linf", format!("{:?}", s.t0_linf));
    kv("v_cap", format!("{:?}", s.v_cap));
    kv("tail_sentinel", format!("{:?}", s.tail_sentinel));
    kv("exp_floor", format!("{:?}", s.exp_floor));
    kv("noise", format!("{:?}", s.noise));
    kv("seed", s.seed.to_string());
    let c = &s.solver;
    kv("dt", format!("{:?}", c.dt));
    kv("stabilization", format!("{:?}", c.stabilization));
    kv("t_end", format!("{:?}", c.t_end));
    kv("adapt", c.adapt.to_string());
    kv("dealias", c.dealias.to_string());
    kv("tolerance", format!("{:?}", c.tolerance));
    kv("dt_min", format!("{:?}", c.dt_min));
    kv("dt_max", format!("{:?}", c.dt_max));
    match &c.schedule {
        SnapshotSchedule::LogSpaced { t_first, per_decade } => {
            kv("t_first", format!("{t_first:?}"));
            kv("per_decade", per_decade.to_string());
        }
        SnapshotSchedule::Times(ts) => {
            kv("times", ts.iter().map(|t| format!("{t:?}")).collect::<Vec<_>>().join(","));
        }
    }
    kv("log_steps", c.log_steps.to_string());
    out
}

/// SHA-256 of the canonical scenario text, hex encoded.
pub fn config_hash(s: &Scenario) -> String {
    hex::encode(Sha256::digest(emit_config(s).as_bytes()))
}

// ---------------------------------------------------------------------------
// CSV

pub fn series_to_csv(series: &[DiagnosticsRecord]) -> String {
    let mut out = String::with_capacity(64 * (series.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in series {
        for x in r.floats() {
            let _ = write!(out, "{x:?},");
        }
        out.push_str(if r.trusted { "true" } else { "false" });
        out.push('\n');
    }
    out
}

pub fn parse_series_csv(text: &str) -> Result<Vec<DiagnosticsRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == CSV_HEADER => {}
        _ => {
            return Err(Error::CsvParse {
                line: 1,
                msg: "missing or unexpected header".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 14 {
            return Err(Error::CsvParse {
                line: lineno,
                msg: format!("expected 14 columns, found {}", cols.len()),
            });
        }
        let mut v = [0.0; 13];
        for (slot, c) in v.iter_mut().zip(&cols) {
            *slot = c.trim().parse().map_err(|_| Error::CsvParse {
                line: lineno,
                msg: format!("bad number `{c}`"),
            })?;
        }
        let trusted = match cols[13].trim() {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::CsvParse {
                    line: lineno,
                    msg: format!("bad flag `{other}`"),
                })
            }
        };
        out.push(DiagnosticsRecord {
            t: v[0],
            energy: v[1],
            dissipation: v[2],
            gap_bump: v[3],
            gap_glued: v[4],
            v: v[5],
            v_tilde: v[6],
            v_minus: v[7],
            shift_c: v[8],
            zero_a: v[9],
            zero_b: v[10],
            xi_sup: v[11],
            linf_f: v[12],
            trusted,
        });
    }
    Ok(out)
}

pub fn emit_series(series: &[DiagnosticsRecord], path: &Path) -> Result<()> {
    fs::write(path, series_to_csv(series))?;
    Ok(())
}

pub fn read_series(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    parse_series_csv(&fs::read_to_string(path)?)
}

/// Pretty JSON; keys follow struct field order.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

pub fn emit_report<T: Serialize>(report: &T, path: &Path) -> Result<()> {
    let mut text = to_json(report)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Two-column `t value` files, one per diagnostic, named `<stem>_<column>.dat`.
/// NaN rows are skipped.
pub fn emit_dat(series: &[DiagnosticsRecord], dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let names: Vec<&str> = CSV_HEADER.split(',').collect();
    let mut paths = Vec::new();
    for (col, name) in names.iter().enumerate().take(13).skip(1) {
        let mut text = format!("# t {name}\n");
        for r in series {
            let f = r.floats();
            if f[col].is_finite() {
                let _ = writeln!(text, "{:?} {:?}", f[0], f[col]);
            }
        }
        let path = dir.join(format!("{stem}_{name}.dat"));
        fs::write(&path, text)?;
        paths.push(path);
    }
    Ok(paths)
}

/// `x,u` samples of a field.
pub fn emit_field_csv(f: &Field, path: &Path) -> Result<()> {
    let g = f.grid();
    let mut text = String::from("x,u\n");
    for (j, v) in f.values().iter().enumerate() {
        let _ = writeln!(text, "{:?},{v:?}", g.x(j));
    }
    fs::write(path, text)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub half_length: f64,
    pub n: usize,
    pub dx: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario_id: String,
    pub problem: Problem,
    pub config_hash: String,
    pub code_version: String,
    /// Canonical scenario text with all defaults filled in.
    pub config: String,
    pub grid: GridInfo,
    pub solver: crate::solver::SolverConfig,
    pub outputs: Vec<String>,
    pub wall_seconds: f64,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub snapshots: usize,
    pub initial: BTreeMap<String, f64>,
}

pub fn manifest(out: &RunOutput, outputs: Vec<String>) -> RunManifest {
    let s = &out.scenario;
    let g = out.initial.u0.grid();
    let init = &out.initial;
    let initial = BTreeMap::from([
        ("energy".to_string(), init.energy),
        ("budget".to_string(), init.budget),
        ("w0_target".to_string(), s.w0),
        ("w0_measured".to_string(), init.w0_measured),
        ("w0_vs_base".to_string(), init.w0_vs_base),
        ("h0".to_string(), init.h0),
        ("v_minus0".to_string(), init.v_minus0),
        ("corrector_amplitude".to_string(), init.corrector_amplitude),
        ("constraint_error".to_string(), init.constraint_error),
    ]);
    RunManifest {
        scenario_id: s.id.clone(),
        problem: s.problem,
        config_hash: config_hash(s),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config: emit_config(s),
        grid: GridInfo {
            half_length: g.half_length(),
            n: g.n(),
            dx: g.dx(),
        },
        solver: s.solver.clone(),
        outputs,
        wall_seconds: out.wall_seconds,
        steps_accepted: out.trajectory.accepted,
        steps_rejected: out.trajectory.rejected,
        snapshots: out.series.len(),
        initial,
    }
}

pub const SERIES_FILE: &str = "series.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PHASES_FILE: &str = "phases.json";

/// Write `series.csv`, `.dat` exports, `phases.json` (when given) and
/// `manifest.json` into `dir`.
pub fn write_run(out: &RunOutput, phases: Option<&PhaseReport>, dir: &Path) -> Result<RunManifest> {
    fs::create_dir_all(dir)?;
    let mut outputs = vec![SERIES_FILE.to_string()];
    emit_series(&out.series, &dir.join(SERIES_FILE))?;
    for p in emit_dat(&out.series, dir, "series")? {
        if let Some(name) = p.file_name() {
            outputs.push(name.to_string_lossy().into_owned());
        }
    }
    if let Some(ph) = phases {
        emit_report(ph, &dir.join(PHASES_FILE))?;
        outputs.push(PHASES_FILE.to_string());
    }
    outputs.push(MANIFEST_FILE.to_string());
    let m = manifest(out, outputs);
    emit_report(&m, &dir.join(MANIFEST_FILE))?;
    Ok(m)
}
