use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use chflow::experiments::{self, PhaseReport, Problem, RunOutput};
use chflow::fit::{self, Model, WindowOptions};
use chflow::inequality::{self, Phase};
use chflow::io;
use chflow::par::{self, Execution};
use chflow::{Error, Scenario};

#[derive(Parser)]
#[command(name = "chflow", version, about = "1-d Cahn–Hilliard slow-manifold simulator")]
struct Cli {
    /// Run sweeps and diagnostics sequentially.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write series.csv, phases.json, manifest.json and .dat files.
    Run {
        config: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a scenario and evaluate its gates; exits with 4 if any fails.
    Check {
        config: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Fit a power law or exponential to one column of a series CSV.
    Fit {
        csv: PathBuf,
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long, default_value = "gap_bump")]
        column: String,
        /// Window start; with --to omitted the algebraic window is detected.
        #[arg(long)]
        from: Option<f64>,
        #[arg(long)]
        to: Option<f64>,
    },
    /// Summarize a run directory without re-simulating.
    Report { dir: PathBuf },
    /// Write the initial data and profiles of a scenario.
    Profile {
        config: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Power,
    Exp,
}

enum Failure {
    Config(Error),
    Runtime(Error),
    Check(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
            Failure::Check(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "config error: {e}"),
            Failure::Runtime(e) => write!(f, "runtime error: {e}"),
            Failure::Check(m) => write!(f, "check failed: {m}"),
        }
    }
}

/// Constraint violations found while building the run are still config errors.
fn runtime(e: Error) -> Failure {
    match e {
        Error::ConstraintViolation(_) => Failure::Config(e),
        e => Failure::Runtime(e),
    }
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    io::parse_config(path).map_err(Failure::Config)
}

fn simulate(s: &Scenario, exec: Execution) -> Result<(RunOutput, Option<PhaseReport>), Failure> {
    let out = experiments::run(s, exec).map_err(runtime)?;
    let phases = match experiments::detect_phases(&out.series, s) {
        Ok(p) => Some(p),
        Err(e) => {
            eprintln!("phase detection skipped: {e}");
            None
        }
    };
    Ok((out, phases))
}

fn cmd_run(config: &Path, dir: &Path, exec: Execution) -> Result<(), Failure> {
    let s = load(config)?;
    let (out, phases) = simulate(&s, exec)?;
    let m = io::write_run(&out, phases.as_ref(), dir).map_err(runtime)?;
    println!(
        "{}: {} snapshots, {} steps ({} rejected), {:.1} s -> {}",
        m.scenario_id,
        m.snapshots,
        m.steps_accepted,
        m.steps_rejected,
        m.wall_seconds,
        dir.display()
    );
    Ok(())
}

fn cmd_check(config: &Path, dir: &Path, exec: Execution) -> Result<(), Failure> {
    let s = load(config)?;
    let previous = io::read_series(&dir.join(io::SERIES_FILE)).ok().map(|_| {
        std::fs::read_to_string(dir.join(io::SERIES_FILE)).unwrap_or_default()
    });
    let (out, phases) = simulate(&s, exec)?;
    io::write_run(&out, phases.as_ref(), dir).map_err(runtime)?;
    let mut gates = match &phases {
        Some(p) => experiments::gates(&out, p),
        None => Vec::new(),
    };
    if phases.is_none() {
        gates.push(experiments::Gate {
            name: "phases_detected".into(),
            value: 0.0,
            limit: 1.0,
            passed: false,
        });
    }
    if let Some(prev) = previous {
        let same = prev == io::series_to_csv(&out.series);
        gates.push(experiments::Gate {
            name: "bit_identical_rerun".into(),
            value: if same { 1.0 } else { 0.0 },
            limit: 1.0,
            passed: same,
        });
    }
    io::emit_report(&gates, &dir.join("gates.json")).map_err(runtime)?;
    let mut failed = Vec::new();
    for g in &gates {
        println!(
            "{} {}: {:e} (limit {:e})",
            if g.passed { "PASS" } else { "FAIL" },
            g.name,
            g.value,
            g.limit
        );
        if !g.passed {
            failed.push(g.name.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(failed.join(", ")))
    }
}

fn column(series: &[chflow::functionals::DiagnosticsRecord], name: &str) -> Result<Vec<f64>, Failure> {
    let idx = io::CSV_HEADER
        .split(',')
        .position(|c| c == name)
        .filter(|&i| i < 13)
        .ok_or_else(|| Failure::Config(Error::ConstraintViolation("column".into())))?;
    Ok(series
        .iter()
        .map(|r| if r.trusted { r.floats()[idx] } else { f64::NAN })
        .collect())
}

fn cmd_fit(csv: &Path, model: ModelArg, col: &str, from: Option<f64>, to: Option<f64>) -> Result<(), Failure> {
    let series = io::read_series(csv).map_err(Failure::Config)?;
    let t: Vec<f64> = series.iter().map(|r| r.t).collect();
    let y = column(&series, col)?;
    let model = match model {
        ModelArg::Power => Model::PowerLaw,
        ModelArg::Exp => Model::Exponential,
    };
    let window = match (from, to) {
        (Some(a), Some(b)) => (a, b),
        (a, b) => {
            let w = fit::detect_algebraic_window(&t, &y, &WindowOptions::default()).map_err(runtime)?;
            (a.unwrap_or(w.0), b.unwrap_or(w.1))
        }
    };
    let f = fit::fit_rate(&t, &y, window, model).map_err(runtime)?;
    println!("{}", io::to_json(&f).map_err(runtime)?);
    Ok(())
}

fn cmd_report(dir: &Path) -> Result<(), Failure> {
    let series = io::read_series(&dir.join(io::SERIES_FILE)).map_err(Failure::Config)?;
    let manifest: io::RunManifest = io::read_json(&dir.join(io::MANIFEST_FILE)).map_err(Failure::Config)?;
    let phases: Option<PhaseReport> = io::read_json(&dir.join(io::PHASES_FILE)).ok();
    let s = io::parse_config_str(&manifest.config).map_err(Failure::Config)?;
    let phase = match manifest.problem {
        Problem::TorusBump => Phase::Bump,
        Problem::LineBump => Phase::Glued,
        Problem::SubTwoEStar => Phase::MinusOne,
    };
    let meta = inequality::ReportMeta {
        l: s.l,
        n: s.n,
        scenario: s.id.clone(),
    };
    let nash = inequality::check_nash(&series, phase, f64::INFINITY, 10.0).with_meta(meta.clone());
    let diss = inequality::check_dissipation_bounds(&series, phase, 0.5, 20.0);
    let mut reports = vec![nash, diss.by_energy.with_meta(meta.clone())];
    if let Ok((ode, _)) = inequality::check_ode_decay(&series, phase, &WindowOptions::default(), f64::INFINITY) {
        reports.push(ode.with_meta(meta));
    }
    println!("scenario {} ({}), hash {}", manifest.scenario_id, manifest.problem, manifest.config_hash);
    println!("snapshots {}, steps {}", manifest.snapshots, manifest.steps_accepted);
    if let Some(p) = &phases {
        let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4e}"));
        println!("T0 {}  T1 {}  T2 {}", f(p.t0), f(p.t1), f(p.t2));
        if let Some(a) = &p.algebraic {
            println!("algebraic slope {:.4} on [{:.3e}, {:.3e}]", a.exponent, a.window.0, a.window.1);
        }
        if let Some(e) = &p.exponential {
            println!("exponential rate {:.4e} (R² {:.4})", e.rate, e.r2);
        }
    }
    for r in &reports {
        println!(
            "{:<12} worst {:.4e} cap {:e} {} ({} excluded)",
            r.name,
            r.worst,
            r.cap,
            if r.passed { "ok" } else { "EXCEEDED" },
            r.excluded
        );
    }
    io::emit_report(&reports, &dir.join("report.json")).map_err(runtime)?;
    Ok(())
}

fn cmd_profile(config: &Path, dir: &Path) -> Result<(), Failure> {
    let s = load(config)?;
    let init = experiments::build_initial(&s).map_err(runtime)?;
    std::fs::create_dir_all(dir).map_err(|e| runtime(e.into()))?;
    io::emit_field_csv(&init.u0, &dir.join("u0.csv")).map_err(runtime)?;
    io::emit_field_csv(&init.base, &dir.join("profile.csv")).map_err(runtime)?;
    io::emit_field_csv(&init.reference, &dir.join("glued.csv")).map_err(runtime)?;
    println!(
        "E(u0) = {:.10} (budget {:.10}), W0 measured {:.6} (target {})",
        init.energy, init.budget, init.w0_measured, s.w0
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    par::configure_threads_from_env();
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let res = match &cli.command {
        Command::Run { config, out } => cmd_run(config, out, exec),
        Command::Check { config, out } => cmd_check(config, out, exec),
        Command::Fit {
            csv,
            model,
            column,
            from,
            to,
        } => cmd_fit(csv, *model, column, *from, *to),
        Command::Report { dir } => cmd_report(dir),
        Command::Profile { config, out } => cmd_profile(config, out),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code())
        }
    }
}
