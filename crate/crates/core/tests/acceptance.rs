//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::f64::consts::SQRT_2;
use std::process::ExitCode;
use std::time::Instant;

use chflow::backward::{self, BackwardConfig};
use chflow::experiments::{self, PhaseReport, Problem, RunOutput, Scenario};
use chflow::fit::{self, Model};
use chflow::functionals::{self, DiagnosticsRecord};
use chflow::grid::{Field, Grid};
use chflow::inequality::{self, EedSample, Phase};
use chflow::io;
use chflow::par::Execution;
use chflow::potential;
use chflow::profiles;
use chflow::solver::{self, SolverConfig};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn run(s: &Scenario) -> RunOutput {
    experiments::run(s, Execution::Parallel).unwrap_or_else(|e| panic!("{}: {e}", s.id))
}

fn phases(out: &RunOutput) -> Result<PhaseReport, String> {
    experiments::detect_phases(&out.series, &out.scenario).map_err(|e| format!("{}: {e}", out.scenario.id))
}

fn sup<F: Fn(&DiagnosticsRecord) -> f64>(series: &[DiagnosticsRecord], f: F) -> f64 {
    series
        .iter()
        .filter(|r| r.trusted)
        .map(f)
        .filter(|x| x.is_finite())
        .fold(0.0, f64::max)
}

/// Composite Simpson rule on `[a, b]` with `m` (even) panels.
fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Relative energy-balance errors `|ΔE + ∫D| / |ΔE|` over snapshot intervals
/// where `|ΔE|` is resolvable.
fn balance_errors(out: &RunOutput, min_drop: f64) -> Vec<f64> {
    let tr = &out.trajectory;
    let steps = &tr.steps;
    let mut errors = Vec::new();
    let mut k = 0;
    for i in 1..tr.times.len() {
        let (a, b) = (tr.times[i - 1], tr.times[i]);
        while k < steps.len() && steps[k].t < a {
            k += 1;
        }
        let mut integral = 0.0;
        let mut j = k;
        while j + 1 < steps.len() && steps[j + 1].t <= b {
            let (s0, s1) = (&steps[j], &steps[j + 1]);
            integral += 0.5 * (s0.dissipation + s1.dissipation) * (s1.t - s0.t);
            j += 1;
        }
        let de = tr.energies[i] - tr.energies[i - 1];
        if de.abs() >= min_drop {
            errors.push((de + integral).abs() / de.abs());
        }
    }
    errors
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(0.0, f64::max)
}

fn c1_kink_energy() -> Verdict {
    let start = Instant::now();
    let p = potential::quartic();
    let e = profiles::kink_energy(&p);
    let secs = start.elapsed().as_secs_f64();
    let g = |u: f64| 0.25 * (1.0 - u * u).powi(2);
    let oracle = simpson(|x| 2.0 * g((x / SQRT_2).tanh()), -60.0, 60.0, 200_000);
    let passed = (e - 0.9428090).abs() <= 1e-6 && (e - oracle).abs() <= 1e-6 && secs < 1.0;
    verdict(passed, format!("e* = {e:.9}, oracle {oracle:.9}, {secs:.3} s"))
}

fn c2_stationarity() -> Verdict {
    let start = Instant::now();
    let p = potential::quartic();
    let grid = Grid::new(32.0, 1024).unwrap();
    let w = profiles::solve_bump(&grid, &p, 0.0).unwrap();
    let res = w.residual();
    let d = functionals::dissipation(w.samples(), &p);
    let mut cfg = SolverConfig::for_potential(&p, 1.0);
    cfg.dt = 1e-2;
    cfg.adapt = false;
    let u1 = solver::step(w.samples(), &cfg, &p).unwrap();
    let moved = u1.sub(w.samples()).linf_norm();
    let secs = start.elapsed().as_secs_f64();
    let passed = res <= 1e-9 && d <= 1e-18 && moved <= 1e-9 * cfg.dt && secs < 5.0;
    verdict(
        passed,
        format!("EL residual {res:.2e}, D {d:.2e}, step moved {moved:.2e} (dt {}), {secs:.2} s", cfg.dt),
    )
}

fn c3_conservation(reference: &RunOutput) -> Verdict {
    let tr = &reference.trajectory;
    let m0 = reference.initial.u0.mean();
    let drift = tr.means.iter().map(|m| (m - m0).abs()).fold(0.0, f64::max);
    let rise = tr
        .steps
        .windows(2)
        .map(|w| w[1].energy - w[0].energy)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut refined = reference.scenario.clone();
    refined.id = "torus-ref-dt2".into();
    refined.solver.tolerance *= 0.25;
    refined.solver.dt_max *= 0.5;
    refined.solver.dt *= 0.5;
    let fine = run(&refined);

    let min_drop = 1e-9;
    let coarse_err = max_of(&balance_errors(reference, min_drop));
    let fine_err = max_of(&balance_errors(&fine, min_drop));
    let secs = reference.wall_seconds;
    let passed = drift <= 1e-13 && rise <= 1e-12 && coarse_err <= 0.05 && fine_err <= 0.05 && secs < 600.0;
    verdict(
        passed,
        format!(
            "mean drift {drift:.2e}, max step energy change {rise:.2e}, balance error {coarse_err:.3e} \
             (refined {fine_err:.3e}), {} steps, {secs:.0} s",
            tr.accepted
        ),
    )
}

fn c4_algebraic(ph: &Result<PhaseReport, String>) -> Verdict {
    let ph = match ph {
        Ok(ph) => ph,
        Err(e) => return verdict(false, e.clone()),
    };
    match &ph.algebraic {
        Some(f) => verdict(
            (f.exponent + 0.5).abs() <= 0.15,
            format!(
                "slope {:.4} on [{:.3e}, {:.3e}] ({} points, R² {:.4})",
                f.exponent, f.window.0, f.window.1, f.points, f.r2
            ),
        ),
        None => verdict(false, format!("no algebraic window: {:?}", ph.notes)),
    }
}

fn c5_excess_mass(reference: &RunOutput, variants: &[RunOutput]) -> Verdict {
    let mut passed = true;
    let mut parts = Vec::new();
    for out in std::iter::once(reference).chain(variants) {
        let s = &out.scenario;
        let v = sup(&out.series, |r| r.v);
        let cap = 10.0 * (s.w0 + 1.0);
        passed &= v <= cap;
        parts.push(format!("W0={}: sup V {v:.3} (cap {cap})", s.w0));
    }
    verdict(passed, parts.join("; "))
}

fn c6_exponential(runs: &[RunOutput], secs: f64) -> Verdict {
    let mut passed = true;
    let mut scaled = Vec::new();
    let mut parts = Vec::new();
    for out in runs {
        let l = out.scenario.l;
        let ph = match phases(out) {
            Ok(ph) => ph,
            Err(e) => return verdict(false, e),
        };
        match &ph.exponential {
            Some(f) => {
                let r = f.rate;
                passed &= f.r2 >= 0.99;
                scaled.push(r * l * l);
                parts.push(format!("L={l}: λL² {:.3} (R² {:.5}, {} pts)", r * l * l, f.r2, f.points));
            }
            None => {
                passed = false;
                parts.push(format!("L={l}: no exponential fit {:?}", ph.notes));
            }
        }
    }
    let lo = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scaled.iter().cloned().fold(0.0, f64::max);
    passed &= scaled.len() == runs.len() && hi / lo <= 5.0 && secs < 900.0;
    verdict(passed, format!("{}; band ratio {:.3}; {secs:.0} s", parts.join(", "), hi / lo))
}

fn c7_shift(reference: &RunOutput, ph: &Result<PhaseReport, String>) -> Verdict {
    let ph = match ph {
        Ok(ph) => ph,
        Err(e) => return verdict(false, e.clone()),
    };
    let s = &reference.scenario;
    let grid = s.grid().unwrap();
    // the shift settles with the gap: its exponential tail starts at T1
    let Some(t1) = ph.t1 else {
        return verdict(false, "T1 not detected".into());
    };
    let tail = experiments::shift_tail_fit(&reference.series, t1, s.exp_floor);
    let c0 = reference.series[0].shift_c;
    let delta_c = reference
        .series
        .iter()
        .filter(|r| r.shift_c.is_finite())
        .map(|r| grid.periodic_delta(r.shift_c, c0).abs())
        .fold(0.0, f64::max);
    let cap = 10.0 * (s.w0 + 1.0);
    match tail {
        Ok(f) => verdict(
            f.r2 >= 0.95 && delta_c <= cap,
            format!(
                "tail rate {:.4e} on [{:.1}, {:.1}] (R² {:.4}, {} pts), Δc {delta_c:.4} (cap {cap})",
                f.rate,
                f.window.0,
                f.window.1,
                f.r2,
                f.points
            ),
        ),
        Err(e) => verdict(false, format!("tail fit failed: {e}")),
    }
}

fn c8_nash(reference: &RunOutput, doubled: &RunOutput) -> Verdict {
    let a = inequality::check_nash(&reference.series, Phase::Bump, f64::INFINITY, 10.0);
    let b = inequality::check_nash(&doubled.series, Phase::Bump, f64::INFINITY, 10.0);
    let change = (b.worst - a.worst).abs() / a.worst;
    verdict(
        a.passed && b.passed && change <= 0.05,
        format!(
            "max ratio {:.4} (n={}), {:.4} (n={}), change {:.2}%",
            a.worst,
            reference.scenario.n,
            b.worst,
            doubled.scenario.n,
            100.0 * change
        ),
    )
}

fn c9_dissipation(reference: &RunOutput) -> Verdict {
    let b = inequality::check_dissipation_bounds(&reference.series, Phase::Bump, 0.5, 20.0);
    let r = &b.by_energy;
    verdict(
        r.passed,
        format!("max ratio {:.4} over {} snapshots ({} excluded)", r.worst, r.included(), r.excluded),
    )
}

fn c10_eed(reference: &RunOutput, ph: &Result<PhaseReport, String>) -> Verdict {
    let ph = match ph {
        Ok(ph) => ph,
        Err(e) => return verdict(false, e.clone()),
    };
    let Some(t2) = ph.t2 else {
        return verdict(false, "T2 not reached".into());
    };
    let s = &reference.scenario;
    let bump = reference.bump().expect("torus run has a bump");
    let samples: Vec<EedSample> = reference
        .series
        .iter()
        .zip(&reference.trajectory.fields)
        .filter(|(r, _)| r.t >= t2 && r.trusted && r.gap_bump > s.exp_floor)
        .map(|(r, u)| EedSample {
            t: r.t,
            u: u.clone(),
            profile: bump.translated(r.shift_c).samples().clone(),
        })
        .collect();
    let p = potential::quartic();
    match inequality::check_eed(&samples, &p, Phase::Bump, s.l, s.eps_phase / s.l, 25.0) {
        Ok(rep) => verdict(
            rep.passed && rep.excluded == 0,
            format!(
                "ratio ∫f²+f_x² / ℰ in [{:.4}, {:.4}] over {} snapshots ({} excluded)",
                rep.details["energy_ratio_min"],
                rep.details["energy_ratio_max"],
                rep.included(),
                rep.excluded
            ),
        ),
        Err(e) => verdict(false, format!("{e}")),
    }
}

fn c11_spectrum() -> Verdict {
    let start = Instant::now();
    let p = potential::quartic();
    let rep = |l: f64| {
        let grid = Grid::new(l, (32.0 * l) as usize).unwrap();
        let w = profiles::solve_bump(&grid, &p, 0.0).unwrap();
        inequality::check_linearization_spectrum(&w, &p).unwrap()
    };
    let r16 = rep(16.0);
    let r32 = rep(32.0);
    let ratio = r32.lambda2 / r16.lambda2;
    let secs = start.elapsed().as_secs_f64();
    let passed = r32.lambda1.abs() <= 1e-6
        && r16.lambda1.abs() <= 1e-6
        && r32.overlap >= 0.999
        && r16.overlap >= 0.999
        && ratio.abs() <= 0.1
        && r32.lambda3 >= 0.1
        && r16.lambda3 >= 0.1
        && secs < 30.0;
    verdict(
        passed,
        format!(
            "λ1 {:.2e}/{:.2e}, overlap {:.6}/{:.6}, λ2 {:.3e}/{:.3e} (ratio {ratio:.3e}), λ3 {:.4}/{:.4}, {secs:.1} s",
            r16.lambda1, r32.lambda1, r16.overlap, r32.overlap, r16.lambda2, r32.lambda2, r16.lambda3, r32.lambda3
        ),
    )
}

fn c12_backward() -> Verdict {
    let start = Instant::now();
    // jumps at ±L/2, far enough apart that the heat tails overlap below 1e-10
    let l = 1024.0;
    let grid = Grid::new(l, 1 << 18).unwrap();
    let terminal = Field::from_fn(&grid, |x| if x.abs() < 0.5 * l { 1.0 } else { -1.0 });
    let g2 = potential::quartic().gpp_plus();
    let log_taus = |a: f64, b: f64| -> Vec<f64> { (0..=16).map(|i| a * (b / a).powf(i as f64 / 16.0)).collect() };
    let small = log_taus(1e-4, 1e-2);
    let large = log_taus(1e1, 1e3);
    let mut taus = small.clone();
    taus.extend(&large);
    let cfg = BackwardConfig {
        g2,
        horizon: 1e3,
        terminal,
        taus,
    };
    let tr = backward::solve_backward(&cfg, Execution::Parallel).unwrap();
    let k = small.len();
    let slope = |t: &[f64], y: &[f64]| fit::fit_rate(t, y, (t[0], t[t.len() - 1]), Model::PowerLaw).unwrap();
    let fs = slope(&tr.tau[..k], &tr.zeta_xx_sup[..k]);
    let fl = slope(&tr.tau[k..], &tr.zeta_xx_sup[k..]);

    // boundary wrap: the same jumps on a doubled domain, compared at the horizon
    let wide = BackwardConfig {
        g2,
        horizon: 1e3,
        terminal: Field::from_fn(&Grid::new(2.0 * l, 1 << 19).unwrap(), |x| {
            if x.abs() < 0.5 * l {
                1.0
            } else {
                -1.0
            }
        }),
        taus: vec![1e3],
    };
    let wide = backward::solve_backward(&wide, Execution::Parallel).unwrap();
    let wrap = (wide.zeta_xx_sup[0] - tr.zeta_xx_sup[tr.tau.len() - 1]).abs();
    let secs = start.elapsed().as_secs_f64();
    let passed = (fs.exponent + 0.5).abs() <= 0.1 && (fl.exponent + 1.0).abs() <= 0.1 && wrap < 1e-10 && secs < 60.0;
    verdict(
        passed,
        format!(
            "small-τ exponent {:.4}, large-τ exponent {:.4}, wrap {wrap:.1e}, {secs:.1} s",
            fs.exponent, fl.exponent
        ),
    )
}

fn c13_sub_two(out: &RunOutput, secs: f64) -> Verdict {
    let ph = match phases(out) {
        Ok(ph) => ph,
        Err(e) => return verdict(false, e),
    };
    let v = sup(&out.series, |r| r.v_minus);
    let cap = 10.0 * (out.initial.v_minus0 + 1.0);
    match &ph.algebraic {
        Some(f) => verdict(
            (f.exponent + 0.5).abs() <= 0.2 && v <= cap && secs < 300.0,
            format!(
                "slope {:.4} on [{:.3e}, {:.3e}], sup V₋ {v:.4} (cap {cap:.1}), {secs:.0} s",
                f.exponent, f.window.0, f.window.1
            ),
        ),
        None => verdict(false, format!("no algebraic window: {:?}", ph.notes)),
    }
}

fn c14_line(out: &RunOutput) -> Verdict {
    let ph = match phases(out) {
        Ok(ph) => ph,
        Err(e) => return verdict(false, e),
    };
    let s = &out.scenario;
    let v = sup(&out.series, |r| r.v_tilde);
    let cap = 10.0 * (s.w0 + 1.0);
    let need = s.l * s.l / 20.0;
    match &ph.plateau {
        Some(p) => verdict(
            p.length >= need && v <= cap,
            format!(
                "plateau [{:.1}, {:.1}] length {:.1} (need {need}), max |E - 2e*| {:.4}, sup Ṽ {v:.3} (cap {cap})",
                p.start, p.end, p.length, p.max_deviation
            ),
        ),
        None => verdict(false, format!("no plateau: {:?}", ph.notes)),
    }
}

fn c15_reproducible(first: &RunOutput) -> Verdict {
    let again = run(&first.scenario);
    let a = io::series_to_csv(&first.series);
    let b = io::series_to_csv(&again.series);
    verdict(
        a == b,
        format!("{}: {} rows, identical = {}", first.scenario.id, first.series.len(), a == b),
    )
}

fn report(results: &mut Vec<bool>, id: usize, name: &str, v: Verdict) {
    println!("{} {id:>2} {name}: {}", if v.passed { "PASS" } else { "FAIL" }, v.detail);
    results.push(v.passed);
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut results = Vec::new();
    report(&mut results, 1, "kink energy", c1_kink_energy());
    report(&mut results, 2, "stationarity", c2_stationarity());
    report(&mut results, 11, "linearization spectrum", c11_spectrum());
    report(&mut results, 12, "backward semigroup", c12_backward());

    let reference = run(&Scenario::torus_reference());
    let ph = phases(&reference);
    report(&mut results, 3, "conservation and monotonicity", c3_conservation(&reference));
    report(&mut results, 4, "algebraic decay exponent", c4_algebraic(&ph));
    let variants = experiments::w0_sweep(&[2.0, 8.0], Execution::Parallel)
        .into_iter()
        .map(|r| r.expect("W0 variant"))
        .collect::<Vec<_>>();
    report(&mut results, 5, "excess-mass boundedness", c5_excess_mass(&reference, &variants));
    let start = Instant::now();
    let l_runs = experiments::l_sweep(&[16.0, 24.0, 32.0], Execution::Parallel)
        .into_iter()
        .map(|r| r.expect("L variant"))
        .collect::<Vec<_>>();
    report(
        &mut results,
        6,
        "exponential regime scaling",
        c6_exponential(&l_runs, start.elapsed().as_secs_f64()),
    );
    report(&mut results, 7, "shift convergence", c7_shift(&reference, &ph));
    let mut doubled = reference.scenario.clone();
    doubled.id = "torus-ref-n2".into();
    doubled.n *= 2;
    let doubled = run(&doubled);
    report(&mut results, 8, "Nash inequality", c8_nash(&reference, &doubled));
    report(&mut results, 9, "dissipation by energy", c9_dissipation(&reference));
    report(&mut results, 10, "EED two-sidedness", c10_eed(&reference, &ph));
    drop(doubled);

    let start = Instant::now();
    let sub2 = run(&Scenario::reference(Problem::SubTwoEStar));
    let secs = start.elapsed().as_secs_f64();
    report(&mut results, 13, "sub-2e* collapse", c13_sub_two(&sub2, secs));
    let line = run(&Scenario::reference(Problem::LineBump));
    report(&mut results, 14, "line metastability", c14_line(&line));
    report(&mut results, 15, "reproducibility", c15_reproducible(&sub2));

    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
