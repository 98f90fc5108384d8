//! Reproducible scenarios: initial data, runs with per-snapshot
//! diagnostics, phase detection and sweeps.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{self, FitResult, Model, WindowOptions};
use crate::functionals::{self, DiagnosticsRecord};
use crate::grid::{Field, Grid};
use crate::manifold::{self, GluedFrame};
use crate::par::Execution;
use crate::potential::{self, PotentialSpec};
use crate::profiles::{self, BumpProfile, ProfileHandle};
use crate::quadrature;
use crate::solver::{self, SnapshotSchedule, SolverConfig, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Problem {
    /// Bump on the torus `[-L, L)` with a mean constraint.
    TorusBump,
    /// Bump of width `L` on a torus of half-length `Λ L` standing in for the line.
    LineBump,
    /// No interfaces: a sub-`2e_*` perturbation of `-1` on a large torus.
    SubTwoEStar,
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Problem::TorusBump => "torus",
            Problem::LineBump => "line",
            Problem::SubTwoEStar => "sub2",
        })
    }
}

impl FromStr for Problem {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "torus" => Ok(Problem::TorusBump),
            "line" => Ok(Problem::LineBump),
            "sub2" => Ok(Problem::SubTwoEStar),
            _ => Err(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    /// Positive smoothed bump.
    Bump,
    /// Negative smoothed bump.
    Dip,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::Bump => "bump",
            Shape::Dip => "dip",
        })
    }
}

impl FromStr for Shape {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "bump" => Ok(Shape::Bump),
            "dip" => Ok(Shape::Dip),
            _ => Err(()),
        }
    }
}

/// `± A exp(1 - 1/(1 - s²))` with `s = (x - x_d) / width`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub shape: Shape,
    pub amplitude: f64,
    /// Half-width of the support; `None` sizes it so the mass equals `W₀`.
    pub width: Option<f64>,
    /// Distance from the right interface (torus, line) or from the origin
    /// (sub-`2e_*`); `None` means `L/2 + 2` resp. `0`.
    pub offset: Option<f64>,
}

/// 24 snapshots per decade from `t = 10⁻²`: enough for phase detection on
/// horizons from `10³` up and for fits over fractions of a decade.
fn dense_schedule() -> SnapshotSchedule {
    SnapshotSchedule::LogSpaced {
        t_first: 1e-2,
        per_decade: 24,
    }
}

/// `∫_{-1}^{1} exp(1 - 1/(1 - s²)) ds`.
pub fn bump_shape_integral() -> f64 {
    quadrature::integrate(smooth_bump, -1.0, 1.0, 1e-15).0
}

fn smooth_bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub problem: Problem,
    pub l: f64,
    /// Domain factor: the line surrogates live on `[-Λ L, Λ L)`.
    pub lambda: f64,
    pub n: usize,
    /// Mean constraint on the torus.
    pub mean: f64,
    pub disturbance: Disturbance,
    pub w0: f64,
    /// Margin in `E(u₀) ≤ 4 e_* - ε`.
    pub epsilon: f64,
    /// `T₂` threshold is `ℰ ≤ eps_phase / L`.
    pub eps_phase: f64,
    pub t0_gap: f64,
    pub t0_linf: f64,
    /// Cap in `sup V ≤ v_cap (W₀ + 1)`.
    pub v_cap: f64,
    pub tail_sentinel: f64,
    /// Gaps below this are excluded from exponential fits.
    pub exp_floor: f64,
    /// Amplitude of optional band-limited random noise.
    pub noise: f64,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl Scenario {
    fn base(id: &str, problem: Problem, l: f64, lambda: f64, n: usize, t_end: f64) -> Scenario {
        let p = potential::quartic();
        Scenario {
            id: id.into(),
            problem,
            l,
            lambda,
            n,
            mean: 0.0,
            disturbance: Disturbance {
                shape: Shape::Bump,
                amplitude: 1.0,
                width: None,
                offset: None,
            },
            w0: 4.0,
            epsilon: 0.2 * profiles::kink_energy(&p),
            eps_phase: 0.1,
            t0_gap: 0.05,
            t0_linf: 0.2,
            v_cap: 10.0,
            tail_sentinel: 1e-8,
            exp_floor: 1e-12,
            noise: 0.0,
            seed: 0,
            solver: SolverConfig {
                schedule: dense_schedule(),
                ..SolverConfig::for_potential(&p, t_end)
            },
        }
    }

    /// `L = 64`, `n = 4096`, `W₀ = 4`, `t_end = 2·10⁴`.
    pub fn torus_reference() -> Scenario {
        Scenario::base("torus-ref", Problem::TorusBump, 64.0, 1.0, 4096, 2e4)
    }

    /// Torus reference with a different disturbance mass.
    pub fn torus_with_w0(w0: f64) -> Scenario {
        let mut s = Scenario::torus_reference();
        s.id = format!("torus-w0-{w0}");
        s.w0 = w0;
        // shallow disturbances cost about 0.62·A·W₀ of energy; A = 2.4/W₀
        // keeps that near 1.5, inside the budget left by two kinks
        s.disturbance.amplitude = (2.4 / w0).min(1.0);
        s
    }

    /// Smaller torus with `n` the next power of two `≥ 16 L`.
    pub fn torus_with_l(l: f64) -> Scenario {
        let n = ((16.0 * l).ceil() as usize).next_power_of_two();
        let mut s = Scenario::base(&format!("torus-l{l}"), Problem::TorusBump, l, 1.0, n, 40.0 * l * l);
        s.w0 = 2.0;
        s
    }

    /// `L = 32` bump on `[-256, 256)`.
    pub fn line_reference() -> Scenario {
        Scenario::base("line-ref", Problem::LineBump, 32.0, 8.0, 4096, 1000.0)
    }

    /// Sub-`2e_*` collapse on `[-512, 512)`.
    pub fn sub_two_reference() -> Scenario {
        let mut s = Scenario::base("sub2-ref", Problem::SubTwoEStar, 16.0, 32.0, 8192, 1000.0);
        s.w0 = 6.0;
        s.disturbance.amplitude = 0.6;
        s
    }

    pub fn reference(problem: Problem) -> Scenario {
        match problem {
            Problem::TorusBump => Scenario::torus_reference(),
            Problem::LineBump => Scenario::line_reference(),
            Problem::SubTwoEStar => Scenario::sub_two_reference(),
        }
    }

    /// Half-length of the computational torus.
    pub fn domain_half_length(&self) -> f64 {
        match self.problem {
            Problem::TorusBump => self.l,
            Problem::LineBump | Problem::SubTwoEStar => self.lambda * self.l,
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.domain_half_length(), self.n)
    }

    /// `m` on the torus, `∫(u + 1) = 2L` on the line, the disturbance mass
    /// for the sub-`2e_*` problem.
    pub fn constraint_value(&self) -> f64 {
        match self.problem {
            Problem::TorusBump => self.mean,
            Problem::LineBump => 2.0 * self.l,
            Problem::SubTwoEStar => self.w0,
        }
    }

    pub fn frame(&self) -> GluedFrame {
        match self.problem {
            Problem::TorusBump => GluedFrame::Torus,
            _ => GluedFrame::Line { l: self.l },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |k: &str| Err(Error::ConstraintViolation(k.into()));
        if !(self.l > 0.0 && self.l.is_finite()) {
            return bad("L");
        }
        if !(self.lambda >= 1.0 && self.lambda.is_finite()) {
            return bad("Lambda");
        }
        if self.n < 8 || !self.n.is_power_of_two() {
            return bad("n");
        }
        if !(self.mean.abs() <= 0.75) {
            return bad("mean");
        }
        if !(self.disturbance.amplitude >= 0.0 && self.disturbance.amplitude.is_finite()) {
            return bad("amplitude");
        }
        if let Some(w) = self.disturbance.width {
            if !(w > 0.0 && w.is_finite()) {
                return bad("width");
            }
        }
        if !(self.w0 >= 0.0 && self.w0.is_finite()) {
            return bad("w0");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon");
        }
        if !(self.eps_phase > 0.0) {
            return bad("eps_phase");
        }
        if !(self.t0_gap > 0.0) {
            return bad("t0_gap");
        }
        if !(self.t0_linf > 0.0) {
            return bad("t0_linf");
        }
        if !(self.v_cap > 0.0) {
            return bad("v_cap");
        }
        if !(self.tail_sentinel > 0.0) {
            return bad("tail_sentinel");
        }
        if !(self.exp_floor > 0.0) {
            return bad("exp_floor");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise");
        }
        self.solver.validate(&potential::quartic())
    }

    fn disturbance_width(&self, shape_integral: f64) -> f64 {
        match self.disturbance.width {
            Some(w) => w,
            None if self.disturbance.amplitude > 0.0 => self.w0 / (self.disturbance.amplitude * shape_integral),
            None => 1.0,
        }
    }

    fn disturbance_offset(&self) -> f64 {
        match (self.disturbance.offset, self.problem) {
            (Some(o), _) => o,
            (None, Problem::SubTwoEStar) => 0.0,
            (None, _) => 0.5 * self.l + 2.0,
        }
    }
}

/// Constructed initial data and what was measured about it.
#[derive(Clone, Debug)]
pub struct InitialData {
    pub u0: Field,
    /// Undisturbed profile: `w`, the glued line profile, or `-1`.
    pub base: Field,
    /// Interface-shifted glued profile `w̃₀` (or `-1`).
    pub reference: Field,
    pub reference_handle: Option<ProfileHandle>,
    /// `∫|u₀ - w̃₀|`.
    pub w0_measured: f64,
    /// `∫|u₀ - base|`.
    pub w0_vs_base: f64,
    /// Measured `W₀` within 10% of the target.
    pub w0_on_target: bool,
    pub energy: f64,
    pub budget: f64,
    /// Amplitude of the even corrector `1 - w̃₀²` that fixes the last
    /// round-off in the constraint.
    pub corrector_amplitude: f64,
    /// Outward displacement of each interface that absorbs the disturbance mass.
    pub interface_shift: f64,
    /// `|mean(u₀) - target|` after correction.
    pub constraint_error: f64,
    pub v_minus0: f64,
    /// `‖u₀ - base‖_{Ḣ⁻¹}`.
    pub h0: f64,
    pub bump: Option<BumpProfile>,
}

pub fn build_initial(s: &Scenario) -> Result<InitialData> {
    s.validate()?;
    let p = potential::quartic();
    let e_star = profiles::kink_energy(&p);
    let grid = s.grid()?;
    let dl = grid.half_length();
    let shape_integral = bump_shape_integral();
    let width = s.disturbance_width(shape_integral);
    let offset = s.disturbance_offset();

    let (base, bump, interfaces) = match s.problem {
        Problem::TorusBump => {
            let w = profiles::solve_bump(&grid, &p, s.mean)?;
            let (a, b) = w.zeros();
            (w.samples().clone(), Some(w), Some((a, b)))
        }
        Problem::LineBump => {
            let half = 0.5 * s.l;
            let g = profiles::glue_kinks_with(&p, 0.0, -half, half, half, false)?;
            (g.sample(&grid), None, Some((-half, half)))
        }
        Problem::SubTwoEStar => (Field::constant(&grid, -1.0), None, None),
    };

    let centre = match interfaces {
        Some((_, b)) => grid.wrap(b + offset),
        None => grid.wrap(offset),
    };
    // support margins
    let margin = 4.0;
    if let Some((a, b)) = interfaces {
        for z in [a, b] {
            if grid.periodic_delta(centre, z).abs() < width + margin {
                return Err(Error::ConstraintViolation("offset".into()));
            }
        }
    }
    if s.problem != Problem::TorusBump && dl - (centre.abs() + width) < margin {
        return Err(Error::ConstraintViolation("offset".into()));
    }

    let sign = match s.disturbance.shape {
        Shape::Bump => 1.0,
        Shape::Dip => -1.0,
    };
    let amp = s.disturbance.amplitude;
    let mut pert = Field::from_fn(&grid, |x| sign * amp * smooth_bump(grid.periodic_delta(x, centre) / width));
    let mut perturbed = amp > 0.0;
    if s.noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        let modes: Vec<(f64, f64)> = (0..8)
            .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let k0 = std::f64::consts::PI / dl;
        let noise = s.noise;
        pert = pert.zip_map(
            &Field::from_fn(&grid, |x| {
                modes
                    .iter()
                    .enumerate()
                    .map(|(j, (c, d))| {
                        let k = k0 * (j + 1) as f64;
                        noise * (c * (k * x).cos() + d * (k * x).sin())
                    })
                    .sum()
            }),
            |a, b| a + b,
        );
        perturbed = true;
    }

    // glued profile with both interfaces pushed outward by `delta`
    let glue_at = |delta: f64| -> Result<(Field, ProfileHandle)> {
        let (a, b) = interfaces.expect("only called with interfaces");
        let (alpha, beta) = (a - delta, b + delta);
        let (l, torus) = match s.problem {
            Problem::TorusBump => (s.l, true),
            _ => (0.5 * s.l, false),
        };
        let g = profiles::glue_kinks_with(&p, 0.5 * (alpha + beta), alpha, beta, l, torus)?;
        Ok((g.sample(&grid), g.handle()))
    };

    let period = grid.period();
    let target_mean = match s.problem {
        Problem::TorusBump => s.mean,
        Problem::LineBump => s.constraint_value() / period - 1.0,
        Problem::SubTwoEStar => base.mean() + pert.mean(),
    };
    let mut corrector_amplitude = 0.0;
    let mut delta = 0.0;
    let (mut u0, reference, reference_handle) = match interfaces {
        None => (base.add(&pert), Field::constant(&grid, -1.0), None),
        Some(_) if !perturbed => {
            let (r, h) = glue_at(0.0)?;
            (base.clone(), r, Some(h))
        }
        Some(_) => {
            // move the interfaces until the mass matches, then absorb the
            // remaining round-off with the even corrector
            let pert_mass = pert.integral();
            let excess = |d: f64| -> Result<f64> { Ok(glue_at(d)?.0.integral() + pert_mass - target_mean * period) };
            let (mut d0, mut f0) = (0.0, excess(0.0)?);
            let mut d1 = -f0 / 4.0;
            let mut f1 = excess(d1)?;
            let mut it = 0;
            while f1.abs() > 1e-12 * period {
                it += 1;
                if it > 30 || f1 == f0 {
                    return Err(Error::ConstraintCorrectionFailed(format!(
                        "interface shift did not converge (mass error {f1:e})"
                    )));
                }
                let d2 = d1 - f1 * (d1 - d0) / (f1 - f0);
                (d0, f0) = (d1, f1);
                d1 = d2;
                f1 = excess(d1)?;
            }
            delta = d1;
            let (r, h) = glue_at(delta)?;
            (r.add(&pert), r, Some(h))
        }
    };
    if interfaces.is_some() && perturbed {
        let corrector = reference.map(|w| 1.0 - w * w);
        let weight = corrector.integral();
        if !(weight > 1e-8) {
            return Err(Error::ConstraintCorrectionFailed("corrector has no mass".into()));
        }
        corrector_amplitude = (target_mean - u0.mean()) * period / weight;
        let a = corrector_amplitude;
        u0 = u0.zip_map(&corrector, |u, c| u + a * c);
    }
    let constraint_error = (u0.mean() - target_mean).abs();
    if !(constraint_error <= 1e-13) {
        return Err(Error::ConstraintCorrectionFailed(format!(
            "mean off by {constraint_error:e} after correction"
        )));
    }

    let energy = functionals::energy(&u0, &p);
    let budget = match s.problem {
        Problem::SubTwoEStar => 2.0 * e_star,
        _ => 4.0 * e_star - s.epsilon,
    };
    if !(energy <= budget) || (s.problem == Problem::SubTwoEStar && energy >= budget) {
        return Err(Error::EnergyBudgetExceeded { energy, budget });
    }
    let w0_measured = functionals::excess_mass(&u0, &reference);
    let diff = u0.sub(&base);
    let h0 = functionals::hminus1_norm_unchecked(&diff.map(|v| v - diff.mean()));
    Ok(InitialData {
        w0_vs_base: functionals::excess_mass(&u0, &base),
        w0_on_target: (w0_measured - s.w0).abs() <= 0.1 * s.w0.max(f64::MIN_POSITIVE),
        v_minus0: functionals::excess_mass_minus_one(&u0),
        u0,
        base,
        reference,
        reference_handle,
        w0_measured,
        energy,
        budget,
        corrector_amplitude,
        interface_shift: delta,
        constraint_error,
        h0,
        bump,
    })
}

/// Everything produced by [`run`].
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub scenario: Scenario,
    pub initial: InitialData,
    pub trajectory: Trajectory,
    pub series: Vec<DiagnosticsRecord>,
    /// Glued projection `(q, α, β)` per snapshot when it exists.
    pub glued: Vec<Option<(f64, f64, f64)>>,
    pub wall_seconds: f64,
}

impl RunOutput {
    pub fn bump(&self) -> Option<&BumpProfile> {
        self.initial.bump.as_ref()
    }
}

/// `max |u(±Λ L) + 1|`: the field at the wrap point of the line surrogate.
pub fn tail_value(u: &Field) -> f64 {
    (u.values()[0] + 1.0).abs()
}

struct Context<'a> {
    problem: Problem,
    p: &'a PotentialSpec,
    bump: Option<&'a BumpProfile>,
    frame: GluedFrame,
}

fn diagnose(ctx: &Context, t: f64, u: &Field, e: f64, d: f64) -> Result<(DiagnosticsRecord, Option<(f64, f64, f64)>)> {
    let mut r = DiagnosticsRecord::blank(t);
    r.energy = e;
    r.dissipation = d;
    r.v_minus = functionals::excess_mass_minus_one(u);
    r.xi_sup = functionals::discrepancy_sup(u, ctx.p);
    let g = u.grid();
    let mut reference_zeros = None;
    if let Some(w) = ctx.bump {
        let proj = manifold::project_bump(u, w)?;
        let c = match proj.handle {
            ProfileHandle::Bump { c } => c,
            _ => unreachable!("bump projection returns a bump handle"),
        };
        let wc = w.translated(c);
        r.shift_c = c;
        r.gap_bump = functionals::energy_gap(u, wc.samples(), ctx.p);
        r.v = functionals::excess_mass(u, wc.samples());
        reference_zeros = Some(wc.zeros());
    }
    let mut glued = None;
    if ctx.problem != Problem::SubTwoEStar {
        match manifold::project_glued(u, ctx.p, ctx.frame) {
            Ok(gp) => {
                let wt = gp.profile.sample(g);
                r.gap_glued = functionals::energy_gap(u, &wt, ctx.p);
                r.v_tilde = functionals::excess_mass(u, &wt);
                r.linf_f = u.sub(&wt).linf_norm();
                glued = Some((gp.q, gp.alpha, gp.beta));
                if reference_zeros.is_none() {
                    reference_zeros = Some((gp.alpha, gp.beta));
                }
            }
            Err(Error::NoValidZeros(_)) | Err(Error::SeparationViolated(_)) | Err(Error::InterpolantBoundViolated { .. }) => {}
            Err(e) => return Err(e),
        }
        if let Some(z) = reference_zeros {
            if let Some((a, b)) = manifold::nearest_pair(g, &manifold::find_zeros(u), z) {
                r.zero_a = a;
                r.zero_b = b;
            }
        }
    } else {
        r.linf_f = u.map(|v| v + 1.0).linf_norm();
    }
    Ok((r, glued))
}

/// Build the initial data, evolve and compute diagnostics at every snapshot.
pub fn run(s: &Scenario, exec: Execution) -> Result<RunOutput> {
    let start = Instant::now();
    let initial = build_initial(s)?;
    let p = potential::quartic();
    let mut cfg = s.solver.clone();
    cfg.keep_fields = true;

    // the tail sentinel is checked on the trajectory's own thread
    let line = s.problem != Problem::TorusBump;
    let sentinel = s.tail_sentinel;
    let mut trusted: Vec<bool> = Vec::new();
    let mut ok = true;
    let mut hook = |_: usize, _: f64, u: &crate::grid::Field| -> Result<()> {
        if line && tail_value(u) > sentinel {
            ok = false;
        }
        trusted.push(ok);
        Ok(())
    };
    let trajectory = solver::evolve(&initial.u0, &cfg, &p, &mut hook)?;

    let ctx = Context {
        problem: s.problem,
        p: &p,
        bump: initial.bump.as_ref(),
        frame: s.frame(),
    };
    let idx: Vec<usize> = (0..trajectory.times.len()).collect();
    let rows = exec.map(&idx, |&i| {
        let (t, e, d) = (trajectory.times[i], trajectory.energies[i], trajectory.dissipations[i]);
        if !trusted[i] {
            let mut r = DiagnosticsRecord::blank(t);
            r.energy = e;
            r.dissipation = d;
            r.trusted = false;
            return Ok((r, None));
        }
        diagnose(&ctx, t, &trajectory.fields[i], e, d).map_err(|err| err.at_snapshot(i))
    });
    let mut series = Vec::with_capacity(rows.len());
    let mut glued = Vec::with_capacity(rows.len());
    for row in rows {
        let (r, gl) = row?;
        series.push(r);
        glued.push(gl);
    }
    Ok(RunOutput {
        scenario: s.clone(),
        initial,
        trajectory,
        series,
        glued,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// One trajectory per worker.
pub fn run_sweep(scenarios: &[Scenario], exec: Execution) -> Vec<Result<RunOutput>> {
    exec.map(scenarios, |s| run(s, Execution::Sequential))
}

/// `W₀` variants of the torus reference.
pub fn w0_sweep(w0s: &[f64], exec: Execution) -> Vec<Result<RunOutput>> {
    let s: Vec<Scenario> = w0s.iter().map(|&w| Scenario::torus_with_w0(w)).collect();
    run_sweep(&s, exec)
}

/// `L` variants on the torus.
pub fn l_sweep(ls: &[f64], exec: Execution) -> Vec<Result<RunOutput>> {
    let s: Vec<Scenario> = ls.iter().map(|&l| Scenario::torus_with_l(l)).collect();
    run_sweep(&s, exec)
}

// ---------------------------------------------------------------------------
// phases

/// Thresholds used by [`detect_phases`], echoed into every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseThresholds {
    pub t0_gap: f64,
    pub t0_linf: f64,
    /// `ℰ ≤ t2_gap` marks `T₂` (`= eps_phase / L`).
    pub t2_gap: f64,
    pub exp_floor: f64,
    pub window: WindowOptions,
}

/// Longest trusted run after `T₀` with `|E - 2e_*| ≤ tolerance`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub start: f64,
    pub end: f64,
    pub length: f64,
    pub max_deviation: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub t0: Option<f64>,
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    pub algebraic: Option<FitResult>,
    pub exponential: Option<FitResult>,
    pub plateau: Option<Plateau>,
    pub thresholds: PhaseThresholds,
    /// Phases or fits that were not reached, with the reason.
    pub notes: Vec<String>,
}

/// Gap used for the decay fits of each problem.
pub fn decay_gap(problem: Problem, r: &DiagnosticsRecord) -> f64 {
    if !r.trusted {
        return f64::NAN;
    }
    match problem {
        Problem::TorusBump => r.gap_bump,
        Problem::LineBump => r.gap_glued,
        Problem::SubTwoEStar => r.energy,
    }
}

pub fn detect_phases(series: &[DiagnosticsRecord], s: &Scenario) -> Result<PhaseReport> {
    if series.len() < 100 {
        return Err(Error::InsufficientData(format!(
            "{} snapshots, need at least 100",
            series.len()
        )));
    }
    let thresholds = PhaseThresholds {
        t0_gap: s.t0_gap,
        t0_linf: s.t0_linf,
        t2_gap: s.eps_phase / s.l,
        exp_floor: s.exp_floor,
        window: WindowOptions::default(),
    };
    let mut notes = Vec::new();
    let mut note = |e: Error| notes.push(e.to_string());

    let entry_gap = |r: &DiagnosticsRecord| match s.problem {
        Problem::SubTwoEStar => r.energy,
        _ => r.gap_glued,
    };
    let t0 = series
        .iter()
        .find(|r| r.trusted && entry_gap(r) <= s.t0_gap && r.linf_f <= s.t0_linf)
        .map(|r| r.t);
    if t0.is_none() {
        note(Error::PhaseNotReached("T0".into()));
    }
    let t2 = if s.problem == Problem::TorusBump {
        series
            .iter()
            .find(|r| r.trusted && r.gap_bump <= thresholds.t2_gap)
            .map(|r| r.t)
    } else {
        None
    };
    if t2.is_none() {
        note(Error::PhaseNotReached("T2".into()));
    }

    let t: Vec<f64> = series.iter().map(|r| r.t).collect();
    let y: Vec<f64> = series.iter().map(|r| decay_gap(s.problem, r)).collect();

    let t1 = match (t0, s.problem) {
        (Some(a), Problem::TorusBump) => {
            let b = t2.unwrap_or(f64::INFINITY);
            let (ts, ys): (Vec<f64>, Vec<f64>) = t
                .iter()
                .zip(&y)
                .filter(|(&ti, &yi)| ti >= a && ti <= b && yi > s.exp_floor)
                .map(|(&ti, &yi)| (ti, yi))
                .unzip();
            fit::two_segment_changepoint(&ts, &ys)
        }
        _ => None,
    };
    if t1.is_none() && s.problem == Problem::TorusBump {
        note(Error::PhaseNotReached("T1".into()));
    }

    let algebraic = match fit::detect_algebraic_window(&t, &y, &thresholds.window)
        .and_then(|w| fit::fit_rate(&t, &y, w, Model::PowerLaw))
    {
        Ok(f) => Some(f),
        Err(e) => {
            note(e);
            None
        }
    };

    let exponential = match t2 {
        Some(a) => {
            let end = t
                .iter()
                .zip(&y)
                .filter(|(&ti, &yi)| ti >= a && yi > s.exp_floor)
                .map(|(&ti, _)| ti)
                .fold(a, f64::max);
            match fit::fit_rate(&t, &y, (a, end), Model::Exponential) {
                Ok(f) => Some(f),
                Err(e) => {
                    note(e);
                    None
                }
            }
        }
        None => None,
    };

    let plateau = if s.problem == Problem::LineBump {
        t0.and_then(|a| plateau(series, a, 2.0 * profiles::kink_energy(&potential::quartic()), 0.05))
    } else {
        None
    };

    Ok(PhaseReport {
        t0,
        t1,
        t2,
        algebraic,
        exponential,
        plateau,
        thresholds,
        notes,
    })
}

/// Longest trusted stretch with `t ≥ from` and `|E - level| ≤ tol`.
pub fn plateau(series: &[DiagnosticsRecord], from: f64, level: f64, tol: f64) -> Option<Plateau> {
    let mut best: Option<Plateau> = None;
    let mut cur: Option<Plateau> = None;
    for r in series.iter().filter(|r| r.t >= from) {
        let dev = (r.energy - level).abs();
        if r.trusted && dev <= tol {
            let p = cur.get_or_insert(Plateau {
                start: r.t,
                end: r.t,
                length: 0.0,
                max_deviation: 0.0,
                tolerance: tol,
            });
            p.end = r.t;
            p.length = p.end - p.start;
            p.max_deviation = p.max_deviation.max(dev);
        } else if let Some(p) = cur.take() {
            if best.as_ref().is_none_or(|b| p.length > b.length) {
                best = Some(p);
            }
        }
    }
    if let Some(p) = cur {
        if best.as_ref().is_none_or(|b| p.length > b.length) {
            best = Some(p);
        }
    }
    best
}

/// Log-linear fit of `|c(t) - c(t_end)|` over `t ≥ from`, ignoring values
/// below `floor`.
pub fn shift_tail_fit(series: &[DiagnosticsRecord], from: f64, floor: f64) -> Result<FitResult> {
    let last = series
        .iter()
        .rev()
        .find(|r| r.shift_c.is_finite())
        .ok_or_else(|| Error::InsufficientData("no shifts".into()))?;
    let t: Vec<f64> = series.iter().map(|r| r.t).collect();
    let y: Vec<f64> = series.iter().map(|r| (r.shift_c - last.shift_c).abs()).collect();
    let end = t
        .iter()
        .zip(&y)
        .filter(|(&ti, &yi)| ti >= from && yi > floor)
        .map(|(&ti, _)| ti)
        .fold(from, f64::max);
    fit::fit_rate(&t, &y, (from, end), Model::Exponential)
}

/// Scenario-level gate used by `check`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Gate {
    fn at_most(name: &str, value: f64, limit: f64) -> Gate {
        Gate {
            name: name.into(),
            value,
            limit,
            passed: value <= limit,
        }
    }

    fn at_least(name: &str, value: f64, limit: f64) -> Gate {
        Gate {
            name: name.into(),
            value,
            limit,
            passed: value >= limit,
        }
    }
}

/// Conservation, monotonicity and excess-mass gates that apply to every run,
/// plus the problem-specific decay gates.
pub fn gates(out: &RunOutput, phases: &PhaseReport) -> Vec<Gate> {
    let s = &out.scenario;
    let tr = &out.trajectory;
    let mut v = Vec::new();
    let m0 = out.initial.u0.mean();
    let drift = tr.fields.iter().map(|f| (f.mean() - m0).abs()).fold(0.0, f64::max);
    v.push(Gate::at_most("mean_drift", drift, 1e-13));
    let rise = tr
        .steps
        .windows(2)
        .map(|w| w[1].energy - w[0].energy)
        .fold(f64::NEG_INFINITY, f64::max);
    v.push(Gate::at_most("energy_rise", rise.max(0.0), 1e-12));
    let cap = s.v_cap * (s.w0 + 1.0);
    let sup = |f: fn(&DiagnosticsRecord) -> f64| {
        out.series
            .iter()
            .filter(|r| r.trusted)
            .map(f)
            .filter(|x| x.is_finite())
            .fold(0.0, f64::max)
    };
    match s.problem {
        Problem::TorusBump => {
            v.push(Gate::at_most("sup_V", sup(|r| r.v), cap));
            let slope = phases.algebraic.as_ref().map_or(f64::NAN, |f| f.exponent);
            v.push(Gate {
                name: "algebraic_slope".into(),
                value: slope,
                limit: 0.15,
                passed: (slope + 0.5).abs() <= 0.15,
            });
        }
        Problem::LineBump => {
            v.push(Gate::at_most("sup_V_tilde", sup(|r| r.v_tilde), cap));
            let len = phases.plateau.as_ref().map_or(0.0, |p| p.length);
            v.push(Gate::at_least("plateau_length", len, s.l * s.l / 20.0));
        }
        Problem::SubTwoEStar => {
            let vcap = s.v_cap * (out.initial.v_minus0 + 1.0);
            v.push(Gate::at_most("sup_V_minus", sup(|r| r.v_minus), vcap));
            let slope = phases.algebraic.as_ref().map_or(f64::NAN, |f| f.exponent);
            v.push(Gate {
                name: "algebraic_slope".into(),
                value: slope,
                limit: 0.2,
                passed: (slope + 0.5).abs() <= 0.2,
            });
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_torus() -> Scenario {
        let mut s = Scenario::torus_with_l(16.0);
        s.solver.t_end = 1.0;
        s
    }

    #[test]
    fn shape_integral() {
        let c = bump_shape_integral();
        assert!((c - 1.2069).abs() < 1e-3, "{c}");
    }

    #[test]
    fn zero_amplitude_reproduces_profile() {
        let mut s = small_torus();
        s.disturbance.amplitude = 0.0;
        s.w0 = 0.0;
        let init = build_initial(&s).unwrap();
        assert_eq!(init.u0.values(), init.base.values());
        assert_eq!(init.corrector_amplitude, 0.0);
    }

    #[test]
    fn mean_is_restored_exactly() {
        let s = small_torus();
        let init = build_initial(&s).unwrap();
        assert!(init.constraint_error <= 1e-13);
        assert!((init.u0.mean() - s.mean).abs() <= 1e-13);
        assert!(init.interface_shift < 0.0);
        assert!(init.corrector_amplitude.abs() < 1e-10);
    }

    #[test]
    fn dip_on_reference_torus_has_target_mass() {
        let mut s = Scenario::torus_reference();
        s.disturbance.shape = Shape::Dip;
        s.disturbance.amplitude = 0.3;
        s.disturbance.offset = Some(32.0);
        let init = build_initial(&s).unwrap();
        assert!(init.w0_measured >= 3.6 && init.w0_measured <= 4.4, "{}", init.w0_measured);
    }

    #[test]
    fn budget_gate() {
        let mut s = Scenario::torus_reference();
        s.w0 = 12.0;
        s.disturbance.amplitude = 1.5;
        assert!(matches!(build_initial(&s), Err(Error::EnergyBudgetExceeded { .. })));
    }

    #[test]
    fn offset_too_close_to_interface() {
        let mut s = small_torus();
        s.disturbance.offset = Some(1.0);
        assert!(matches!(build_initial(&s), Err(Error::ConstraintViolation(_))));
    }

    #[test]
    fn line_mass_constraint() {
        let mut s = Scenario::line_reference();
        s.n = 2048;
        let init = build_initial(&s).unwrap();
        let mass = init.u0.map(|u| u + 1.0).integral();
        assert!((mass - 2.0 * s.l).abs() < 1e-10, "{mass}");
    }

    #[test]
    fn w0_variants_fit_the_budget() {
        for w0 in [2.0, 8.0] {
            let s = Scenario::torus_with_w0(w0);
            let init = build_initial(&s).unwrap();
            assert!(init.energy < init.budget, "{w0}: {} vs {}", init.energy, init.budget);
            assert!(init.w0_on_target, "{w0}: {}", init.w0_measured);
        }
    }

    #[test]
    fn sub_two_is_below_two_kinks() {
        let init = build_initial(&Scenario::sub_two_reference()).unwrap();
        assert!(init.energy < init.budget);
        assert!((init.v_minus0 - 6.0).abs() < 1e-6);
    }

    #[test]
    fn stationary_start_gives_flat_diagnostics() {
        let mut s = small_torus();
        s.disturbance.amplitude = 0.0;
        s.w0 = 0.0;
        s.solver.t_end = 10.0;
        let out = run(&s, Execution::Sequential).unwrap();
        let e0 = out.series[0].energy;
        for r in &out.series {
            assert!((r.energy - e0).abs() < 1e-12);
            assert!(r.gap_bump.abs() < 1e-12);
            assert!(r.v < 1e-8);
        }
    }

    #[test]
    fn well_prepared_start_enters_immediately() {
        let mut s = small_torus();
        s.disturbance.amplitude = 0.0;
        s.w0 = 0.0;
        s.noise = 1e-4;
        s.solver.t_end = 100.0;
        s.solver.schedule = SnapshotSchedule::LogSpaced {
            t_first: 1e-2,
            per_decade: 32,
        };
        let out = run(&s, Execution::Sequential).unwrap();
        let ph = detect_phases(&out.series, &s).unwrap();
        assert_eq!(ph.t0, Some(0.0));
    }

    #[test]
    fn plateau_detection() {
        let mk = |t: f64, e: f64| {
            let mut r = DiagnosticsRecord::blank(t);
            r.energy = e;
            r
        };
        let s = vec![mk(0.0, 3.0), mk(1.0, 2.0), mk(2.0, 2.01), mk(5.0, 1.99), mk(6.0, 1.5), mk(7.0, 2.0)];
        let p = plateau(&s, 0.0, 2.0, 0.05).unwrap();
        assert_eq!((p.start, p.end), (1.0, 5.0));
    }
}
