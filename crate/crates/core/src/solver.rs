//! Stabilized IMEX time stepping for `u_t = -(u_xx - G'(u))_xx`.
//!
//! The state is held as its spectrum so the zero mode (the mean) is never
//! touched by the update.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{compensated_sum, Field, Grid};
use crate::potential::PotentialSpec;

/// When to record snapshots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SnapshotSchedule {
    /// Explicit times (sorted, within `(0, t_end]`).
    Times(Vec<f64>),
    /// `t_first · 10^{i / per_decade}` for `i = 0, 1, …` up to `t_end`.
    LogSpaced { t_first: f64, per_decade: usize },
}

impl Default for SnapshotSchedule {
    fn default() -> Self {
        SnapshotSchedule::LogSpaced {
            t_first: 1e-2,
            per_decade: 16,
        }
    }
}

impl SnapshotSchedule {
    /// Snapshot times including `0` and `t_end`.
    pub fn times(&self, t_end: f64) -> Vec<f64> {
        let mut out = vec![0.0];
        match self {
            SnapshotSchedule::Times(ts) => {
                out.extend(ts.iter().cloned().filter(|&t| t > 0.0 && t < t_end));
            }
            SnapshotSchedule::LogSpaced { t_first, per_decade } => {
                let mut i = 0;
                loop {
                    let t = t_first * 10f64.powf(i as f64 / *per_decade as f64);
                    if t >= t_end * (1.0 - 1e-12) {
                        break;
                    }
                    out.push(t);
                    i += 1;
                }
            }
        }
        if t_end > 0.0 {
            out.push(t_end);
        }
        out.dedup();
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub stabilization: f64,
    pub t_end: f64,
    pub adapt: bool,
    pub dealias: bool,
    pub schedule: SnapshotSchedule,
    /// Step-doubling tolerance on `‖u_dt - u_{dt/2∘dt/2}‖_∞`.
    pub tolerance: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Keep a per-step `(t, E, D)` log.
    pub log_steps: bool,
    /// Keep full fields at snapshots.
    pub keep_fields: bool,
}

impl SolverConfig {
    /// Defaults with `S = max_{|u| ≤ 1.2} G''(u)`.
    pub fn for_potential(p: &PotentialSpec, t_end: f64) -> Self {
        SolverConfig {
            dt: 1e-4,
            stabilization: p.max_curvature(1.2),
            t_end,
            adapt: true,
            dealias: true,
            schedule: SnapshotSchedule::default(),
            tolerance: 1e-7,
            dt_min: 1e-9,
            dt_max: 0.5,
            log_steps: true,
            keep_fields: true,
        }
    }

    pub fn validate(&self, p: &PotentialSpec) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::ConstraintViolation("dt".into()));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::ConstraintViolation("t_end".into()));
        }
        if !self.adapt && self.stabilization < p.max_curvature(1.2) - 1e-12 {
            return Err(Error::ConstraintViolation("stabilization".into()));
        }
        if self.adapt && !(self.dt_min > 0.0 && self.dt_min <= self.dt_max) {
            return Err(Error::ConstraintViolation("dt_min".into()));
        }
        Ok(())
    }
}

/// Cached quantities at an accepted state.
#[derive(Clone)]
struct State {
    spec: Vec<Complex64>,
    values: Vec<f64>,
    nonlinear: Vec<Complex64>,
}

/// Reusable stepping kernel for one grid and potential.
pub struct Stepper {
    grid: Grid,
    potential: PotentialSpec,
    stabilization: f64,
    dealias: bool,
    k2: Vec<f64>,
    k4: Vec<f64>,
}

impl Stepper {
    pub fn new(grid: &Grid, p: &PotentialSpec, stabilization: f64, dealias: bool) -> Self {
        let k2: Vec<f64> = grid.wavenumbers().iter().map(|k| k * k).collect();
        let k4 = k2.iter().map(|k| k * k).collect();
        Stepper {
            grid: grid.clone(),
            potential: p.clone(),
            stabilization,
            dealias,
            k2,
            k4,
        }
    }

    fn nonlinear(&self, values: &[f64]) -> Vec<Complex64> {
        let g: Vec<f64> = values.iter().map(|&v| self.potential.d1(v)).collect();
        let mut nl = self.grid.forward(&g);
        if self.dealias {
            self.grid.dealias(&mut nl);
        }
        nl
    }

    fn state_from_values(&self, values: Vec<f64>) -> State {
        let spec = self.grid.forward(&values);
        let nonlinear = self.nonlinear(&values);
        State {
            spec,
            values,
            nonlinear,
        }
    }

    /// One IMEX update of the spectrum; returns the new spectrum and values.
    fn advance(&self, spec: &[Complex64], nonlinear: &[Complex64], dt: f64) -> (Vec<Complex64>, Vec<f64>) {
        let s = self.stabilization;
        let out: Vec<Complex64> = spec
            .iter()
            .zip(nonlinear)
            .zip(self.k2.iter().zip(&self.k4))
            .map(|((&u, &nl), (&k2, &k4))| {
                if k2 == 0.0 {
                    u
                } else {
                    (u - dt * k2 * (nl - s * u)) / (1.0 + dt * (k4 + s * k2))
                }
            })
            .collect();
        let values = self.grid.inverse_real(&out);
        (out, values)
    }

    /// Energy and dissipation from cached spectra, consistent with
    /// [`crate::functionals::energy`] and `dissipation_with(.., dealias)`.
    fn energy_dissipation(&self, st: &State) -> (f64, f64) {
        let n = self.grid.n();
        let ny = self.grid.nyquist();
        let dx = self.grid.dx();
        let w = dx / n as f64;
        let grad = compensated_sum(
            st.spec
                .iter()
                .zip(&self.k2)
                .enumerate()
                .filter(|(j, _)| *j != ny)
                .map(|(_, (c, k2))| k2 * c.norm_sqr()),
        );
        let pot = compensated_sum(st.values.iter().map(|&v| self.potential.eval(v)));
        let energy = 0.5 * w * grad + dx * pot;
        let diss = compensated_sum(
            st.spec
                .iter()
                .zip(&st.nonlinear)
                .zip(&self.k2)
                .enumerate()
                .filter(|(j, _)| *j != ny)
                .map(|(_, ((c, nl), k2))| k2 * (-(k2 * c) - nl).norm_sqr()),
        );
        (energy, w * diss)
    }

    fn energy_only(&self, spec: &[Complex64], values: &[f64]) -> f64 {
        let n = self.grid.n();
        let ny = self.grid.nyquist();
        let dx = self.grid.dx();
        let grad = compensated_sum(
            spec.iter()
                .zip(&self.k2)
                .enumerate()
                .filter(|(j, _)| *j != ny)
                .map(|(_, (c, k2))| k2 * c.norm_sqr()),
        );
        let pot = compensated_sum(values.iter().map(|&v| self.potential.eval(v)));
        0.5 * dx / n as f64 * grad + dx * pot
    }
}

/// A single stabilized IMEX step of size `cfg.dt`.
pub fn step(u: &Field, cfg: &SolverConfig, p: &PotentialSpec) -> Result<Field> {
    let stepper = Stepper::new(u.grid(), p, cfg.stabilization, cfg.dealias);
    let st = stepper.state_from_values(u.values().to_vec());
    let (_, values) = stepper.advance(&st.spec, &st.nonlinear, cfg.dt);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Field::new(u.grid(), values)
}

/// One accepted step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub energy: f64,
    pub dissipation: f64,
}

/// Called at every snapshot time with the current state.
pub trait SnapshotHook {
    fn on_snapshot(&mut self, index: usize, t: f64, u: &Field) -> Result<()>;
}

/// Hook that does nothing.
pub struct NoHooks;

impl SnapshotHook for NoHooks {
    fn on_snapshot(&mut self, _: usize, _: f64, _: &Field) -> Result<()> {
        Ok(())
    }
}

impl<F: FnMut(usize, f64, &Field) -> Result<()>> SnapshotHook for F {
    fn on_snapshot(&mut self, index: usize, t: f64, u: &Field) -> Result<()> {
        self(index, t, u)
    }
}

/// Result of [`evolve`].
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Fields at `times` (empty when `keep_fields` is off).
    pub fields: Vec<Field>,
    /// `(E, D)` at each snapshot.
    pub energies: Vec<f64>,
    pub dissipations: Vec<f64>,
    /// `mean(u)` at each snapshot.
    pub means: Vec<f64>,
    pub steps: Vec<StepRecord>,
    pub accepted: usize,
    pub rejected: usize,
}

impl Trajectory {
    pub fn snapshots(&self) -> Vec<(f64, Field)> {
        self.times.iter().cloned().zip(self.fields.iter().cloned()).collect()
    }

    pub fn last(&self) -> Option<&Field> {
        self.fields.last()
    }
}

/// Advance `u0` to `cfg.t_end`, calling `hooks` at every snapshot.
pub fn evolve(u0: &Field, cfg: &SolverConfig, p: &PotentialSpec, hooks: &mut dyn SnapshotHook) -> Result<Trajectory> {
    cfg.validate(p)?;
    let grid = u0.grid().clone();
    let stepper = Stepper::new(&grid, p, cfg.stabilization, cfg.dealias);
    let mut st = stepper.state_from_values(u0.values().to_vec());
    let (e0, _) = stepper.energy_dissipation(&st);
    if !e0.is_finite() {
        return Err(Error::NonFinite);
    }
    let targets = cfg.schedule.times(cfg.t_end);
    let mut traj = Trajectory {
        times: Vec::with_capacity(targets.len()),
        fields: Vec::new(),
        energies: Vec::new(),
        dissipations: Vec::new(),
        means: Vec::new(),
        steps: Vec::new(),
        accepted: 0,
        rejected: 0,
    };

    let mut t = 0.0f64;
    let mut dt = cfg.dt.min(cfg.dt_max);
    let (mut energy, mut diss) = stepper.energy_dissipation(&st);
    if cfg.log_steps {
        traj.steps.push(StepRecord {
            t,
            dt: 0.0,
            energy,
            dissipation: diss,
        });
    }

    for (index, &target) in targets.iter().enumerate() {
        while t < target {
            let remaining = target - t;
            let clipped = dt >= remaining;
            let h = if clipped { remaining } else { dt };
            if cfg.adapt {
                let (coarse_spec, coarse) = stepper.advance(&st.spec, &st.nonlinear, h);
                let _ = coarse_spec;
                let (half_spec, half) = stepper.advance(&st.spec, &st.nonlinear, 0.5 * h);
                let half_nl = stepper.nonlinear(&half);
                let (fine_spec, fine) = stepper.advance(&half_spec, &half_nl, 0.5 * h);
                if fine.iter().any(|v| !v.is_finite()) {
                    if h <= cfg.dt_min {
                        return Err(Error::NonFinite.at_snapshot(index));
                    }
                    dt = (0.5 * h).max(cfg.dt_min);
                    traj.rejected += 1;
                    continue;
                }
                let err = coarse
                    .iter()
                    .zip(&fine)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                let e_new = stepper.energy_only(&fine_spec, &fine);
                let error_ok = err <= cfg.tolerance;
                let energy_ok = e_new <= energy + 1e-12;
                if !(error_ok && energy_ok) {
                    if h <= cfg.dt_min * (1.0 + 1e-12) {
                        if error_ok {
                            return Err(Error::EnergyIncreaseAtFloor {
                                t,
                                increase: e_new - energy,
                            });
                        }
                        return Err(Error::StepFloorReached { t, dt_min: cfg.dt_min });
                    }
                    traj.rejected += 1;
                    dt = (0.5 * h).max(cfg.dt_min);
                    continue;
                }
                let nonlinear = stepper.nonlinear(&fine);
                st = State {
                    spec: fine_spec,
                    values: fine,
                    nonlinear,
                };
                t = if clipped { target } else { t + h };
                traj.accepted += 1;
                let factor = if err == 0.0 {
                    2.0
                } else {
                    (0.9 * (cfg.tolerance / err).sqrt()).min(2.0)
                };
                let proposal = (h * factor).clamp(cfg.dt_min, cfg.dt_max);
                // a step shortened to hit a snapshot does not shrink the proposal
                dt = if clipped { proposal.max(dt.min(cfg.dt_max)) } else { proposal };
            } else {
                let (spec, values) = stepper.advance(&st.spec, &st.nonlinear, h);
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite.at_snapshot(index));
                }
                let nonlinear = stepper.nonlinear(&values);
                st = State {
                    spec,
                    values,
                    nonlinear,
                };
                t = if clipped { target } else { t + h };
                traj.accepted += 1;
            }
            let (e, d) = stepper.energy_dissipation(&st);
            energy = e;
            diss = d;
            if cfg.log_steps {
                traj.steps.push(StepRecord {
                    t,
                    dt: h,
                    energy,
                    dissipation: diss,
                });
            }
        }
        let field = Field::new(&grid, st.values.clone())?;
        hooks
            .on_snapshot(index, t, &field)
            .map_err(|e| e.at_snapshot(index))?;
        traj.times.push(t);
        traj.energies.push(energy);
        traj.dissipations.push(diss);
        traj.means.push(st.spec[0].re / grid.n() as f64);
        if cfg.keep_fields {
            traj.fields.push(field);
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{dissipation_with, energy};
    use crate::potential::quartic;

    fn smooth(g: &Grid) -> Field {
        let l = g.half_length();
        Field::from_fn(g, |x| {
            let s = std::f64::consts::PI * x / l;
            -0.2 + 0.5 * s.sin() + 0.3 * (2.0 * s).cos() - 0.1 * (5.0 * s).sin()
        })
    }

    #[test]
    fn constant_minus_one_is_fixed() {
        let g = Grid::new(16.0, 256).unwrap();
        let p = quartic();
        let u = Field::constant(&g, -1.0);
        let cfg = SolverConfig {
            dt: 0.1,
            ..SolverConfig::for_potential(&p, 1.0)
        };
        let v = step(&u, &cfg, &p).unwrap();
        assert!(v.values().iter().all(|&x| x == -1.0));
    }

    #[test]
    fn mean_conserved_by_step() {
        let g = Grid::new(8.0, 128).unwrap();
        let p = quartic();
        let u = smooth(&g);
        let cfg = SolverConfig {
            dt: 1e-2,
            ..SolverConfig::for_potential(&p, 1.0)
        };
        let v = step(&u, &cfg, &p).unwrap();
        assert!((v.mean() - u.mean()).abs() <= 1e-14);
    }

    #[test]
    fn cached_functionals_match_direct() {
        let g = Grid::new(8.0, 128).unwrap();
        let p = quartic();
        let u = smooth(&g);
        for dealias in [false, true] {
            let stepper = Stepper::new(&g, &p, 3.32, dealias);
            let st = stepper.state_from_values(u.values().to_vec());
            let (e, d) = stepper.energy_dissipation(&st);
            assert!((e - energy(&u, &p)).abs() <= 1e-12 * e);
            let dd = dissipation_with(&u, &p, dealias);
            assert!((d - dd).abs() <= 1e-10 * dd, "{d} vs {dd}");
        }
    }

    #[test]
    fn evolve_decreases_energy_and_conserves_mean() {
        let g = Grid::new(8.0, 128).unwrap();
        let p = quartic();
        let u = smooth(&g);
        let cfg = SolverConfig {
            schedule: SnapshotSchedule::LogSpaced {
                t_first: 1e-3,
                per_decade: 8,
            },
            ..SolverConfig::for_potential(&p, 5.0)
        };
        let traj = evolve(&u, &cfg, &p, &mut NoHooks).unwrap();
        assert_eq!(*traj.times.last().unwrap(), 5.0);
        for w in traj.steps.windows(2) {
            assert!(w[1].energy <= w[0].energy + 1e-12);
        }
        for m in &traj.means {
            assert!((m - u.mean()).abs() <= 1e-13);
        }
        for f in &traj.fields {
            assert!((f.mean() - u.mean()).abs() <= 1e-13);
        }
    }

    #[test]
    fn schedule_includes_endpoints() {
        let s = SnapshotSchedule::LogSpaced {
            t_first: 0.1,
            per_decade: 2,
        };
        let ts = s.times(10.0);
        assert_eq!(ts.first(), Some(&0.0));
        assert_eq!(ts.last(), Some(&10.0));
        assert_eq!(ts.len(), 6);
    }

    #[test]
    fn hooks_see_every_snapshot() {
        let g = Grid::new(8.0, 64).unwrap();
        let p = quartic();
        let cfg = SolverConfig {
            schedule: SnapshotSchedule::Times(vec![0.5, 1.0]),
            ..SolverConfig::for_potential(&p, 2.0)
        };
        let mut seen = Vec::new();
        let mut hook = |i: usize, t: f64, _: &Field| {
            seen.push((i, t));
            Ok(())
        };
        evolve(&smooth(&g), &cfg, &p, &mut hook).unwrap();
        assert_eq!(seen, vec![(0, 0.0), (1, 0.5), (2, 1.0), (3, 2.0)]);
    }
}
