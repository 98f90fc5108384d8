//! Numerical checks of the functional inequalities along trajectories.
//!
//! Every check reports the worst constant observed; snapshots whose
//! denominators fall below [`DENOMINATOR_FLOOR`] are excluded and counted.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{self, FitResult, Model, WindowOptions};
use crate::functionals::{self, DiagnosticsRecord};
use crate::grid::{compensated_sum, Field, Grid};
use crate::potential::PotentialSpec;
use crate::profiles::{BumpProfile, KinkProfile};

pub const DENOMINATOR_FLOOR: f64 = 1e-14;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub l: f64,
    pub n: usize,
    pub scenario: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    /// Per-snapshot ratio; NaN where excluded.
    pub ratios: Vec<f64>,
    pub worst: f64,
    pub best: f64,
    pub cap: f64,
    pub passed: bool,
    pub excluded: usize,
    pub details: BTreeMap<String, f64>,
    pub meta: ReportMeta,
}

impl InequalityReport {
    fn from_ratios(name: &str, ratios: Vec<f64>, cap: f64) -> Self {
        let included: Vec<f64> = ratios.iter().cloned().filter(|r| r.is_finite()).collect();
        let excluded = ratios.len() - included.len();
        let worst = included.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let best = included.iter().cloned().fold(f64::INFINITY, f64::min);
        let (worst, best) = if included.is_empty() { (0.0, 0.0) } else { (worst, best) };
        InequalityReport {
            name: name.to_string(),
            passed: worst <= cap,
            ratios,
            worst,
            best,
            cap,
            excluded,
            details: BTreeMap::new(),
            meta: ReportMeta::default(),
        }
    }

    pub fn included(&self) -> usize {
        self.ratios.len() - self.excluded
    }

    pub fn with_meta(mut self, meta: ReportMeta) -> Self {
        self.meta = meta;
        self
    }
}

/// Which energy gap and excess mass a check compares.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// `ℰ̃ = E(u) - E(w̃)`, `Ṽ`.
    Glued,
    /// `ℰ = E(u) - E(w_c)`, `V`.
    Bump,
    /// `E(u)`, `V₋`.
    MinusOne,
}

fn gap_and_mass(r: &DiagnosticsRecord, phase: Phase) -> (f64, f64) {
    match phase {
        Phase::Glued => (r.gap_glued, r.v_tilde),
        Phase::Bump => (r.gap_bump, r.v),
        Phase::MinusOne => (r.energy, r.v_minus),
    }
}

/// `ℰ / (D^{1/3} (V + 1)^{4/3})`, gated by `ℰ ≤ energy_gate`.
pub fn check_nash(series: &[DiagnosticsRecord], phase: Phase, energy_gate: f64, cap: f64) -> InequalityReport {
    let ratios = series
        .iter()
        .map(|r| {
            let (gap, v) = gap_and_mass(r, phase);
            let den = r.dissipation.max(0.0).cbrt() * (v + 1.0).powf(4.0 / 3.0);
            if !r.trusted || !gap.is_finite() || !den.is_finite() || den < DENOMINATOR_FLOOR || gap > energy_gate {
                f64::NAN
            } else {
                gap / den
            }
        })
        .collect();
    InequalityReport::from_ratios("nash", ratios, cap)
}

/// Ratios of one EED snapshot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EedRatios {
    /// `∫ f² + f_x²  /  (|ℰ| + slack)`
    pub energy: f64,
    /// `∫ f_x² + f_xx² + f_xxx²  /  D`
    pub dissipation: f64,
    /// `ℰ / (L² D)`
    pub torus: f64,
}

/// Per-snapshot EED ratios of `u` against `profile` (same grid).
///
/// `eps_over_l` is the bump-phase gate `ℰ ≤ ε/L`; `slack` is added to `|ℰ|`
/// in the glued phase.
pub fn eed_ratios(
    u: &Field,
    profile: &Field,
    p: &PotentialSpec,
    phase: Phase,
    l: f64,
    eps_over_l: f64,
    slack: f64,
) -> Result<EedRatios> {
    let gap = match phase {
        Phase::MinusOne => functionals::energy(u, p),
        _ => functionals::energy_gap(u, profile, p),
    };
    if phase == Phase::Bump && gap > eps_over_l {
        return Err(Error::PhaseHypothesisUnmet(format!(
            "bump phase needs gap <= {eps_over_l:e}, found {gap:e}"
        )));
    }
    let f = u.sub(profile);
    let d = functionals::dissipation(u, p);
    let dx = f.grid().dx();
    let f1 = f.derivative(1);
    let f2 = f.derivative(2);
    let f3 = f.derivative(3);
    let h1 = functionals::h1_squared(&f);
    let h3 = dx
        * compensated_sum(
            (0..f.values().len()).map(|j| f1.values()[j].powi(2) + f2.values()[j].powi(2) + f3.values()[j].powi(2)),
        );
    let slack = if phase == Phase::Glued { slack } else { 0.0 };
    let egap = gap.abs() + slack;
    let ratio = |a: f64, b: f64| {
        if b < DENOMINATOR_FLOOR || a < DENOMINATOR_FLOOR {
            f64::NAN
        } else {
            a / b
        }
    };
    Ok(EedRatios {
        energy: ratio(h1, egap),
        dissipation: ratio(h3, d),
        torus: ratio(gap, l * l * d),
    })
}

/// One EED input snapshot.
#[derive(Clone, Debug)]
pub struct EedSample {
    pub t: f64,
    pub u: Field,
    pub profile: Field,
}

/// Two-sided EED constants over a set of snapshots. Snapshots that violate
/// the phase hypothesis are excluded; if all are, the hypothesis error is
/// returned.
pub fn check_eed(
    samples: &[EedSample],
    p: &PotentialSpec,
    phase: Phase,
    l: f64,
    eps_over_l: f64,
    cap: f64,
) -> Result<InequalityReport> {
    let slack = (-l / 64.0).exp();
    let mut energy = Vec::with_capacity(samples.len());
    let mut diss = Vec::new();
    let mut torus = Vec::new();
    let mut last_err = None;
    for s in samples {
        match eed_ratios(&s.u, &s.profile, p, phase, l, eps_over_l, slack) {
            Ok(r) => {
                energy.push(r.energy);
                diss.push(r.dissipation);
                torus.push(r.torus);
            }
            Err(e @ Error::PhaseHypothesisUnmet(_)) => {
                energy.push(f64::NAN);
                diss.push(f64::NAN);
                torus.push(f64::NAN);
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    if !samples.is_empty() && energy.iter().all(|r| r.is_nan()) {
        if let Some(e) = last_err {
            return Err(e);
        }
    }
    // two-sided: the constant is max(ratio, 1/ratio)
    let two_sided: Vec<f64> = energy.iter().map(|&r| if r.is_finite() { r.max(1.0 / r) } else { r }).collect();
    let mut rep = InequalityReport::from_ratios("eed", two_sided, cap);
    let fin = |v: &[f64], f: fn(f64, f64) -> f64, init: f64| v.iter().cloned().filter(|x| x.is_finite()).fold(init, f);
    rep.details.insert("energy_ratio_min".into(), fin(&energy, f64::min, f64::INFINITY));
    rep.details.insert("energy_ratio_max".into(), fin(&energy, f64::max, f64::NEG_INFINITY));
    rep.details.insert("dissipation_ratio_min".into(), fin(&diss, f64::min, f64::INFINITY));
    rep.details.insert("dissipation_ratio_max".into(), fin(&diss, f64::max, f64::NEG_INFINITY));
    rep.details.insert("torus_ratio_max".into(), fin(&torus, f64::max, f64::NEG_INFINITY));
    Ok(rep)
}

/// Log-log slope of the gap over the auto-detected algebraic window, and the
/// constant `sup ℰ t^{1/2} / V_T²` with `V_T = sup_{s ≤ t} V + 1`.
pub fn check_ode_decay(
    series: &[DiagnosticsRecord],
    phase: Phase,
    opts: &WindowOptions,
    cap: f64,
) -> Result<(InequalityReport, FitResult)> {
    let t: Vec<f64> = series.iter().map(|r| r.t).collect();
    let y: Vec<f64> = series
        .iter()
        .map(|r| if r.trusted { gap_and_mass(r, phase).0 } else { f64::NAN })
        .collect();
    let window = fit::detect_algebraic_window(&t, &y, opts)?;
    let fit = fit::fit_rate(&t, &y, window, Model::PowerLaw)?;
    let mut vt: f64 = 0.0;
    let ratios = series
        .iter()
        .map(|r| {
            let (gap, v) = gap_and_mass(r, phase);
            if v.is_finite() {
                vt = vt.max(v);
            }
            let den = (vt + 1.0).powi(2);
            if r.t <= 0.0 || !gap.is_finite() || !r.trusted {
                f64::NAN
            } else {
                gap * r.t.sqrt() / den
            }
        })
        .collect();
    let mut rep = InequalityReport::from_ratios("ode_decay", ratios, cap);
    rep.details.insert("slope".into(), fit.exponent);
    rep.details.insert("r2".into(), fit.r2);
    rep.details.insert("window_start".into(), window.0);
    rep.details.insert("window_end".into(), window.1);
    Ok((rep, fit))
}

/// `ln y` interpolated linearly in `ln t` (clamped at the ends).
fn interp_loglog(t: &[f64], y: &[f64], at: f64) -> f64 {
    if at <= t[0] {
        return y[0];
    }
    let i = t.partition_point(|&s| s < at);
    if i >= t.len() {
        return y[t.len() - 1];
    }
    let (t0, t1, y0, y1) = (t[i - 1], t[i], y[i - 1], y[i]);
    if t0 <= 0.0 || !(y0 > 0.0) || !(y1 > 0.0) {
        return y0 + (y1 - y0) * (at - t0) / (t1 - t0);
    }
    let s = (at.ln() - t0.ln()) / (t1.ln() - t0.ln());
    (y0.ln() + s * (y1.ln() - y0.ln())).exp()
}

/// Results of [`check_dissipation_bounds`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DissipationBounds {
    /// `D(t) / max{ℰ(t/2)², ℰ(t/2)/t}`
    pub by_energy: InequalityReport,
    /// `(dD/dt) / D^{3/2}` on snapshots where `D` grows.
    pub differential: InequalityReport,
    /// `∫_0^T D^γ dt / V_T^{4(1-γ)}` at each snapshot time `T`.
    pub integral: InequalityReport,
}

pub fn check_dissipation_bounds(
    series: &[DiagnosticsRecord],
    phase: Phase,
    gamma: f64,
    cap: f64,
) -> DissipationBounds {
    let trusted: Vec<&DiagnosticsRecord> = series.iter().filter(|r| r.trusted).collect();
    let t: Vec<f64> = trusted.iter().map(|r| r.t).collect();
    let gaps: Vec<f64> = trusted.iter().map(|r| gap_and_mass(r, phase).0).collect();
    let d: Vec<f64> = trusted.iter().map(|r| r.dissipation).collect();

    let by_energy = trusted
        .iter()
        .map(|r| {
            if r.t <= 0.0 {
                return f64::NAN;
            }
            let e = interp_loglog(&t, &gaps, 0.5 * r.t);
            let den = (e * e).max(e / r.t);
            if !(den >= DENOMINATOR_FLOOR) || !r.dissipation.is_finite() {
                f64::NAN
            } else {
                r.dissipation / den
            }
        })
        .collect();

    let m = t.len();
    let differential = (0..m)
        .map(|i| {
            if i == 0 || i + 1 >= m {
                return f64::NAN;
            }
            let dd = (d[i + 1] - d[i - 1]) / (t[i + 1] - t[i - 1]);
            let den = d[i].max(0.0).powf(1.5);
            if dd <= 0.0 || den < DENOMINATOR_FLOOR {
                f64::NAN
            } else {
                dd / den
            }
        })
        .collect();

    let mut acc = 0.0;
    let mut vt: f64 = 0.0;
    let integral = (0..m)
        .map(|i| {
            let v = gap_and_mass(trusted[i], phase).1;
            if v.is_finite() {
                vt = vt.max(v);
            }
            if i > 0 {
                let a = d[i - 1].max(0.0).powf(gamma);
                let b = d[i].max(0.0).powf(gamma);
                acc += 0.5 * (a + b) * (t[i] - t[i - 1]);
            }
            acc / (vt + 1.0).powf(4.0 * (1.0 - gamma))
        })
        .collect();

    DissipationBounds {
        by_energy: InequalityReport::from_ratios("dissipation_by_energy", by_energy, cap),
        differential: InequalityReport::from_ratios("dissipation_differential", differential, f64::INFINITY),
        integral: InequalityReport::from_ratios("dissipation_integral", integral, f64::INFINITY),
    }
}

/// `∫_I f²/(x²+1) / ∫_I f_x²` on `I = [lo, hi]` after removing the `v_x`
/// component of `f` on `I`. Returns NaN when the denominator vanishes.
pub fn check_hardy(f: &Field, v: &KinkProfile, interval: (f64, f64)) -> f64 {
    let g = f.grid();
    let n = g.n();
    let vx = v.sample_derivative(g, 1);
    let inside: Vec<usize> = (0..n).filter(|&j| g.x(j) >= interval.0 && g.x(j) <= interval.1).collect();
    let dx = g.dx();
    let dot = |a: &[f64], b: &[f64]| dx * compensated_sum(inside.iter().map(|&j| a[j] * b[j]));
    let coef = dot(f.values(), vx.values()) / dot(vx.values(), vx.values());
    let h = f.zip_map(&vx, |a, b| a - coef * b);
    let hx = h.derivative(1);
    let num = dx * compensated_sum(inside.iter().map(|&j| h.values()[j].powi(2) / (g.x(j).powi(2) + 1.0)));
    let den = dx * compensated_sum(inside.iter().map(|&j| hx.values()[j].powi(2)));
    if den < DENOMINATOR_FLOOR {
        f64::NAN
    } else {
        num / den
    }
}

/// Lowest eigenpairs of `A = -∂xx + G''(w)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<f64>,
    /// Eigenvalue of the mode overlapping `w_x` (translation).
    pub lambda1: f64,
    /// `|⟨e₁, w_x⟩| / ‖w_x‖`.
    pub overlap: f64,
    /// Lowest even eigenvalue (breathing mode).
    pub lambda2: f64,
    /// Lowest remaining eigenvalue.
    pub lambda3: f64,
    pub max_residual: f64,
    pub iterations: usize,
    pub n: usize,
}

/// Dense Fourier-collocation matrix of `-∂xx + G''(w)`.
pub fn linearized_operator(w: &Field, p: &PotentialSpec) -> DMatrix<f64> {
    let g = w.grid();
    let n = g.n();
    let mut e0 = vec![0.0; n];
    e0[0] = 1.0;
    let c2 = g.derivative(&e0, 2);
    let mut a = DMatrix::<f64>::from_fn(n, n, |i, j| -c2[(i + n - j) % n]);
    for i in 0..n {
        a[(i, i)] += p.d2(w.values()[i]);
    }
    // symmetrize round-off
    let at = a.transpose();
    (a + at) * 0.5
}

/// Operators larger than this are solved on a subsampled grid.
const MAX_SPECTRUM_N: usize = 1024;

pub fn check_linearization_spectrum(w: &BumpProfile, p: &PotentialSpec) -> Result<SpectrumReport> {
    if w.grid().half_length() < 16.0 {
        return Err(Error::ConstraintViolation("L".into()));
    }
    let centred = if w.shift() == 0.0 { w.clone() } else { w.translated(0.0) };
    let mut field = centred.samples().clone();
    while field.grid().n() > MAX_SPECTRUM_N && field.grid().points_per_unit() >= 16.0 {
        let coarse = Grid::new(field.grid().half_length(), field.grid().n() / 2)?;
        field = field.resample(&coarse)?;
    }
    let a = linearized_operator(&field, p);
    let n = a.nrows();
    let wanted = 5;
    let block = wanted + 10;
    let shift = -0.5;
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[(i, i)] -= shift;
    }
    let chol = shifted
        .cholesky()
        .ok_or(Error::EigsNotConverged { residual: f64::INFINITY })?;

    // deterministic start block mixing even and odd shapes
    let g = field.grid().clone();
    let l = g.half_length();
    let mut x = DMatrix::<f64>::from_fn(n, block, |i, j| {
        let s = std::f64::consts::PI * g.x(i) / l;
        let k = (j / 2 + 1) as f64;
        if j % 2 == 0 {
            (k * s).cos() + 0.1 * (0.37 * (i + 1) as f64 * (j + 1) as f64).sin()
        } else {
            (k * s).sin() + 0.1 * (0.53 * (i + 1) as f64 * (j + 2) as f64).cos()
        }
    });

    let mut values = vec![0.0; block];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut vectors = x.clone();
    for it in 0..2000 {
        iterations = it + 1;
        let y = chol.solve(&x);
        let q = y.qr().q();
        let h = q.transpose() * &a * &q;
        let h = (&h + h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
        let mut v = DMatrix::<f64>::zeros(n, block);
        for (c, &k) in order.iter().enumerate() {
            v.set_column(c, &(&q * eig.eigenvectors.column(k)));
            values[c] = eig.eigenvalues[k];
        }
        let av = &a * &v;
        residual = (0..wanted)
            .map(|c| (av.column(c) - v.column(c) * values[c]).amax())
            .fold(0.0, f64::max);
        vectors = v.clone();
        x = v;
        if residual <= 1e-10 {
            break;
        }
    }
    if residual > 1e-8 {
        return Err(Error::EigsNotConverged { residual });
    }

    let wx = field.derivative(1);
    let wxn = wx.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    let overlaps: Vec<f64> = (0..wanted)
        .map(|c| {
            let col = vectors.column(c);
            let dotp: f64 = col.iter().zip(wx.values()).map(|(a, b)| a * b).sum();
            dotp.abs() / (col.norm() * wxn)
        })
        .collect();
    let i1 = (0..wanted)
        .max_by(|&a, &b| overlaps[a].partial_cmp(&overlaps[b]).unwrap())
        .unwrap();
    // parity about the maximum at x = 0 (grid index n/2)
    let parity = |c: usize| -> f64 {
        let col = vectors.column(c);
        let mut even = 0.0;
        let mut odd = 0.0;
        for i in 0..n {
            let mirror = (n - i) % n;
            let (a, b) = (col[i], col[mirror]);
            even += (a + b).powi(2);
            odd += (a - b).powi(2);
        }
        even / (even + odd)
    };
    let i2 = (0..wanted)
        .filter(|&c| c != i1 && parity(c) > 0.5)
        .min_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap())
        .ok_or(Error::EigsNotConverged { residual })?;
    let i3 = (0..wanted)
        .filter(|&c| c != i1 && c != i2)
        .min_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap())
        .unwrap();
    Ok(SpectrumReport {
        eigenvalues: values[..wanted].to_vec(),
        lambda1: values[i1],
        overlap: overlaps[i1],
        lambda2: values[i2],
        lambda3: values[i3],
        max_residual: residual,
        iterations,
        n,
    })
}
