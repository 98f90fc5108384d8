//! Projections onto the bump and glued-kink manifolds, zero finding and
//! shift tracking.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{compensated_sum, Field, Grid};
use crate::par::Execution;
use crate::potential::PotentialSpec;
use crate::profiles::{self, BumpProfile, GluedKinkProfile, KinkProfile, ProfileHandle};

/// Sign changes of a field, refined on its spectral interpolant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroSet {
    pub positions: Vec<f64>,
    /// `true` for an up-crossing (negative to positive).
    pub rising: Vec<bool>,
    pub t: Option<f64>,
}

/// All sign changes of the grid samples (periodically), each refined by
/// bisection on the spectral interpolant to 1e-10; sorted in `[-L, L)`.
pub fn find_zeros(u: &Field) -> ZeroSet {
    let g = u.grid();
    let n = g.n();
    let v = u.values();
    let mut interp = None;
    let mut found: Vec<(f64, bool)> = Vec::new();
    for j in 0..n {
        let a = v[j];
        let b = v[(j + 1) % n];
        if a == 0.0 {
            let prev = v[(j + n - 1) % n];
            if prev * b < 0.0 {
                found.push((g.x(j), b > 0.0));
            }
            continue;
        }
        if a * b >= 0.0 {
            continue;
        }
        let it = interp.get_or_insert_with(|| u.interpolant());
        let mut lo = g.x(j);
        let mut hi = lo + g.dx();
        let mut flo = it.eval(lo);
        let fhi = it.eval(hi);
        let x = if flo * fhi < 0.0 {
            while hi - lo > 1e-11 {
                let mid = 0.5 * (lo + hi);
                let fm = it.eval(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if fm * flo < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            0.5 * (lo + hi)
        } else {
            // interpolant and samples disagree only at round-off: fall back to secant
            lo - a * g.dx() / (b - a)
        };
        found.push((g.wrap(x), b > a));
    }
    found.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
    ZeroSet {
        positions: found.iter().map(|z| z.0).collect(),
        rising: found.iter().map(|z| z.1).collect(),
        t: None,
    }
}

/// Outcome of an L² projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub handle: ProfileHandle,
    /// Achieved L² distance.
    pub objective: f64,
    pub orthogonality_residual: f64,
    /// `false` if a second local optimum lies within 1% of the best.
    pub unique: bool,
}

/// Correlation data for `a ↦ ⟨u, w(· - a)⟩`.
struct Correlation<'g> {
    grid: &'g Grid,
    product: Vec<Complex64>,
    scale: f64,
}

impl Correlation<'_> {
    /// Derivative of order `d` of `a ↦ ⟨u, w(· - a)⟩`.
    fn eval(&self, a: f64, d: u32) -> f64 {
        let k = self.grid.wavenumbers();
        let ny = self.grid.nyquist();
        let mut acc = 0.0;
        for (j, (p, &kj)) in self.product.iter().zip(k).enumerate() {
            if j == ny {
                if d % 2 == 1 {
                    continue;
                }
                let sign = if d % 4 == 2 { -1.0 } else { 1.0 };
                acc += sign * p.re * kj.powi(d as i32) * (kj * a).cos();
                continue;
            }
            let e = Complex64::from_polar(1.0, kj * a) * Complex64::new(0.0, kj).powu(d);
            acc += (p * e).re;
        }
        self.scale * acc
    }
}

/// L²-closest translate `w_c` of the bump: FFT cross-correlation scan over
/// grid shifts, then Newton on `∫ (u - w_c) w_{c,x} dx = 0`.
pub fn project_bump(u: &Field, w: &BumpProfile) -> Result<ProjectionResult> {
    let g = u.grid();
    if w.grid() != g {
        return Err(Error::InvalidGrid("bump and state live on different grids".into()));
    }
    let n = g.n();
    let centred = if w.shift() == 0.0 { w.clone() } else { w.translated(0.0) };
    let ws = centred.samples();
    let uh = u.spectrum();
    let wh = ws.spectrum();
    let product: Vec<Complex64> = uh.iter().zip(&wh).map(|(a, b)| a * b.conj()).collect();
    let mut corr = product.clone();
    g.inverse_in_place(&mut corr);
    let dx = g.dx();
    let norm_u = dx * compensated_sum(u.values().iter().map(|v| v * v));
    let norm_w = dx * compensated_sum(ws.values().iter().map(|v| v * v));
    // objective at shift k * dx
    let objective: Vec<f64> = corr
        .iter()
        .map(|c| norm_u + norm_w - 2.0 * dx * c.re / n as f64)
        .collect();

    let scale = norm_u + norm_w;
    let flat_tol = 1e-12 * scale.max(1.0);
    let cmin = objective.iter().cloned().fold(f64::INFINITY, f64::min);
    let flat = objective.iter().filter(|&&c| c - cmin <= flat_tol).count();
    let fraction = flat as f64 / n as f64;
    if fraction >= 0.1 {
        return Err(Error::DegenerateProjection {
            fraction: 100.0 * fraction,
        });
    }
    let shift_of = |k: usize| -> f64 { g.wrap(k as f64 * dx) };
    let best = (0..n)
        .filter(|&k| objective[k] - cmin <= flat_tol)
        .min_by(|&a, &b| shift_of(a).abs().partial_cmp(&shift_of(b).abs()).unwrap())
        .unwrap();

    // local minima for the uniqueness flag
    let mut minima: Vec<f64> = (0..n)
        .filter(|&k| {
            let l = objective[(k + n - 1) % n];
            let r = objective[(k + 1) % n];
            objective[k] <= l && objective[k] < r && k != best
        })
        .map(|k| objective[k])
        .collect();
    minima.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let unique = match minima.first() {
        Some(&second) => second - cmin > 0.01 * cmin.abs().max(flat_tol),
        None => true,
    };

    let cc = Correlation {
        grid: g,
        product,
        scale: dx / n as f64,
    };
    let a0 = shift_of(best);
    let c = newton_on_bracket(|a| cc.eval(a, 1), |a| cc.eval(a, 2), a0, dx, true);
    let c = g.wrap(c);

    let wc = centred.translated(c);
    let wcx = wc.derivative();
    let f = u.sub(wc.samples());
    let orth = f.dot(&wcx);
    let dist = f.l2_norm();
    Ok(ProjectionResult {
        handle: ProfileHandle::Bump { c },
        objective: dist,
        orthogonality_residual: orth.abs(),
        unique,
    })
}

/// Root of `f` near `a0` by Newton, safeguarded by bisection on
/// `[a0 - h, a0 + h]` when `f` changes sign there. With `maximize` the
/// stationary point sought is a maximum of the primitive (so `df < 0`).
fn newton_on_bracket<F, D>(f: F, df: D, a0: f64, h: f64, maximize: bool) -> f64
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let (mut lo, mut hi) = (a0 - h, a0 + h);
    let (flo, fhi) = (f(lo), f(hi));
    let bracketed = flo * fhi <= 0.0;
    let mut a = a0;
    for _ in 0..60 {
        let fa = f(a);
        if fa == 0.0 {
            return a;
        }
        if bracketed {
            if (fa < 0.0) == (flo < 0.0) {
                lo = a;
            } else {
                hi = a;
            }
        }
        let d = df(a);
        let mut next = a - fa / d;
        let wrong_curvature = if maximize { d >= 0.0 } else { d <= 0.0 };
        if !next.is_finite() || wrong_curvature || (bracketed && !(next > lo && next < hi)) {
            if !bracketed {
                return a;
            }
            next = 0.5 * (lo + hi);
        }
        if (next - a).abs() <= 1e-14 * (1.0 + a.abs()) {
            return next;
        }
        a = next;
        if bracketed && hi - lo <= 1e-14 * (1.0 + a.abs()) {
            return a;
        }
    }
    a
}

/// Reference frame for [`project_glued`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GluedFrame {
    /// Periodic: membership `q - α, β - q ≥ L/16` with `L` the grid sidelength.
    Torus,
    /// Line surrogate: membership `q - α, β - q ≥ l/4` for interface spacing `l`.
    Line { l: f64 },
}

/// Glued-kink projection together with the assembled profile.
#[derive(Clone, Debug)]
pub struct GluedProjection {
    pub result: ProjectionResult,
    pub profile: GluedKinkProfile,
    pub q: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Midpoint and endpoints of the longest interval where `u > 0`, from an
/// up-crossing to the following down-crossing (periodically).
pub fn longest_positive_interval(u: &Field) -> Result<(f64, f64, f64)> {
    let zs = find_zeros(u);
    let m = zs.positions.len();
    if m < 2 {
        return Err(Error::NoValidZeros(format!("{m} zero(s) found")));
    }
    let period = u.grid().period();
    let mut best: Option<(f64, f64, f64)> = None;
    for i in 0..m {
        if !zs.rising[i] {
            continue;
        }
        let j = (i + 1) % m;
        if zs.rising[j] {
            continue;
        }
        let a = zs.positions[i];
        let mut b = zs.positions[j];
        if b <= a {
            b += period;
        }
        let len = b - a;
        if best.is_none_or(|(_, _, l)| len > l) {
            best = Some((a, b, len));
        }
    }
    let (a, b, _) = best.ok_or_else(|| Error::NoValidZeros("no positive interval".into()))?;
    Ok((u.grid().wrap(0.5 * (a + b)), a, b))
}

/// Half-domain kink projections `min_α ‖v_α - u‖_{L²(I₋)}` and
/// `min_β ‖v_β + u‖_{L²(I₊)}` after re-centring at the midpoint of the
/// longest positive interval.
pub fn project_glued(u: &Field, p: &PotentialSpec, frame: GluedFrame) -> Result<GluedProjection> {
    let g = u.grid();
    let l = g.half_length();
    let (q, za, zb) = longest_positive_interval(u)?;
    let centred = u.translate(-q);
    let base = profiles::kink(p, 0.0)?;

    let za = za - q; // up-crossing in centred coordinates, in (-L, 0)
    let zb = g.wrap(zb - q); // down-crossing in (0, L)
    let (alpha, ra, oa) = half_projection(&centred, &base, za, Side::Left)?;
    let (beta, rb, ob) = half_projection(&centred, &base, zb, Side::Right)?;

    let (sep_l, on_torus) = match frame {
        GluedFrame::Torus => (l, true),
        GluedFrame::Line { l } => (0.5 * l, false),
    };
    let sep = profiles::glued_separation(sep_l, on_torus);
    if -alpha < sep || beta < sep {
        return Err(Error::SeparationViolated(format!(
            "projected kinks at {alpha} and {beta} around q = {q}, need {sep}"
        )));
    }
    let (q_abs, alpha_abs, beta_abs) = (q, alpha + q, beta + q);
    let profile = profiles::glue_kinks_with(p, q_abs, alpha_abs, beta_abs, sep_l, on_torus)?;
    Ok(GluedProjection {
        result: ProjectionResult {
            handle: ProfileHandle::Glued {
                q: q_abs,
                alpha: alpha_abs,
                beta: beta_abs,
            },
            objective: (oa + ob).sqrt(),
            orthogonality_residual: ra.max(rb),
            unique: true,
        },
        profile,
        q: q_abs,
        alpha: alpha_abs,
        beta: beta_abs,
    })
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    Left,
    Right,
}

/// Returns `(centre, |orthogonality residual|, squared distance)`.
fn half_projection(u: &Field, base: &KinkProfile, guess: f64, side: Side) -> Result<(f64, f64, f64)> {
    let g = u.grid();
    let n = g.n();
    let h = n / 2;
    // grid indices of the half domain with trapezoid end weights
    let idx: Vec<(usize, f64)> = match side {
        Side::Left => (0..=h).map(|j| (j, if j == 0 || j == h { 0.5 } else { 1.0 })).collect(),
        Side::Right => (h..=n)
            .map(|j| (j % n, if j == h || j == n { 0.5 } else { 1.0 }))
            .collect(),
    };
    let sgn = if side == Side::Left { 1.0 } else { -1.0 };
    let xs: Vec<f64> = idx
        .iter()
        .map(|&(j, _)| if j == 0 && side == Side::Right { g.half_length() } else { g.x(j) })
        .collect();
    let uv = u.values();
    let dx = g.dx();

    // ‖sgn v_a - u‖² on the half domain
    let objective = |a: f64| {
        dx * compensated_sum(idx.iter().zip(&xs).map(|(&(j, wt), &x)| {
            let d = sgn * base.eval(x - a) - uv[j];
            wt * d * d
        }))
    };
    // F(a) = ∫ (u - sgn v_a) sgn v_x(x - a); stationarity of the objective
    let resid = |a: f64| {
        dx * compensated_sum(idx.iter().zip(&xs).map(|(&(j, wt), &x)| {
            let d = base.derivs(x - a);
            wt * (uv[j] - sgn * d[0]) * sgn * d[1]
        }))
    };
    let dresid = |a: f64| {
        dx * compensated_sum(idx.iter().zip(&xs).map(|(&(j, wt), &x)| {
            let d = base.derivs(x - a);
            wt * (d[1] * d[1] - (uv[j] - sgn * d[0]) * sgn * d[2])
        }))
    };

    // coarse scan over the half domain, then local refinement
    let (x_lo, x_hi) = (xs[0].min(xs[xs.len() - 1]), xs[0].max(xs[xs.len() - 1]));
    let stride = (n / 512).max(1);
    let mut best = (guess.clamp(x_lo, x_hi), objective(guess.clamp(x_lo, x_hi)));
    let mut k = 0;
    while k < idx.len() {
        let a = xs[k];
        let o = objective(a);
        if o < best.1 {
            best = (a, o);
        }
        k += stride;
    }
    let mut a0 = best.0;
    if stride > 1 {
        let mut s = -(stride as isize);
        while s <= stride as isize {
            let a = best.0 + s as f64 * dx;
            let o = objective(a);
            if o < best.1 {
                best = (a, o);
            }
            s += 1;
        }
        a0 = best.0;
    }
    // objective' = 2 F, so minima of the objective are roots of F with F' > 0
    let a = newton_on_bracket(resid, dresid, a0, dx, false);
    let r = resid(a).abs();
    Ok((a, r, objective(a)))
}

/// Time series of projection parameters along a trajectory.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ShiftSeries {
    pub t: Vec<f64>,
    pub c: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub zero_a: Vec<f64>,
    pub zero_b: Vec<f64>,
    /// `Δc(t) = sup_{t' ≤ t} |c(t') - c(0)|` (periodic distance).
    pub delta_c: Vec<f64>,
    /// `Δx̃(t)`: running maximum over both glued centres.
    pub delta_x: Vec<f64>,
}

/// Two zeros of `zs` closest to the reference pair, ordered like it.
pub fn nearest_pair(g: &Grid, zs: &ZeroSet, reference: (f64, f64)) -> Option<(f64, f64)> {
    if zs.positions.len() < 2 {
        return None;
    }
    let closest = |r: f64| {
        zs.positions
            .iter()
            .cloned()
            .min_by(|a, b| {
                g.periodic_delta(*a, r)
                    .abs()
                    .partial_cmp(&g.periodic_delta(*b, r).abs())
                    .unwrap()
            })
            .unwrap()
    };
    let a = closest(reference.0);
    let b = closest(reference.1);
    if a == b {
        return None;
    }
    Some((a, b))
}

/// Project every snapshot onto the bump family (if given) and the glued
/// family, then accumulate running excursions.
pub fn track(
    snapshots: &[(f64, Field)],
    bump: Option<&BumpProfile>,
    p: &PotentialSpec,
    frame: GluedFrame,
    exec: Execution,
) -> Result<ShiftSeries> {
    let per: Vec<Result<(f64, f64, f64, Option<(f64, f64)>)>> = exec.map(snapshots, |(_, u)| {
        let c = match bump {
            Some(w) => match project_bump(u, w)?.handle {
                ProfileHandle::Bump { c } => c,
                _ => unreachable!(),
            },
            None => f64::NAN,
        };
        let (alpha, beta) = match project_glued(u, p, frame) {
            Ok(gp) => (gp.alpha, gp.beta),
            Err(_) => (f64::NAN, f64::NAN),
        };
        let zs = find_zeros(u);
        let reference = match bump {
            Some(w) => w.zeros(),
            None => (alpha, beta),
        };
        Ok((c, alpha, beta, nearest_pair(u.grid(), &zs, reference)))
    });
    let mut out = ShiftSeries::default();
    for (i, r) in per.into_iter().enumerate() {
        let (c, alpha, beta, zeros) = r.map_err(|e| e.at_snapshot(i))?;
        out.t.push(snapshots[i].0);
        out.c.push(c);
        out.alpha.push(alpha);
        out.beta.push(beta);
        out.zero_a.push(zeros.map_or(f64::NAN, |z| z.0));
        out.zero_b.push(zeros.map_or(f64::NAN, |z| z.1));
    }
    if let Some((_, u0)) = snapshots.first() {
        let g = u0.grid();
        let (c0, a0, b0) = (out.c[0], out.alpha[0], out.beta[0]);
        let mut dc: f64 = 0.0;
        let mut dxm: f64 = 0.0;
        for i in 0..out.t.len() {
            if out.c[i].is_finite() {
                dc = dc.max(g.periodic_delta(out.c[i], c0).abs());
            }
            if out.alpha[i].is_finite() && a0.is_finite() {
                dxm = dxm
                    .max(g.periodic_delta(out.alpha[i], a0).abs())
                    .max(g.periodic_delta(out.beta[i], b0).abs());
            }
            out.delta_c.push(if bump.is_some() { dc } else { f64::NAN });
            out.delta_x.push(dxm);
        }
    }
    Ok(out)
}
