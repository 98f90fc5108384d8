//! Slow-manifold elements: kinks, torus bumps and glued kink profiles.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals;
use crate::grid::{Field, Grid};
use crate::manifold;
use crate::potential::{PotentialKind, PotentialSpec};
use crate::quadrature;

/// Kink tails switch to the linearized asymptotics once `|v| > 1 - TAIL_GAP`.
const TAIL_GAP: f64 = 1e-8;

/// Identifies an element of one of the slow manifolds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ProfileHandle {
    Kink { a: f64 },
    Bump { c: f64 },
    Glued { q: f64, alpha: f64, beta: f64 },
    MinusOne,
}

// ---------------------------------------------------------------------------
// kinks

#[derive(Debug)]
struct KinkTable {
    xs: Vec<f64>,
    vs: Vec<f64>,
    x_tail: f64,
    gap_tail: f64,
    mu: f64,
}

/// Increasing heteroclinic `v(· - a)` from `-1` to `+1`.
#[derive(Clone, Debug)]
pub struct KinkProfile {
    shift: f64,
    potential: PotentialSpec,
    table: Option<Arc<KinkTable>>,
}

/// Kink centred at `a`. Closed form for the quartic well, adaptive
/// Runge–Kutta otherwise.
pub fn kink(p: &PotentialSpec, a: f64) -> Result<KinkProfile> {
    let table = match p.kind() {
        PotentialKind::Quartic => None,
        PotentialKind::Custom => Some(Arc::new(integrate_kink(p)?)),
    };
    Ok(KinkProfile {
        shift: a,
        potential: p.clone(),
        table,
    })
}

impl KinkProfile {
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn potential(&self) -> &PotentialSpec {
        &self.potential
    }

    /// Same kink centred at `a`; shares the integration table.
    pub fn shifted(&self, a: f64) -> KinkProfile {
        KinkProfile {
            shift: a,
            potential: self.potential.clone(),
            table: self.table.clone(),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.derivs(x)[0]
    }

    /// `[v, v_x, v_xx, v_xxx]` at `x`.
    pub fn derivs(&self, x: f64) -> [f64; 4] {
        let y = x - self.shift;
        match &self.table {
            None => {
                let z = y / std::f64::consts::SQRT_2;
                let t = z.tanh();
                let c = z.cosh();
                let s = if c.is_finite() { 1.0 / (c * c) } else { 0.0 };
                let r = std::f64::consts::FRAC_1_SQRT_2;
                [t, s * r, -t * s, (3.0 * t * t - 1.0) * s * r]
            }
            Some(table) => {
                let [v, vx, vxx, vxxx] = table.eval_nonneg(&self.potential, y.abs());
                if y >= 0.0 {
                    [v, vx, vxx, vxxx]
                } else {
                    [-v, vx, -vxx, vxxx]
                }
            }
        }
    }

    /// `-v_xx + G'(v)` at `x`.
    pub fn residual(&self, x: f64) -> f64 {
        let d = self.derivs(x);
        -d[2] + self.potential.d1(d[0])
    }

    pub fn sample(&self, grid: &Grid) -> Field {
        Field::from_fn(grid, |x| self.eval(x))
    }

    /// Derivative of order `k ≤ 3` sampled on `grid`.
    pub fn sample_derivative(&self, grid: &Grid, k: usize) -> Field {
        Field::from_fn(grid, |x| self.derivs(x)[k])
    }
}

impl KinkTable {
    fn eval_nonneg(&self, p: &PotentialSpec, y: f64) -> [f64; 4] {
        if y >= self.x_tail {
            let d = self.gap_tail * (-self.mu * (y - self.x_tail)).exp();
            let mu = self.mu;
            return [1.0 - d, mu * d, -mu * mu * d, mu * mu * mu * d];
        }
        let i = match self.xs.binary_search_by(|x| x.partial_cmp(&y).unwrap()) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.xs.len() - 2),
        };
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let (v0, v1) = (self.vs[i], self.vs[i + 1]);
        let h = x1 - x0;
        let s = (y - x0) / h;
        let d0 = (2.0 * p.eval(v0)).max(0.0).sqrt();
        let d1 = (2.0 * p.eval(v1)).max(0.0).sqrt();
        let v = quintic_hermite(s, h, [v0, d0, p.d1(v0)], [v1, d1, p.d1(v1)]);
        let vx = (2.0 * p.eval(v)).max(0.0).sqrt();
        [v, vx, p.d1(v), p.d2(v) * vx]
    }
}

/// Quintic Hermite interpolation on `[0, 1]` with data `[f, f', f'']` in
/// physical units (`h` is the interval length).
fn quintic_hermite(s: f64, h: f64, a: [f64; 3], b: [f64; 3]) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    let s5 = s4 * s;
    let h00 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
    let h10 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
    let h20 = 0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5);
    let h01 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
    let h11 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
    let h21 = 0.5 * (s3 - 2.0 * s4 + s5);
    h00 * a[0] + h * h10 * a[1] + h * h * h20 * a[2] + h01 * b[0] + h * h11 * b[1] + h * h * h21 * b[2]
}

/// Dormand–Prince 5(4) on `v' = sqrt(2 G(v))`, `v(0) = 0`, for `x ≥ 0`.
fn integrate_kink(p: &PotentialSpec) -> Result<KinkTable> {
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let _ = C; // autonomous system: stage times unused
    let rhs = |v: f64| (2.0 * p.eval(v)).max(0.0).sqrt();
    let tol = 1e-14;
    let h_max = 0.05;

    let mut xs = vec![0.0];
    let mut vs = vec![0.0];
    let (mut x, mut v) = (0.0f64, 0.0f64);
    let mut h = 1e-3;
    let mut k = [0.0f64; 7];
    while 1.0 - v > TAIL_GAP {
        if x > 1e4 || xs.len() > 1_000_000 {
            return Err(Error::ProfileSolveFailed(format!(
                "kink did not reach its tail (x = {x}, v = {v})"
            )));
        }
        for s in 0..7 {
            let mut vs_ = v;
            for (j, kj) in k.iter().enumerate().take(s) {
                vs_ += h * A[s][j] * kj;
            }
            k[s] = rhs(vs_);
        }
        let v5 = v + h * (0..6).map(|j| A[6][j] * k[j]).sum::<f64>();
        let v4 = v + h * (0..7).map(|j| B4[j] * k[j]).sum::<f64>();
        let err = (v5 - v4).abs();
        if err <= tol || h < 1e-12 {
            if !(v5 > v) || !v5.is_finite() || v5 > 1.0 {
                return Err(Error::ProfileSolveFailed(format!(
                    "kink lost monotonicity at x = {x}"
                )));
            }
            x += h;
            v = v5;
            xs.push(x);
            vs.push(v);
        }
        let factor = if err == 0.0 {
            2.0
        } else {
            (0.9 * (tol / err).powf(0.2)).clamp(0.2, 2.0)
        };
        h = (h * factor).min(h_max);
    }
    let mu = p.gpp_plus().sqrt();
    Ok(KinkTable {
        x_tail: x,
        gap_tail: 1.0 - v,
        mu,
        xs,
        vs,
    })
}

/// `e_* = ∫ sqrt(2 G(u)) du` over `[-1, 1]`.
pub fn kink_energy(p: &PotentialSpec) -> f64 {
    let (e, _) = quadrature::integrate(|u| (2.0 * p.eval(u)).max(0.0).sqrt(), -1.0, 1.0, 1e-14);
    e
}

/// Energy of the centred kink restricted to `|x| ≥ r`, using equipartition
/// `½v_x² + G(v) = v_x²`.
pub fn kink_tail_energy(k: &KinkProfile, r: f64) -> f64 {
    let centred = k.shifted(0.0);
    let density = |x: f64| {
        let d = centred.derivs(x)[1];
        d * d
    };
    let r = r.max(0.0);
    let mut total = 0.0;
    let mut a = r;
    // integrate until the density is far below double precision
    while a < r + 200.0 {
        let (part, _) = quadrature::integrate(density, a, a + 10.0, 1e-30);
        total += part;
        a += 10.0;
        if density(a) < 1e-300 {
            break;
        }
    }
    2.0 * total
}

// ---------------------------------------------------------------------------
// bumps

/// Knobs for [`solve_bump_with`].
#[derive(Clone, Debug)]
pub struct BumpOptions {
    pub l_min: f64,
    pub max_iterations: usize,
    pub damping_floor: f64,
    pub tolerance: f64,
}

impl Default for BumpOptions {
    fn default() -> Self {
        BumpOptions {
            l_min: 16.0,
            max_iterations: 50,
            damping_floor: 1e-4,
            tolerance: 1e-12,
        }
    }
}

/// Mean-constrained torus minimizer `w` with two interfaces, centred so its
/// maximum sits at `shift`.
#[derive(Clone, Debug)]
pub struct BumpProfile {
    samples: Field,
    shift: f64,
    lambda: f64,
    mean: f64,
    zeros: (f64, f64),
    energy: f64,
    residual: f64,
    newton_iterations: usize,
}

pub fn solve_bump(grid: &Grid, p: &PotentialSpec, m: f64) -> Result<BumpProfile> {
    solve_bump_with(grid, p, m, &BumpOptions::default())
}

/// Newton on `(-w_xx + G'(w) - λ, mean(w) - m)` restricted to even functions,
/// which removes the translation null direction. The solve runs on the
/// coarsest power-of-two grid with ≥ 8 points per unit length and is then
/// interpolated spectrally onto `grid`.
pub fn solve_bump_with(grid: &Grid, p: &PotentialSpec, m: f64, opts: &BumpOptions) -> Result<BumpProfile> {
    if !(-0.75..=0.75).contains(&m) {
        return Err(Error::ProfileSolveFailed(format!("mean {m} outside [-3/4, 3/4]")));
    }
    let l = grid.half_length();
    if l < opts.l_min {
        return Err(Error::ProfileSolveFailed(format!(
            "sidelength {l} below minimum {}",
            opts.l_min
        )));
    }
    if grid.points_per_unit() < 8.0 - 1e-12 {
        return Err(Error::InvalidGrid(format!(
            "bump solve needs 8 points per unit length, grid has {}",
            grid.points_per_unit()
        )));
    }
    let coarse = Grid::with_resolution(l, 8.0)?;
    let coarse = if coarse.n() < grid.n() { coarse } else { grid.clone() };

    let (w_coarse, lambda, iterations) = newton_even(&coarse, p, m, opts)?;
    let w = if coarse.n() == grid.n() {
        w_coarse
    } else {
        w_coarse.resample(grid)?
    };

    let residual = el_residual(&w, p, lambda);
    let zeros = manifold::find_zeros(&w);
    if zeros.positions.len() != 2 {
        return Err(Error::WrongBranch {
            zeros: zeros.positions.len(),
        });
    }
    let energy = functionals::energy(&w, p);
    Ok(BumpProfile {
        mean: w.mean(),
        samples: w,
        shift: 0.0,
        lambda,
        zeros: (zeros.positions[0], zeros.positions[1]),
        energy,
        residual,
        newton_iterations: iterations,
    })
}

/// `sup |-w_xx + G'(w) - λ|`.
pub fn el_residual(w: &Field, p: &PotentialSpec, lambda: f64) -> f64 {
    let wxx = w.derivative(2);
    w.values()
        .iter()
        .zip(wxx.values())
        .map(|(&u, &uxx)| (-uxx + p.d1(u) - lambda).abs())
        .fold(0.0, f64::max)
}

fn newton_even(g: &Grid, p: &PotentialSpec, m: f64, opts: &BumpOptions) -> Result<(Field, f64, usize)> {
    let n = g.n();
    let h = n / 2;
    let nu = h + 1; // reduced unknowns x = 0, dx, ..., L
    let l = g.half_length();

    // circulant second-derivative stencil
    let mut e0 = vec![0.0; n];
    e0[0] = 1.0;
    let c2 = g.derivative(&e0, 2);

    let reduced_of = |j: usize| -> usize { (j as isize - h as isize).unsigned_abs() };
    let full_of = |r: usize| -> usize { (h + r) % n };
    let expand = |z: &[f64]| -> Vec<f64> { (0..n).map(|j| z[reduced_of(j)]).collect() };

    // -D2 restricted to even functions
    let mut lap = DMatrix::<f64>::zeros(nu, nu);
    for r in 0..nu {
        let i = full_of(r);
        for j in 0..n {
            lap[(r, reduced_of(j))] -= c2[(i + n - j) % n];
        }
    }
    let weights: Vec<f64> = (0..nu)
        .map(|r| if r == 0 || r == h { 1.0 } else { 2.0 } / n as f64)
        .collect();

    let ell = l * (1.0 + m);
    let r2 = std::f64::consts::SQRT_2;
    let mut z: Vec<f64> = (0..nu)
        .map(|r| {
            let x = r as f64 * g.dx();
            ((x + 0.5 * ell) / r2).tanh() * ((0.5 * ell - x) / r2).tanh()
        })
        .collect();
    let mut lambda = 0.0;

    let residual = |z: &[f64], lambda: f64| -> DVector<f64> {
        let mut res = DVector::<f64>::zeros(nu + 1);
        let lz = &lap * DVector::from_column_slice(z);
        for r in 0..nu {
            res[r] = lz[r] + p.d1(z[r]) - lambda;
        }
        res[nu] = z.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>() - m;
        res
    };

    let mut res = residual(&z, lambda);
    let mut norm = res.amax();
    for it in 0..opts.max_iterations {
        if norm <= opts.tolerance {
            let w = Field::new(g, expand(&z))?;
            return Ok((w, lambda, it));
        }
        let mut jac = DMatrix::<f64>::zeros(nu + 1, nu + 1);
        jac.view_mut((0, 0), (nu, nu)).copy_from(&lap);
        for r in 0..nu {
            jac[(r, r)] += p.d2(z[r]);
            jac[(r, nu)] = -1.0;
            jac[(nu, r)] = weights[r];
        }
        let delta = jac
            .lu()
            .solve(&(-&res))
            .ok_or_else(|| Error::ProfileSolveFailed("singular Newton matrix".into()))?;

        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = z.iter().enumerate().map(|(r, v)| v + step * delta[r]).collect();
            let trial_lambda = lambda + step * delta[nu];
            let trial_res = residual(&trial, trial_lambda);
            let trial_norm = trial_res.amax();
            if trial_norm.is_finite() && trial_norm < norm {
                z = trial;
                lambda = trial_lambda;
                res = trial_res;
                norm = trial_norm;
                break;
            }
            // at round-off level a full step that fails to decrease is still converged
            if step == 1.0 && delta.amax() < 1e-13 {
                let w = Field::new(g, expand(&z))?;
                return Ok((w, lambda, it + 1));
            }
            step *= 0.5;
            if step < opts.damping_floor {
                return Err(Error::NewtonDiverged {
                    iterations: it + 1,
                    residual: norm,
                });
            }
        }
    }
    if norm <= opts.tolerance {
        let w = Field::new(g, expand(&z))?;
        return Ok((w, lambda, opts.max_iterations));
    }
    Err(Error::NewtonDiverged {
        iterations: opts.max_iterations,
        residual: norm,
    })
}

impl BumpProfile {
    pub fn grid(&self) -> &Grid {
        self.samples.grid()
    }

    pub fn samples(&self) -> &Field {
        &self.samples
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Down-crossing and up-crossing ordered as `(a, b)` with `a < b` in
    /// `[-L, L)`.
    pub fn zeros(&self) -> (f64, f64) {
        self.zeros
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Euler–Lagrange residual on the target grid.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn newton_iterations(&self) -> usize {
        self.newton_iterations
    }

    /// `C₀` such that `|E(w) - 2e_*| = exp(-L / C₀)`.
    pub fn closeness_constant(&self, e_star: f64) -> f64 {
        let gap = (self.energy - 2.0 * e_star).abs();
        if gap == 0.0 {
            0.0
        } else {
            -self.grid().half_length() / gap.ln()
        }
    }

    /// `w_c = w(· - c)` relative to the centred profile.
    pub fn translated(&self, c: f64) -> BumpProfile {
        let grid = self.grid().clone();
        let delta = c - self.shift;
        let (a, b) = (grid.wrap(self.zeros.0 + delta), grid.wrap(self.zeros.1 + delta));
        BumpProfile {
            samples: self.samples.translate(delta),
            shift: grid.wrap(c),
            zeros: if a <= b { (a, b) } else { (b, a) },
            ..self.clone()
        }
    }

    pub fn derivative(&self) -> Field {
        self.samples.derivative(1)
    }
}

// ---------------------------------------------------------------------------
// glued kink profiles

/// Degree-7 polynomial on `(c - 1, c + 1)` in the local variable `s = x - c`;
/// the centre `c` is kept by the caller.
#[derive(Clone, Debug)]
struct Hermite7 {
    coeffs: [f64; 8],
}

impl Hermite7 {
    /// Match `[f, f', f'', f''']` at `s = -1` (left) and `s = +1` (right).
    fn new(left: [f64; 4], right: [f64; 4]) -> Result<Self> {
        let mut mat = DMatrix::<f64>::zeros(8, 8);
        let mut rhs = DVector::<f64>::zeros(8);
        for (side, (s, data)) in [(-1.0f64, left), (1.0f64, right)].iter().enumerate() {
            for d in 0..4 {
                let row = side * 4 + d;
                for pow in d..8 {
                    let mut coef = 1.0;
                    for f in 0..d {
                        coef *= (pow - f) as f64;
                    }
                    mat[(row, pow)] = coef * s.powi((pow - d) as i32);
                }
                rhs[row] = data[d];
            }
        }
        let sol = mat
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::ProfileSolveFailed("singular Hermite system".into()))?;
        let mut coeffs = [0.0; 8];
        coeffs.copy_from_slice(sol.as_slice());
        Ok(Hermite7 { coeffs })
    }

    /// Derivative of order `d` at local coordinate `s`.
    fn eval_local(&self, s: f64, d: usize) -> f64 {
        let mut acc = 0.0;
        for pow in (d..8).rev() {
            let mut coef = self.coeffs[pow];
            for f in 0..d {
                coef *= (pow - f) as f64;
            }
            acc = acc * s + coef;
        }
        acc
    }
}

/// Bounds measured on the gluing window, reported by [`glue_kinks`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GluingBounds {
    /// `‖w̃ - 1‖_{H¹((q-1, q+1))}`.
    pub h1_distance: f64,
    /// `C₀` with `h1_distance = exp(-L / C₀)`.
    pub c0: f64,
    /// `max_k ‖w̃^{(k)}‖² / max{1 - v_α(q-1), 1 + v_β(q+1)}` over `k = 1, 2, 3`.
    pub derivative_ratio: f64,
    /// Largest one-sided jump of orders 0..3 at the window ends.
    pub max_jump: f64,
}

/// `v(· - α)` left of `q`, `-v(· - β)` right of `q`, C³-interpolated on
/// `(q - 1, q + 1)` (and on `(q + L - 1, q + L + 1)` on the torus).
#[derive(Clone, Debug)]
pub struct GluedKinkProfile {
    q: f64,
    alpha: f64,
    beta: f64,
    half_length: f64,
    on_torus: bool,
    left: KinkProfile,
    right: KinkProfile,
    inner: Hermite7,
    outer: Option<Hermite7>,
    bounds: GluingBounds,
}

fn neg(d: [f64; 4]) -> [f64; 4] {
    [-d[0], -d[1], -d[2], -d[3]]
}

pub fn glue_kinks(q: f64, alpha: f64, beta: f64, l: f64, on_torus: bool) -> Result<GluedKinkProfile> {
    glue_kinks_with(&crate::potential::quartic(), q, alpha, beta, l, on_torus)
}

/// Separation needed on each side of `q`: `L/16` on the torus, `L/2` on the
/// line.
pub fn glued_separation(l: f64, on_torus: bool) -> f64 {
    if on_torus {
        l / 16.0
    } else {
        l / 2.0
    }
}

pub fn glue_kinks_with(
    p: &PotentialSpec,
    q: f64,
    alpha: f64,
    beta: f64,
    l: f64,
    on_torus: bool,
) -> Result<GluedKinkProfile> {
    let sep = glued_separation(l, on_torus);
    if q - alpha < sep || beta - q < sep {
        return Err(Error::SeparationViolated(format!(
            "need q - α ≥ {sep} and β - q ≥ {sep}, got {} and {}",
            q - alpha,
            beta - q
        )));
    }
    if on_torus && (alpha - (q - l) < sep || (q + l) - beta < sep) {
        return Err(Error::SeparationViolated(format!(
            "kinks within {sep} of q ± L on the torus (α = {alpha}, β = {beta}, q = {q}, L = {l})"
        )));
    }
    let base = kink(p, 0.0)?;
    let left = base.shifted(alpha);
    let right = base.shifted(beta);

    let inner = Hermite7::new(left.derivs(q - 1.0), neg(right.derivs(q + 1.0)))?;
    let outer = if on_torus {
        // across q + L ≡ q - L: -v_β on the left, v_α (one period over) on the right
        Some(Hermite7::new(
            neg(right.derivs(q + l - 1.0)),
            left.derivs(q - l + 1.0),
        )?)
    } else {
        None
    };

    let mut profile = GluedKinkProfile {
        q,
        alpha,
        beta,
        half_length: l,
        on_torus,
        left,
        right,
        inner,
        outer,
        bounds: GluingBounds {
            h1_distance: 0.0,
            c0: 0.0,
            derivative_ratio: 0.0,
            max_jump: 0.0,
        },
    };
    profile.bounds = profile.measure_bounds();
    let bound = (-l / 64.0).exp();
    if !(profile.bounds.h1_distance <= bound) {
        return Err(Error::InterpolantBoundViolated {
            measured: profile.bounds.h1_distance,
            bound,
        });
    }
    Ok(profile)
}

impl GluedKinkProfile {
    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn on_torus(&self) -> bool {
        self.on_torus
    }

    pub fn bounds(&self) -> GluingBounds {
        self.bounds
    }

    pub fn handle(&self) -> ProfileHandle {
        ProfileHandle::Glued {
            q: self.q,
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    /// Derivative of order `d ≤ 3` at `x`.
    pub fn eval_derivative(&self, x: f64, d: usize) -> f64 {
        let l = self.half_length;
        let y = if self.on_torus {
            (x - self.q + l).rem_euclid(2.0 * l) - l
        } else {
            x - self.q
        };
        let xq = self.q + y;
        if y.abs() <= 1.0 {
            return self.inner.eval_local(y, d);
        }
        if let Some(outer) = &self.outer {
            if y >= l - 1.0 {
                return outer.eval_local(y - l, d);
            }
            if y <= -l + 1.0 {
                return outer.eval_local(y + l, d);
            }
        }
        if y < 0.0 {
            self.left.derivs(xq)[d]
        } else {
            -self.right.derivs(xq)[d]
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_derivative(x, 0)
    }

    pub fn sample(&self, grid: &Grid) -> Field {
        Field::from_fn(grid, |x| self.eval(x))
    }

    /// The same profile translated by `s`.
    pub fn translated(&self, s: f64) -> Result<GluedKinkProfile> {
        glue_kinks_with(
            self.left.potential(),
            self.q + s,
            self.alpha + s,
            self.beta + s,
            self.half_length,
            self.on_torus,
        )
    }

    fn measure_bounds(&self) -> GluingBounds {
        let q = self.q;
        let l = self.half_length;
        // the integrands are polynomials of degree ≤ 14: one panel is exact
        let (h1sq, _) = quadrature::kronrod(
            &|x: f64| {
                let f = self.inner.eval_local(x - q, 0) - 1.0;
                let fx = self.inner.eval_local(x - q, 1);
                f * f + fx * fx
            },
            q - 1.0,
            q + 1.0,
        );
        let h1 = h1sq.max(0.0).sqrt();
        let scale = (1.0 - self.left.eval(q - 1.0)).max(1.0 + self.right.eval(q + 1.0));
        let mut ratio: f64 = 0.0;
        for k in 1..=3 {
            let (nk, _) = quadrature::kronrod(&|x: f64| self.inner.eval_local(x - q, k).powi(2), q - 1.0, q + 1.0);
            if scale > 0.0 {
                ratio = ratio.max(nk / scale);
            }
        }
        let mut jump: f64 = 0.0;
        let ld = self.left.derivs(q - 1.0);
        let rd = neg(self.right.derivs(q + 1.0));
        for d in 0..4 {
            jump = jump.max((self.inner.eval_local(-1.0, d) - ld[d]).abs());
            jump = jump.max((self.inner.eval_local(1.0, d) - rd[d]).abs());
        }
        if let Some(outer) = &self.outer {
            let ld = neg(self.right.derivs(q + l - 1.0));
            let rd = self.left.derivs(q - l + 1.0);
            for d in 0..4 {
                jump = jump.max((outer.eval_local(-1.0, d) - ld[d]).abs());
                jump = jump.max((outer.eval_local(1.0, d) - rd[d]).abs());
            }
        }
        GluingBounds {
            h1_distance: h1,
            c0: if h1 > 0.0 { -l / h1.ln() } else { 0.0 },
            derivative_ratio: ratio,
            max_jump: jump,
        }
    }
}

// ---------------------------------------------------------------------------

/// `χ = 1` on `[-L/2, L/2] + shift`, `-1` elsewhere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SharpInterface {
    pub half_width: f64,
    pub shift: f64,
}

impl SharpInterface {
    pub fn new(l: f64, shift: f64) -> Self {
        SharpInterface {
            half_width: 0.5 * l,
            shift,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if (x - self.shift).abs() <= self.half_width {
            1.0
        } else {
            -1.0
        }
    }

    /// Samples with periodic wrap on the grid's torus.
    pub fn sample(&self, grid: &Grid) -> Field {
        Field::from_fn(grid, |x| self.eval(self.shift + grid.wrap(x - self.shift)))
    }
}
