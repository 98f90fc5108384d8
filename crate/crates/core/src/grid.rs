//! Uniform periodic grids on `[-L, L)` and real fields sampled on them.
//!
//! All spectral operations go through the grid's FFT plans. Spectra use the
//! unnormalized forward convention `û_k = Σ_j u_j e^{-i k_j j dx}`, so
//! `∫ u² dx = (dx / n) Σ_k |û_k|²`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Compensated (Neumaier) summation.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in iter {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

struct GridData {
    half_length: f64,
    n: usize,
    dx: f64,
    k: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

/// Periodic grid with `n` points on `[-L, L)`; cheap to clone.
#[derive(Clone)]
pub struct Grid(Arc<GridData>);

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("half_length", &self.0.half_length)
            .field("n", &self.0.n)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.0.n == other.0.n && self.0.half_length == other.0.half_length
    }
}

impl Grid {
    pub fn new(half_length: f64, n: usize) -> Result<Grid> {
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "sidelength must be positive, got {half_length}"
            )));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n must be a power of two >= 8, got {n}"
            )));
        }
        let dx = 2.0 * half_length / n as f64;
        let scale = std::f64::consts::PI / half_length;
        let k = (0..n)
            .map(|j| {
                let m = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
                m * scale
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        Ok(Grid(Arc::new(GridData {
            half_length,
            n,
            dx,
            k,
            fwd,
            inv,
        })))
    }

    /// Smallest power-of-two grid with at least `points_per_unit` points per
    /// unit length.
    pub fn with_resolution(half_length: f64, points_per_unit: f64) -> Result<Grid> {
        let needed = (2.0 * half_length * points_per_unit).ceil().max(8.0) as usize;
        Grid::new(half_length, needed.next_power_of_two())
    }

    pub fn half_length(&self) -> f64 {
        self.0.half_length
    }

    pub fn period(&self) -> f64 {
        2.0 * self.0.half_length
    }

    pub fn n(&self) -> usize {
        self.0.n
    }

    pub fn dx(&self) -> f64 {
        self.0.dx
    }

    pub fn points_per_unit(&self) -> f64 {
        1.0 / self.0.dx
    }

    #[inline]
    pub fn x(&self, j: usize) -> f64 {
        -self.0.half_length + j as f64 * self.0.dx
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.0.n).map(|j| self.x(j)).collect()
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.0.k
    }

    /// Index of the Nyquist mode.
    pub fn nyquist(&self) -> usize {
        self.0.n / 2
    }

    /// Map `x` into `[-L, L)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let p = self.period();
        let l = self.0.half_length;
        let y = (x + l).rem_euclid(p) - l;
        if y >= l {
            y - p
        } else {
            y
        }
    }

    /// Signed periodic difference `a - b` mapped into `[-L, L)`.
    pub fn periodic_delta(&self, a: f64, b: f64) -> f64 {
        self.wrap(a - b)
    }

    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        self.0.fwd.process(buf);
    }

    /// Unnormalized inverse transform.
    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        self.0.inv.process(buf);
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_in_place(&mut buf);
        buf
    }

    /// Normalized inverse transform, real part.
    pub fn inverse_real(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut buf = spectrum.to_vec();
        self.inverse_in_place(&mut buf);
        let s = 1.0 / self.0.n as f64;
        buf.iter().map(|c| c.re * s).collect()
    }

    /// Multiply the spectrum by `(i k)^order`, zeroing the Nyquist mode for odd
    /// orders.
    pub fn differentiate_spectrum(&self, spectrum: &mut [Complex64], order: u32) {
        if order == 0 {
            return;
        }
        let ny = self.nyquist();
        for (j, (c, &k)) in spectrum.iter_mut().zip(self.0.k.iter()).enumerate() {
            if order % 2 == 1 && j == ny {
                *c = Complex64::new(0.0, 0.0);
                continue;
            }
            let factor = match order % 4 {
                0 => Complex64::new(k.powi(order as i32), 0.0),
                1 => Complex64::new(0.0, k.powi(order as i32)),
                2 => Complex64::new(-k.powi(order as i32), 0.0),
                _ => Complex64::new(0.0, -k.powi(order as i32)),
            };
            *c *= factor;
        }
    }

    pub fn derivative(&self, values: &[f64], order: u32) -> Vec<f64> {
        let mut spec = self.forward(values);
        self.differentiate_spectrum(&mut spec, order);
        self.inverse_real(&spec)
    }

    /// Zero every mode with `|j| > n/3` (two-thirds rule).
    pub fn dealias(&self, spectrum: &mut [Complex64]) {
        let n = self.0.n;
        let cut = n / 3;
        for (j, c) in spectrum.iter_mut().enumerate() {
            let m = if j <= n / 2 { j } else { n - j };
            if m > cut {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    pub fn is_dealiased_mode(&self, j: usize) -> bool {
        let n = self.0.n;
        let m = if j <= n / 2 { j } else { n - j };
        m > n / 3
    }
}

/// Real samples of a function on a [`Grid`].
#[derive(Clone, Debug)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.n() {
            return Err(Error::InvalidGrid(format!(
                "field has {} values, grid has {} points",
                values.len(),
                grid.n()
            )));
        }
        Ok(Field {
            grid: grid.clone(),
            values,
        })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: &Grid, f: F) -> Field {
        Field {
            grid: grid.clone(),
            values: (0..grid.n()).map(|j| f(grid.x(j))).collect(),
        }
    }

    pub fn constant(grid: &Grid, c: f64) -> Field {
        Field {
            grid: grid.clone(),
            values: vec![c; grid.n()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Periodic trapezoid rule.
    pub fn integral(&self) -> f64 {
        self.grid.dx() * compensated_sum(self.values.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        compensated_sum(self.values.iter().copied()) / self.values.len() as f64
    }

    pub fn l2_norm(&self) -> f64 {
        (self.grid.dx() * compensated_sum(self.values.iter().map(|v| v * v))).sqrt()
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l1_norm(&self) -> f64 {
        self.grid.dx() * compensated_sum(self.values.iter().map(|v| v.abs()))
    }

    pub fn dot(&self, other: &Field) -> f64 {
        self.grid.dx()
            * compensated_sum(self.values.iter().zip(&other.values).map(|(a, b)| a * b))
    }

    pub fn spectrum(&self) -> Vec<Complex64> {
        self.grid.forward(&self.values)
    }

    pub fn derivative(&self, order: u32) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.grid.derivative(&self.values, order),
        }
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map<F: Fn(f64, f64) -> f64>(&self, other: &Field, f: F) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> Field {
        self.map(|v| s * v)
    }

    /// `x ↦ u(x - shift)` computed exactly on the trigonometric interpolant.
    pub fn translate(&self, shift: f64) -> Field {
        let mut spec = self.spectrum();
        let ny = self.grid.nyquist();
        for (j, (c, &k)) in spec.iter_mut().zip(self.grid.wavenumbers()).enumerate() {
            if j == ny {
                *c *= (k * shift).cos();
            } else {
                *c *= Complex64::from_polar(1.0, -k * shift);
            }
        }
        Field {
            grid: self.grid.clone(),
            values: self.grid.inverse_real(&spec),
        }
    }

    /// Circular shift by whole grid cells: `out[j] = u[j - cells]`.
    pub fn roll(&self, cells: isize) -> Field {
        let n = self.values.len() as isize;
        let values = (0..n)
            .map(|j| self.values[(j - cells).rem_euclid(n) as usize])
            .collect();
        Field {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn interpolant(&self) -> SpectralInterpolant {
        SpectralInterpolant::new(self)
    }

    /// Trigonometric interpolation onto another grid with the same sidelength.
    pub fn resample(&self, target: &Grid) -> Result<Field> {
        if (target.half_length() - self.grid.half_length()).abs() > 1e-12 * target.half_length() {
            return Err(Error::InvalidGrid("resample needs equal sidelengths".into()));
        }
        let n = self.grid.n();
        let m = target.n();
        if m <= n {
            // nested grids: coarse points are a subset of fine points
            let stride = n / m;
            let values = (0..m).map(|j| self.values[j * stride]).collect();
            return Field::new(target, values);
        }
        let spec = self.spectrum();
        let mut out = vec![Complex64::new(0.0, 0.0); m];
        let scale = m as f64 / n as f64;
        for j in 0..n / 2 {
            out[j] = spec[j] * scale;
            if j > 0 {
                out[m - j] = spec[n - j] * scale;
            }
        }
        // split the Nyquist mode so the padded spectrum stays Hermitian
        let ny = spec[n / 2] * (0.5 * scale);
        out[n / 2] = ny;
        out[m - n / 2] = ny;
        Field::new(target, target.inverse_real(&out))
    }
}

/// Off-grid evaluation of a field's trigonometric interpolant.
#[derive(Clone, Debug)]
pub struct SpectralInterpolant {
    x0: f64,
    modes: Vec<(f64, Complex64)>,
    nyquist: (f64, f64),
    period: f64,
}

impl SpectralInterpolant {
    fn new(field: &Field) -> Self {
        let grid = field.grid();
        let n = grid.n();
        let spec = field.spectrum();
        let s = 1.0 / n as f64;
        let k = grid.wavenumbers();
        let modes = (1..n / 2).map(|j| (k[j], spec[j] * s)).collect();
        SpectralInterpolant {
            x0: -grid.half_length(),
            modes,
            nyquist: (k[n / 2].abs(), spec[n / 2].re * s),
            period: grid.period(),
        }
        .with_mean(spec[0].re * s)
    }

    fn with_mean(mut self, mean: f64) -> Self {
        self.modes.insert(0, (0.0, Complex64::new(mean, 0.0)));
        self
    }

    /// Value of the interpolant at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_derivative(x, 0)
    }

    /// `order`-th derivative of the interpolant at `x`.
    pub fn eval_derivative(&self, x: f64, order: u32) -> f64 {
        let y = (x - self.x0).rem_euclid(self.period);
        let mut acc = 0.0;
        for (idx, &(k, c)) in self.modes.iter().enumerate() {
            if idx == 0 {
                if order == 0 {
                    acc += c.re;
                }
                continue;
            }
            // c e^{iky} + conj(c) e^{-iky} = 2 Re(c e^{iky})
            let e = Complex64::from_polar(1.0, k * y);
            let d = Complex64::new(0.0, k).powu(order);
            acc += 2.0 * (c * e * d).re;
        }
        let (kn, cn) = self.nyquist;
        let phase = kn * y;
        acc += cn
            * match order % 4 {
                0 => phase.cos(),
                1 => -phase.sin(),
                2 => -phase.cos(),
                _ => phase.sin(),
            }
            * kn.powi(order as i32);
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rejects_bad_sizes() {
        assert!(Grid::new(1.0, 12).is_err());
        assert!(Grid::new(-1.0, 16).is_err());
        assert!(Grid::new(1.0, 4).is_err());
    }

    #[test]
    fn spectral_derivative_of_sine() {
        let g = Grid::new(PI, 64).unwrap();
        let u = Field::from_fn(&g, |x| (3.0 * x).sin());
        let du = u.derivative(1);
        let d3 = u.derivative(3);
        for j in 0..g.n() {
            let x = g.x(j);
            assert!((du.values()[j] - 3.0 * (3.0 * x).cos()).abs() < 1e-12);
            let err = (d3.values()[j] + 27.0 * (3.0 * x).cos()).abs();
            assert!(err < 27.0 * 1e-12, "{err:e}");
        }
    }

    #[test]
    fn parseval() {
        let g = Grid::new(5.0, 128).unwrap();
        let u = Field::from_fn(&g, |x| (-(x * x)).exp() + 0.3 * (PI * x / 5.0).cos());
        let spec = u.spectrum();
        let fourier = g.dx() / g.n() as f64 * compensated_sum(spec.iter().map(|c| c.norm_sqr()));
        let real = u.l2_norm().powi(2);
        assert!((fourier - real).abs() <= 1e-12 * real);
    }

    #[test]
    fn translate_matches_closed_form() {
        let g = Grid::new(10.0, 256).unwrap();
        let u = Field::from_fn(&g, |x| (-(x * x) / 2.0).exp());
        let s = 1.2345;
        let v = u.translate(s);
        for j in 0..g.n() {
            let x = g.x(j);
            assert!((v.values()[j] - (-(x - s) * (x - s) / 2.0).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolant_off_grid() {
        let g = Grid::new(4.0, 64).unwrap();
        let u = Field::from_fn(&g, |x| (PI * x / 4.0).sin() + 0.5 * (3.0 * PI * x / 4.0).cos());
        let it = u.interpolant();
        for &x in &[-3.9, -0.123, 0.0, 2.71, 3.99, 7.0] {
            let exact = (PI * x / 4.0).sin() + 0.5 * (3.0 * PI * x / 4.0).cos();
            let dexact = PI / 4.0 * (PI * x / 4.0).cos() - 1.5 * PI / 4.0 * (3.0 * PI * x / 4.0).sin();
            assert!((it.eval(x) - exact).abs() < 1e-13);
            assert!((it.eval_derivative(x, 1) - dexact).abs() < 1e-12);
        }
    }

    #[test]
    fn resample_preserves_band_limited_field() {
        let g = Grid::new(8.0, 64).unwrap();
        let h = Grid::new(8.0, 256).unwrap();
        let f = |x: f64| (PI * x / 8.0).sin() + 0.2 * (5.0 * PI * x / 8.0).cos();
        let up = Field::from_fn(&g, f).resample(&h).unwrap();
        let down = up.resample(&g).unwrap();
        for j in 0..h.n() {
            assert!((up.values()[j] - f(h.x(j))).abs() < 1e-12);
        }
        for j in 0..g.n() {
            assert!((down.values()[j] - f(g.x(j))).abs() < 1e-12);
        }
    }

    #[test]
    fn wrap_into_range() {
        let g = Grid::new(2.0, 16).unwrap();
        assert_eq!(g.wrap(2.0), -2.0);
        assert!((g.wrap(5.5) - 1.5).abs() < 1e-15);
        assert!((g.wrap(-2.5) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let xs = vec![1.0, 1e100, 1.0, -1e100];
        assert_eq!(compensated_sum(xs), 2.0);
    }
}
