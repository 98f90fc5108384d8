//! Constant-coefficient backward comparison problem
//! `ζ_τ = -ζ_xxxx + g₂ ζ_xx` (with `τ = T - t`), solved exactly in Fourier
//! space.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::par::Execution;

#[derive(Clone, Debug)]
pub struct BackwardConfig {
    /// `G''(±1)`.
    pub g2: f64,
    /// Horizon `T`; evaluation times `τ` must lie in `[0, T]`.
    pub horizon: f64,
    pub terminal: Field,
    pub taus: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BackwardTrajectory {
    pub tau: Vec<f64>,
    /// `‖ζ_xx(τ)‖_∞`.
    pub zeta_xx_sup: Vec<f64>,
    /// `‖ζ(τ)‖_∞` (bounded by `‖ψ‖_∞` for the heat part, reported as-is).
    pub zeta_sup: Vec<f64>,
}

/// `ζ(τ)` and `ζ_xx(τ)` via the exact multiplier `exp(-τ(k⁴ + g₂k²))`.
pub fn zeta_at(cfg: &BackwardConfig, spectrum: &[Complex64], tau: f64) -> (Field, Field) {
    let g = cfg.terminal.grid();
    let k = g.wavenumbers();
    let mut z: Vec<Complex64> = spectrum
        .iter()
        .zip(k)
        .map(|(c, &k)| {
            let k2 = k * k;
            c * (-tau * (k2 * k2 + cfg.g2 * k2)).exp()
        })
        .collect();
    let zeta = g.inverse_real(&z);
    g.differentiate_spectrum(&mut z, 2);
    let zxx = g.inverse_real(&z);
    (
        Field::new(g, zeta).expect("same grid"),
        Field::new(g, zxx).expect("same grid"),
    )
}

pub fn solve_backward(cfg: &BackwardConfig, exec: Execution) -> Result<BackwardTrajectory> {
    if !(cfg.g2 > 0.0) {
        return Err(Error::ConstraintViolation("g2".into()));
    }
    if cfg.terminal.linf_norm() > 1.0 + 1e-12 {
        return Err(Error::ConstraintViolation("terminal".into()));
    }
    if cfg.taus.iter().any(|&t| t < 0.0 || t > cfg.horizon) {
        return Err(Error::ConstraintViolation("tau".into()));
    }
    let spectrum = cfg.terminal.spectrum();
    let rows = exec.map(&cfg.taus, |&tau| {
        let (z, zxx) = zeta_at(cfg, &spectrum, tau);
        (z.linf_norm(), zxx.linf_norm())
    });
    Ok(BackwardTrajectory {
        tau: cfg.taus.clone(),
        zeta_sup: rows.iter().map(|r| r.0).collect(),
        zeta_xx_sup: rows.iter().map(|r| r.1).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn constants_are_invariant() {
        let g = Grid::new(16.0, 256).unwrap();
        let cfg = BackwardConfig {
            g2: 2.0,
            horizon: 10.0,
            terminal: Field::constant(&g, 1.0),
            taus: vec![0.0, 0.1, 1.0, 10.0],
        };
        let tr = solve_backward(&cfg, Execution::Sequential).unwrap();
        for (z, zxx) in tr.zeta_sup.iter().zip(&tr.zeta_xx_sup) {
            assert!((z - 1.0).abs() < 1e-14);
            assert!(*zxx < 1e-14);
        }
    }

    #[test]
    fn single_mode_decays_at_exact_rate() {
        let l = 8.0;
        let g = Grid::new(l, 128).unwrap();
        let k = std::f64::consts::PI / l;
        let psi = Field::from_fn(&g, |x| (k * x).cos());
        let tau = 0.7;
        let cfg = BackwardConfig {
            g2: 2.0,
            horizon: 1.0,
            terminal: psi,
            taus: vec![tau],
        };
        let tr = solve_backward(&cfg, Execution::Sequential).unwrap();
        let exact = k * k * (-tau * (k.powi(4) + 2.0 * k * k)).exp();
        assert!((tr.zeta_xx_sup[0] - exact).abs() < 1e-13);
    }

    #[test]
    fn rejects_large_terminal_data() {
        let g = Grid::new(8.0, 64).unwrap();
        let cfg = BackwardConfig {
            g2: 2.0,
            horizon: 1.0,
            terminal: Field::constant(&g, 2.0),
            taus: vec![0.5],
        };
        assert!(solve_backward(&cfg, Execution::Sequential).is_err());
    }
}
