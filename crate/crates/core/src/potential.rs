//! Double-well potentials and their derivatives.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PotentialKind {
    Quartic,
    Custom,
}

/// An even double well `G` with nondegenerate minima at `±1`, together with
/// analytically coded derivatives up to third order.
#[derive(Clone)]
pub struct PotentialSpec {
    kind: PotentialKind,
    custom: Option<CustomFns>,
    gpp_plus: f64,
    gpp_minus: f64,
}

#[derive(Clone)]
struct CustomFns {
    eval: ScalarFn,
    d1: ScalarFn,
    d2: ScalarFn,
    d3: ScalarFn,
}

impl fmt::Debug for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialSpec")
            .field("kind", &self.kind)
            .field("gpp_plus", &self.gpp_plus)
            .field("gpp_minus", &self.gpp_minus)
            .finish()
    }
}

/// `G(u) = (1 - u^2)^2 / 4`.
pub fn quartic() -> PotentialSpec {
    PotentialSpec {
        kind: PotentialKind::Quartic,
        custom: None,
        gpp_plus: 2.0,
        gpp_minus: 2.0,
    }
}

impl PotentialSpec {
    /// Build a potential from closures. Derivatives must be exact; nothing is
    /// differentiated numerically.
    pub fn custom<E, D1, D2, D3>(eval: E, d1: D1, d2: D2, d3: D3) -> Self
    where
        E: Fn(f64) -> f64 + Send + Sync + 'static,
        D1: Fn(f64) -> f64 + Send + Sync + 'static,
        D2: Fn(f64) -> f64 + Send + Sync + 'static,
        D3: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let gpp_plus = d2(1.0);
        let gpp_minus = d2(-1.0);
        PotentialSpec {
            kind: PotentialKind::Custom,
            custom: Some(CustomFns {
                eval: Arc::new(eval),
                d1: Arc::new(d1),
                d2: Arc::new(d2),
                d3: Arc::new(d3),
            }),
            gpp_plus,
            gpp_minus,
        }
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match &self.custom {
            None => {
                let s = 1.0 - u * u;
                0.25 * s * s
            }
            Some(c) => (c.eval)(u),
        }
    }

    #[inline]
    pub fn d1(&self, u: f64) -> f64 {
        match &self.custom {
            None => u * u * u - u,
            Some(c) => (c.d1)(u),
        }
    }

    #[inline]
    pub fn d2(&self, u: f64) -> f64 {
        match &self.custom {
            None => 3.0 * u * u - 1.0,
            Some(c) => (c.d2)(u),
        }
    }

    #[inline]
    pub fn d3(&self, u: f64) -> f64 {
        match &self.custom {
            None => 6.0 * u,
            Some(c) => (c.d3)(u),
        }
    }

    /// `G''(1)`.
    pub fn gpp_plus(&self) -> f64 {
        self.gpp_plus
    }

    /// `G''(-1)`.
    pub fn gpp_minus(&self) -> f64 {
        self.gpp_minus
    }

    /// `G(u) - G(w)` evaluated as `(u - w) * mean of G'` along the segment,
    /// which avoids cancellation when `u` and `w` are close.
    #[inline]
    pub fn difference(&self, u: f64, w: f64) -> f64 {
        // 4-point Gauss-Legendre on [0, 1]; exact for cubic G'.
        const NODES: [f64; 4] = [
            0.069_431_844_202_973_71,
            0.330_009_478_207_571_87,
            0.669_990_521_792_428_1,
            0.930_568_155_797_026_3,
        ];
        const WEIGHTS: [f64; 4] = [
            0.173_927_422_568_726_93,
            0.326_072_577_431_273_07,
            0.326_072_577_431_273_07,
            0.173_927_422_568_726_93,
        ];
        let f = u - w;
        match &self.custom {
            None => {
                // (w^2 - u^2)(2 - u^2 - w^2)/4, factored exactly.
                -0.25 * f * (u + w) * (2.0 - u * u - w * w)
            }
            Some(_) => {
                let mut acc = 0.0;
                for (s, wt) in NODES.iter().zip(WEIGHTS.iter()) {
                    acc += wt * self.d1(w + s * f);
                }
                f * acc
            }
        }
    }

    /// Largest `G''` over `|u| <= bound`, sampled.
    pub fn max_curvature(&self, bound: f64) -> f64 {
        let samples = 2001;
        (0..samples)
            .map(|i| -bound + 2.0 * bound * i as f64 / (samples - 1) as f64)
            .map(|u| self.d2(u))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub worst_violation: f64,
}

#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub samples: usize,
    pub checks: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

const VALIDATION_TOL: f64 = 1e-12;

/// Evaluate the double-well hypotheses on a uniform sample of `[-2, 2]`
/// without failing.
pub fn evaluate(p: &PotentialSpec, samples: usize) -> ValidationReport {
    let us: Vec<f64> = (0..samples)
        .map(|i| -2.0 + 4.0 * i as f64 / (samples - 1) as f64)
        .collect();

    let minima = p.eval(1.0).abs().max(p.eval(-1.0).abs());

    let positivity = us
        .iter()
        .filter(|u| (u.abs() - 1.0).abs() > 1e-9)
        .map(|&u| p.eval(u))
        .fold(f64::INFINITY, f64::min);

    let evenness = us
        .iter()
        .map(|&u| (p.eval(u) - p.eval(-u)).abs())
        .fold(0.0, f64::max);

    let monotone = us
        .iter()
        .filter(|&&u| (0.0..=1.0).contains(&u))
        .map(|&u| p.d1(u))
        .fold(f64::NEG_INFINITY, f64::max);

    let curvature = p.d2(1.0).min(p.d2(-1.0));

    let checks = vec![
        CheckOutcome {
            name: "minima at +-1",
            passed: minima <= VALIDATION_TOL,
            worst_violation: minima,
        },
        CheckOutcome {
            name: "positive away from +-1",
            passed: positivity > 0.0,
            worst_violation: (-positivity).max(0.0),
        },
        CheckOutcome {
            name: "even",
            passed: evenness <= VALIDATION_TOL,
            worst_violation: evenness,
        },
        CheckOutcome {
            name: "G' <= 0 on [0,1]",
            passed: monotone <= VALIDATION_TOL,
            worst_violation: monotone.max(0.0),
        },
        CheckOutcome {
            name: "G''(+-1) > 0",
            passed: curvature > 0.0,
            worst_violation: (-curvature).max(0.0),
        },
    ];
    ValidationReport { samples, checks }
}

/// Validate the double-well hypotheses; fails with `PotentialInvalid` naming
/// every failed check.
pub fn validate(p: &PotentialSpec, samples: usize) -> Result<ValidationReport> {
    if samples < 16 {
        return Err(Error::PotentialInvalid(format!(
            "need at least 16 samples, got {samples}"
        )));
    }
    let report = evaluate(p, samples);
    if report.all_passed() {
        Ok(report)
    } else {
        let failed: Vec<String> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{} (worst {:e})", c.name, c.worst_violation))
            .collect();
        Err(Error::PotentialInvalid(failed.join("; ")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartic_values() {
        let p = quartic();
        assert_eq!(p.eval(1.0), 0.0);
        assert_eq!(p.eval(0.0), 0.25);
        assert_eq!(p.d2(1.0), 2.0);
        assert_eq!(p.gpp_plus(), p.d2(1.0));
        assert_eq!(p.gpp_minus(), p.d2(-1.0));
    }

    #[test]
    fn quartic_derivatives_match_finite_differences() {
        let p = quartic();
        let h = 1e-5;
        for i in 0..=400 {
            let u = -2.0 + 4.0 * i as f64 / 400.0;
            let fd1 = (p.eval(u + h) - p.eval(u - h)) / (2.0 * h);
            let fd2 = (p.d1(u + h) - p.d1(u - h)) / (2.0 * h);
            let fd3 = (p.d2(u + h) - p.d2(u - h)) / (2.0 * h);
            // central differences of the quartic carry the exact truncation
            // h² f'''/6: h² u for G and h² for G'; G'' is quadratic
            assert!((fd1 - p.d1(u) - h * h * u).abs() < 1e-10, "d1 at {u}");
            if u.abs() < 0.99 {
                assert!((fd1 - p.d1(u)).abs() < 1e-10, "d1 at {u}");
            }
            assert!((fd2 - p.d2(u) - h * h).abs() < 1e-9, "d2 at {u}");
            assert!((fd3 - p.d3(u)).abs() < 1e-9, "d3 at {u}");
        }
    }

    #[test]
    fn quartic_validates() {
        let report = validate(&quartic(), 1000).unwrap();
        assert!(report.all_passed());
        assert_eq!(report.checks.len(), 5);
    }

    #[test]
    fn negated_well_fails_positivity() {
        let p = PotentialSpec::custom(
            |u| -(1.0 - u * u).powi(2),
            |u| 4.0 * u * (1.0 - u * u),
            |u| 4.0 - 12.0 * u * u,
            |u| -24.0 * u,
        );
        let err = validate(&p, 100).unwrap_err();
        assert!(err.to_string().contains("positive"), "{err}");
    }

    #[test]
    fn odd_perturbation_fails_evenness() {
        let p = PotentialSpec::custom(
            |u| 0.25 * (1.0 - u * u).powi(2) + 0.1 * u,
            |u| u * u * u - u + 0.1,
            |u| 3.0 * u * u - 1.0,
            |u| 6.0 * u,
        );
        let err = validate(&p, 100).unwrap_err();
        assert!(err.to_string().contains("even"), "{err}");
    }

    #[test]
    fn custom_quartic_difference_matches_closed_form() {
        let q = quartic();
        let c = PotentialSpec::custom(
            |u| 0.25 * (1.0 - u * u).powi(2),
            |u| u * u * u - u,
            |u| 3.0 * u * u - 1.0,
            |u| 6.0 * u,
        );
        for &(u, w) in &[(0.3, -0.9), (1.1, 0.99), (-1.0, -1.0 + 1e-9)] {
            let a = q.difference(u, w);
            let b = c.difference(u, w);
            let direct = q.eval(u) - q.eval(w);
            assert!((a - b).abs() <= 1e-15 * (1.0 + a.abs()));
            assert!((a - direct).abs() <= 1e-14);
        }
    }

    #[test]
    fn too_few_samples_rejected() {
        assert!(validate(&quartic(), 8).is_err());
    }
}
