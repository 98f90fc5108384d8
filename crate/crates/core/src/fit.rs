//! Least-squares rate fits and algebraic-window detection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    /// `y = A t^p`
    PowerLaw,
    /// `y = A e^{-λ t}`
    Exponential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: Model,
    /// Power-law exponent `p`, or `-λ` for the exponential model.
    pub exponent: f64,
    /// Exponential rate `λ` (NaN for power laws).
    pub rate: f64,
    pub prefactor: f64,
    pub r2: f64,
    pub points: usize,
    pub window: (f64, f64),
}

/// Ordinary least squares `y = a + b x`; returns `(a, b, r²)`.
pub fn linear_regression(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    (intercept, slope, r2)
}

/// Fit `model` to the samples with `t` in `[window.0, window.1]`, in log space.
pub fn fit_rate(t: &[f64], y: &[f64], window: (f64, f64), model: Model) -> Result<FitResult> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&ti, &yi) in t.iter().zip(y) {
        if ti < window.0 || ti > window.1 || !(yi > 0.0) || !yi.is_finite() {
            continue;
        }
        let x = match model {
            Model::PowerLaw => {
                if ti <= 0.0 {
                    continue;
                }
                ti.ln()
            }
            Model::Exponential => ti,
        };
        xs.push(x);
        ys.push(yi.ln());
    }
    if xs.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{} usable points in [{}, {}], need 10",
            xs.len(),
            window.0,
            window.1
        )));
    }
    let (a, b, r2) = linear_regression(&xs, &ys);
    Ok(FitResult {
        model,
        exponent: b,
        rate: match model {
            Model::PowerLaw => f64::NAN,
            Model::Exponential => -b,
        },
        prefactor: a.exp(),
        r2,
        points: xs.len(),
        window,
    })
}

/// Knobs for [`detect_algebraic_window`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowOptions {
    /// Largest `|d slope / d log₁₀ t|` inside the window.
    pub max_curvature: f64,
    /// Local slopes must be below `-min_slope`.
    pub min_slope: f64,
    pub min_decades: f64,
    /// Half-width (in samples) of the local slope regression.
    pub half_span: usize,
    /// Samples with `y` at or below this are ignored.
    pub floor: f64,
}

impl Default for WindowOptions {
    fn default() -> Self {
        WindowOptions {
            max_curvature: 0.5,
            min_slope: 0.1,
            min_decades: 0.5,
            half_span: 2,
            floor: 1e-14,
        }
    }
}

/// Longest stretch (in decades) where the log-log slope of `y(t)` is
/// negative and nearly constant. Returns the window `(t_start, t_end)`.
pub fn detect_algebraic_window(t: &[f64], y: &[f64], opts: &WindowOptions) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(&ti, &yi)| ti > 0.0 && yi > opts.floor && yi.is_finite())
        .map(|(&ti, &yi)| (ti.log10(), yi.log10()))
        .collect();
    let m = pts.len();
    let h = opts.half_span.max(1);
    if m < 2 * h + 3 {
        return Err(Error::WindowTooShort { decades: 0.0 });
    }
    let slope_at = |i: usize| {
        let lo = i.saturating_sub(h);
        let hi = (i + h).min(m - 1);
        let xs: Vec<f64> = pts[lo..=hi].iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts[lo..=hi].iter().map(|p| p.1).collect();
        linear_regression(&xs, &ys).1
    };
    let slopes: Vec<f64> = (0..m).map(slope_at).collect();
    let ok: Vec<bool> = (0..m)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(m - 1));
            let curv = if b > a {
                (slopes[b] - slopes[a]) / (pts[b].0 - pts[a].0)
            } else {
                0.0
            };
            slopes[i] < -opts.min_slope && curv.abs() <= opts.max_curvature
        })
        .collect();
    let mut best: Option<(usize, usize)> = None;
    let mut i = 0;
    while i < m {
        if !ok[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < m && ok[i + 1] {
            i += 1;
        }
        let len = pts[i].0 - pts[start].0;
        if best.is_none_or(|(s, e)| len > pts[e].0 - pts[s].0) {
            best = Some((start, i));
        }
        i += 1;
    }
    let (s, e) = best.ok_or(Error::WindowTooShort { decades: 0.0 })?;
    let decades = pts[e].0 - pts[s].0;
    if decades < opts.min_decades {
        return Err(Error::WindowTooShort { decades });
    }
    Ok((10f64.powf(pts[s].0), 10f64.powf(pts[e].0)))
}

/// Best split of `ln y` against `t` into two linear segments; returns the
/// changepoint time.
pub fn two_segment_changepoint(t: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(_, &yi)| yi > 0.0 && yi.is_finite())
        .map(|(&ti, &yi)| (ti, yi.ln()))
        .collect();
    let m = pts.len();
    if m < 6 {
        return None;
    }
    let sse = |seg: &[(f64, f64)]| {
        let xs: Vec<f64> = seg.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = seg.iter().map(|p| p.1).collect();
        let (a, b, _) = linear_regression(&xs, &ys);
        seg.iter().map(|p| (p.1 - a - b * p.0).powi(2)).sum::<f64>()
    };
    (2..m - 2)
        .map(|k| (k, sse(&pts[..=k]) + sse(&pts[k..])))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(k, _)| pts[k].0)
}
