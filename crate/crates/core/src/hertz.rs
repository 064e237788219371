//! Hertzian contact of a rigid sphere on an elastic half-space.
//!
//! Units: displacement and radius in mm, force in N, modulus in kPa.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// kPa · mm² expressed in newtons.
pub const KPA_MM2_IN_N: f64 = 1e-3;
pub const DEFAULT_POISSON_RATIO: f64 = 0.49;

/// Force-per-modulus factor `g(d) = 4/3 · √R · d^{3/2} / (1 − ν²)` in N/kPa.
fn shape(d: f64, nu: f64, r: f64) -> f64 {
    4.0 / 3.0 * r.sqrt() * d.powf(1.5) / (1.0 - nu * nu) * KPA_MM2_IN_N
}

pub fn hertz_force(d_mm: f64, e2_kpa: f64, nu: f64, radius_mm: f64) -> Result<f64> {
    if !(d_mm >= 0.0) {
        return Err(Error::invalid(format!("indentation depth {d_mm} mm must be non-negative")));
    }
    check_material(nu, radius_mm)?;
    Ok(e2_kpa * shape(d_mm, nu, radius_mm))
}

fn check_material(nu: f64, r: f64) -> Result<()> {
    if !(nu > 0.0 && nu < 0.5) {
        return Err(Error::invalid(format!("Poisson ratio {nu} outside (0, 0.5)")));
    }
    if !(r > 0.0) {
        return Err(Error::invalid(format!("indenter radius {r} mm must be positive")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceCurve {
    pub displacement_mm: Vec<f64>,
    pub force_n: Vec<f64>,
    pub indenter_radius_mm: f64,
    pub poisson_ratio: f64,
}

#[derive(Debug, Deserialize)]
struct CurveRow {
    displacement_mm: f64,
    force_n: f64,
}

impl ForceCurve {
    pub fn new(displacement_mm: Vec<f64>, force_n: Vec<f64>, indenter_radius_mm: f64, poisson_ratio: f64) -> Result<Self> {
        let c = Self {
            displacement_mm,
            force_n,
            indenter_radius_mm,
            poisson_ratio,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.displacement_mm.len() != self.force_n.len() {
            return Err(Error::dims(self.displacement_mm.len(), self.force_n.len()));
        }
        if self.force_n.len() < 3 {
            return Err(Error::invalid("force curve needs at least 3 points"));
        }
        if self.displacement_mm.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(Error::invalid("displacements must be non-decreasing"));
        }
        if self.force_n.iter().chain(&self.displacement_mm).any(|v| !v.is_finite()) {
            return Err(Error::invalid("force curve has non-finite values"));
        }
        check_material(self.poisson_ratio, self.indenter_radius_mm)
    }

    /// Reads `displacement_mm,force_n` columns.
    pub fn from_csv(reader: impl Read, indenter_radius_mm: f64, poisson_ratio: f64) -> Result<Self> {
        let rows: Vec<CurveRow> = crate::data::read_rows(reader)?;
        let (d, f) = rows.into_iter().map(|r| (r.displacement_mm, r.force_n)).unzip();
        Self::new(d, f, indenter_radius_mm, poisson_ratio)
    }

    pub fn load_csv(path: impl AsRef<Path>, indenter_radius_mm: f64, poisson_ratio: f64) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(f, indenter_radius_mm, poisson_ratio)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HertzFit {
    pub e2_kpa: f64,
    pub residual_rms_n: f64,
    pub iterations: usize,
    /// Fitted contact offset, when requested.
    pub d0_mm: Option<f64>,
}

/// Least-squares modulus for a fixed contact offset; returns (E2, SSE).
fn solve_e2(c: &ForceCurve, d0: f64) -> Option<(f64, f64)> {
    let g: Vec<f64> = c
        .displacement_mm
        .iter()
        .map(|&d| shape((d - d0).max(0.0), c.poisson_ratio, c.indenter_radius_mm))
        .collect();
    let gg: f64 = g.iter().map(|x| x * x).sum();
    if gg <= 0.0 {
        return None;
    }
    let e2 = g.iter().zip(&c.force_n).map(|(a, f)| a * f).sum::<f64>() / gg;
    let sse = g.iter().zip(&c.force_n).map(|(a, f)| (f - e2 * a).powi(2)).sum();
    Some((e2, sse))
}

/// Closed-form least squares: the model is linear in E2.
pub fn fit_modulus(curve: &ForceCurve) -> Result<HertzFit> {
    curve.validate()?;
    if curve.displacement_mm.iter().filter(|&&d| d > 0.0).count() < 3 {
        return Err(Error::IllPosed("fewer than 3 points with positive displacement".into()));
    }
    let (e2, sse) = solve_e2(curve, 0.0).ok_or_else(|| Error::IllPosed("all displacements are zero".into()))?;
    finish(curve, e2, sse, 1, None)
}

/// Fits E2 together with a contact offset `d0`, using `max(0, d − d0)` as
/// the indentation. E2 is profiled out in closed form; `d0` is located on a
/// grid over the displacement range and refined by golden-section search.
pub fn fit_modulus_with_offset(curve: &ForceCurve) -> Result<HertzFit> {
    curve.validate()?;
    let d = &curve.displacement_mm;
    let (lo, hi) = (d[0], d[d.len() - 1]);
    if !(hi > lo) {
        return Err(Error::IllPosed("displacements span no range".into()));
    }
    // Keep at least 3 loaded points.
    let hi = d[d.len() - 3];
    let sse = |d0: f64| solve_e2(curve, d0).map_or(f64::INFINITY, |s| s.1);
    const GRID: usize = 200;
    let step = (hi - lo) / GRID as f64;
    let mut evals = 0;
    let (mut best, mut best_sse) = (lo, f64::INFINITY);
    for i in 0..=GRID {
        let x = lo + i as f64 * step;
        let s = sse(x);
        evals += 1;
        if s < best_sse {
            (best, best_sse) = (x, s);
        }
    }
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = ((best - step).max(lo), (best + step).min(hi));
    while b - a > 1e-12 * (1.0 + hi.abs()) && evals < 500 {
        let x1 = b - phi * (b - a);
        let x2 = a + phi * (b - a);
        evals += 2;
        if sse(x1) <= sse(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    let d0 = if sse((a + b) / 2.0) <= best_sse { (a + b) / 2.0 } else { best };
    let (e2, s) = solve_e2(curve, d0).ok_or_else(|| Error::IllPosed("no loaded points".into()))?;
    finish(curve, e2, s, evals, Some(d0))
}

fn finish(curve: &ForceCurve, e2: f64, sse: f64, iterations: usize, d0_mm: Option<f64>) -> Result<HertzFit> {
    if !(e2 > 0.0) {
        return Err(Error::IllPosed(format!("fitted modulus {e2} kPa is not positive")));
    }
    Ok(HertzFit {
        e2_kpa: e2,
        residual_rms_n: (sse / curve.force_n.len() as f64).sqrt(),
        iterations,
        d0_mm,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusSummary {
    pub trials_kpa: Vec<f64>,
    pub mean_kpa: f64,
    pub sd_kpa: f64,
}

pub fn summarize_trials(trials_kpa: &[f64]) -> Result<ModulusSummary> {
    if trials_kpa.is_empty() {
        return Err(Error::EmptyResult("no trials".into()));
    }
    Ok(ModulusSummary {
        trials_kpa: trials_kpa.to_vec(),
        mean_kpa: crate::stats::mean(trials_kpa),
        sd_kpa: crate::stats::sd_sample(trials_kpa).unwrap_or(0.0),
    })
}

/// Noise-free curve sampled at `n` evenly spaced depths in `(0, d_max]`.
pub fn synthetic_curve(e2_kpa: f64, nu: f64, radius_mm: f64, d_max_mm: f64, n: usize) -> Result<ForceCurve> {
    let d: Vec<f64> = (1..=n).map(|i| d_max_mm * i as f64 / n as f64).collect();
    let f = d.iter().map(|&x| hertz_force(x, e2_kpa, nu, radius_mm)).collect::<Result<_>>()?;
    ForceCurve::new(d, f, radius_mm, nu)
}
