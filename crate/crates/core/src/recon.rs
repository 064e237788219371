//! Normal-field integration and detrending.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::net::{infer_normals, Model};
use crate::raster::{HeightMap, NormalMap, MM_PER_PIXEL};
use crate::spectral::{self, signed_index};
use crate::{Error, Result, TactileImage};

/// Derivative symbol used by the Poisson solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoissonSymbol {
    /// Exact spectral derivative, `i·k`.
    #[default]
    Spectral,
    /// Symbol of the two-point central difference, `i·sin k`.
    CentralDifference,
}

/// Boundary handling of the high-pass detrend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Filter the raster as-is (implicitly periodic).
    #[default]
    Periodic,
    /// Filter the even extension, avoiding the wrap-around seam of
    /// non-periodic trends such as tilt.
    Mirror,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconConfig {
    /// High-pass cutoff in cycles per pixel.
    pub cutoff: f64,
    pub border_crop: usize,
    pub pixel_pitch_mm: f64,
    pub symbol: PoissonSymbol,
    pub boundary: Boundary,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            cutoff: 0.002,
            border_crop: 100,
            pixel_pitch_mm: MM_PER_PIXEL,
            symbol: PoissonSymbol::Spectral,
            boundary: Boundary::Periodic,
        }
    }
}

impl ReconConfig {
    /// Same physical cutoff and border at a resampled pixel pitch.
    pub fn for_pitch(pixel_pitch_mm: f64) -> Self {
        let d = Self::default();
        let f = pixel_pitch_mm / d.pixel_pitch_mm;
        Self {
            cutoff: d.cutoff * f,
            border_crop: (d.border_crop as f64 / f).round() as usize,
            pixel_pitch_mm,
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0 && self.cutoff < 0.5) {
            return Err(Error::invalid(format!("cutoff {} outside (0, 0.5)", self.cutoff)));
        }
        if !(self.pixel_pitch_mm > 0.0) {
            return Err(Error::invalid("pixel pitch must be positive"));
        }
        Ok(())
    }
}

/// Least-squares height (µm) whose gradient matches the slopes implied by
/// `n`, under periodic boundaries, with zero mean.
pub fn integrate_normals(n: &NormalMap, pitch_mm: f64, symbol: PoissonSymbol) -> Result<HeightMap> {
    if !(pitch_mm > 0.0) {
        return Err(Error::invalid("pixel pitch must be positive"));
    }
    let pitch_um = pitch_mm * 1000.0;
    let mut p = Vec::with_capacity(n.data().len());
    let mut q = Vec::with_capacity(n.data().len());
    for (i, v) in n.data().iter().enumerate() {
        if !(v[2] > 0.0) {
            return Err(Error::invalid(format!("nz <= 0 at pixel {i}")));
        }
        p.push(-v[0] / v[2] * pitch_um);
        q.push(-v[1] / v[2] * pitch_um);
    }
    let data = integrate_slopes(&p, &q, n.width(), n.height(), symbol);
    HeightMap::new(n.width(), n.height(), data, pitch_mm)
}

/// Spectral Poisson solve for per-pixel slopes `p = ∂h/∂col`, `q = ∂h/∂row`.
pub fn integrate_slopes(p: &[f64], q: &[f64], w: usize, h: usize, symbol: PoissonSymbol) -> Vec<f64> {
    let ps = spectral::forward(p, w, h);
    let qs = spectral::forward(q, w, h);
    let omega = |k: usize, n: usize| {
        let a = 2.0 * PI * signed_index(k, n) as f64 / n as f64;
        match symbol {
            PoissonSymbol::Spectral => a,
            PoissonSymbol::CentralDifference => a.sin(),
        }
    };
    let wx: Vec<f64> = (0..w).map(|k| omega(k, w)).collect();
    let wy: Vec<f64> = (0..h).map(|k| omega(k, h)).collect();
    let mut hs = vec![Complex64::default(); w * h];
    let minus_i = Complex64::new(0.0, -1.0);
    for r in 0..h {
        for c in 0..w {
            let den = wx[c] * wx[c] + wy[r] * wy[r];
            let i = r * w + c;
            if den > 1e-20 {
                hs[i] = minus_i * (ps[i] * wx[c] + qs[i] * wy[r]) / den;
            }
        }
    }
    let mut out = spectral::inverse_real(hs, w, h);
    let mean = out.iter().sum::<f64>() / out.len() as f64;
    out.iter_mut().for_each(|v| *v -= mean);
    out
}

fn hard_highpass(data: &[f64], w: usize, h: usize, cutoff: f64) -> Vec<f64> {
    let mut s = spectral::forward(data, w, h);
    let c2 = cutoff * cutoff;
    for r in 0..h {
        let fy = signed_index(r, h) as f64 / h as f64;
        for c in 0..w {
            let fx = signed_index(c, w) as f64 / w as f64;
            if fx * fx + fy * fy < c2 {
                s[r * w + c] = Complex64::default();
            }
        }
    }
    spectral::inverse_real(s, w, h)
}

/// Removes every Fourier component with radial frequency below `cutoff`
/// cycles/pixel, DC included.
pub fn highpass_detrend(hm: &HeightMap, cutoff: f64, boundary: Boundary) -> Result<HeightMap> {
    if !(cutoff > 0.0 && cutoff < 0.5) {
        return Err(Error::invalid(format!("cutoff {cutoff} outside (0, 0.5)")));
    }
    let (w, h) = (hm.width(), hm.height());
    let data = match boundary {
        Boundary::Periodic => hard_highpass(hm.data(), w, h, cutoff),
        Boundary::Mirror => {
            let ext = spectral::mirror_extend(hm.data(), w, h);
            let filtered = hard_highpass(&ext, 2 * w, 2 * h, cutoff);
            spectral::top_left(&filtered, 2 * w, w, h)
        }
    };
    HeightMap::new(w, h, data, hm.mm_per_pixel())
}

/// Integrates, detrends and crops an already estimated normal field.
pub fn normals_to_height(n: &NormalMap, cfg: &ReconConfig) -> Result<HeightMap> {
    cfg.validate()?;
    let raw = integrate_normals(n, cfg.pixel_pitch_mm, cfg.symbol)?;
    let detrended = highpass_detrend(&raw, cfg.cutoff, cfg.boundary)?;
    detrended.crop_border(cfg.border_crop)
}

/// Full pipeline from a tactile frame and its untouched reference.
pub fn reconstruct(
    model: &Model,
    image: &TactileImage,
    untouched: &TactileImage,
    cfg: &ReconConfig,
) -> Result<HeightMap> {
    let n = infer_normals(model, image, untouched)?;
    normals_to_height(&n, cfg)
}
