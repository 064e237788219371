//! Browser demo: render a channel object, reconstruct it from the rendered
//! frame, and run the wrinkle analysis on a synthetic skin patch.
//!
//! The page has no trained estimator, so normals come from inverting the
//! known lighting model directly.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use tactilemap_core::channels::{self, DepthStats, MeasureConfig};
use tactilemap_core::recon::{self, ReconConfig};
use tactilemap_core::sim::{self, ChannelObjectSpec, LightingModel};
use tactilemap_core::wrinkles::{self, WrinkleConfig};
use tactilemap_core::{HeightMap, SensorGeometry, TactileImage};

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// RGBA bytes of an RGB image in `[0, 1]`.
pub fn image_rgba(img: &TactileImage) -> Vec<u8> {
    img.data()
        .chunks_exact(3)
        .flat_map(|p| {
            let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            [q(p[0]), q(p[1]), q(p[2]), 255]
        })
        .collect()
}

/// Grey RGBA of a height map, lowest point black.
pub fn height_rgba(h: &HeightMap) -> Vec<u8> {
    let lo = h.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = h.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    h.data()
        .iter()
        .flat_map(|&v| {
            let g = ((v - lo) / span * 255.0).round() as u8;
            [g, g, g, 255]
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct ReconReport {
    pub width: usize,
    pub height: usize,
    pub designed_um: f64,
    pub stats: DepthStats,
    pub error_um: f64,
}

/// A rendered channel object kept between calls.
#[wasm_bindgen]
pub struct Scene {
    spec: ChannelObjectSpec,
    geom: SensorGeometry,
    lights: LightingModel,
    image: TactileImage,
    recon: Option<HeightMap>,
}

#[wasm_bindgen]
impl Scene {
    /// `layout` is `"straight"` or `"circular"`.
    #[wasm_bindgen(constructor)]
    pub fn new(layout: &str, width_um: f64, depth_um: f64, size: usize, noise: f64, seed: u32) -> Result<Scene, JsValue> {
        Scene::build(layout, width_um, depth_um, size, noise, seed as u64).map_err(js_err)
    }

    pub fn size(&self) -> usize {
        self.geom.crop_size
    }

    pub fn image_rgba(&self) -> Vec<u8> {
        image_rgba(&self.image)
    }

    /// Reconstructs with the cutoff scaled by `cutoff_scale` and returns a
    /// JSON report of the measured channel depth.
    pub fn reconstruct(&mut self, cutoff_scale: f64) -> Result<String, JsValue> {
        let report = self.reconstruct_report(cutoff_scale).map_err(js_err)?;
        serde_json::to_string(&report).map_err(js_err)
    }

    /// Side of the last reconstruction, 0 before the first.
    pub fn recon_size(&self) -> usize {
        self.recon.as_ref().map_or(0, |h| h.width())
    }

    pub fn recon_rgba(&self) -> Vec<u8> {
        self.recon.as_ref().map(height_rgba).unwrap_or_default()
    }
}

impl Scene {
    pub fn build(layout: &str, width_um: f64, depth_um: f64, size: usize, noise: f64, seed: u64) -> Result<Scene, String> {
        let spec = match layout {
            "straight" => ChannelObjectSpec::straight(width_um, depth_um),
            "circular" => ChannelObjectSpec::circular(width_um, depth_um),
            other => return Err(format!("unknown layout {other:?}")),
        };
        if !(32..=1024).contains(&size) {
            return Err("size must be between 32 and 1024 px".into());
        }
        let geom = SensorGeometry::default().resampled(size);
        let lights = LightingModel::default().with_noise(noise);
        let h = sim::channel_object(&spec, &geom).map_err(|e| e.to_string())?;
        let image = sim::render(&h, &lights, seed).map_err(|e| e.to_string())?;
        Ok(Scene {
            spec,
            geom,
            lights,
            image,
            recon: None,
        })
    }

    pub fn reconstruct_report(&mut self, cutoff_scale: f64) -> tactilemap_core::Result<ReconReport> {
        let base = ReconConfig::for_pitch(self.geom.mm_per_pixel);
        let cfg = ReconConfig {
            cutoff: base.cutoff * cutoff_scale,
            ..base
        };
        let normals = sim::photometric_normals(&self.image, &self.lights)?;
        let h = recon::normals_to_height(&normals, &cfg)?;
        let circular = matches!(self.spec.layout, sim::ChannelLayout::Circular { .. });
        let m = MeasureConfig::for_channels(self.spec.channel_width_um / h.pitch_um(), circular);
        let (_, stats) = channels::measure(&h, &m)?;
        let report = ReconReport {
            width: h.width(),
            height: h.height(),
            designed_um: self.spec.depth_um,
            error_um: stats.mean - self.spec.depth_um,
            stats,
        };
        self.recon = Some(h);
        Ok(report)
    }
}

#[derive(Debug, Serialize)]
pub struct WrinkleReport {
    pub skeleton_pixels: usize,
    pub samples: usize,
    pub depth_at_percentile_um: f64,
    pub gaussian_mean_um: f64,
    pub gaussian_sd_um: f64,
    pub histogram: wrinkles::Histogram,
}

/// Wrinkle analysis of a sinusoidal skin patch crossed by a second,
/// weaker set of furrows at `angle_deg`.
#[wasm_bindgen]
pub struct WrinklePatch {
    height: HeightMap,
    skeleton: Option<tactilemap_core::raster::Mask>,
}

#[wasm_bindgen]
impl WrinklePatch {
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize, amplitude_um: f64, period_px: f64, angle_deg: f64) -> Result<WrinklePatch, JsValue> {
        WrinklePatch::build(size, amplitude_um, period_px, angle_deg).map_err(js_err)
    }

    pub fn size(&self) -> usize {
        self.height.width()
    }

    pub fn height_rgba(&self) -> Vec<u8> {
        height_rgba(&self.height)
    }

    pub fn analyze(&mut self, radius_px: usize, seed: u32) -> Result<String, JsValue> {
        let report = self.analyze_report(radius_px, seed as u64).map_err(js_err)?;
        serde_json::to_string(&report).map_err(js_err)
    }

    /// Height preview with skeleton pixels in red.
    pub fn overlay_rgba(&self) -> Vec<u8> {
        let mut px = height_rgba(&self.height);
        if let Some(m) = &self.skeleton {
            for (i, &on) in m.data().iter().enumerate() {
                if on {
                    px[4 * i..4 * i + 3].copy_from_slice(&[230, 30, 30]);
                }
            }
        }
        px
    }
}

impl WrinklePatch {
    pub fn build(size: usize, amplitude_um: f64, period_px: f64, angle_deg: f64) -> Result<WrinklePatch, String> {
        if !(16..=1024).contains(&size) || !(period_px > 2.0) {
            return Err("size must be 16..1024 px and the period above 2 px".into());
        }
        let (s, c) = angle_deg.to_radians().sin_cos();
        let tau = std::f64::consts::TAU;
        let height = HeightMap::from_fn(size, size, 0.0077, |r, col| {
            let (x, y) = (col as f64, r as f64);
            amplitude_um * (tau * x / period_px).sin() + 0.3 * amplitude_um * (tau * (c * x + s * y) / (1.7 * period_px)).sin()
        });
        Ok(WrinklePatch { height, skeleton: None })
    }

    pub fn analyze_report(&mut self, radius_px: usize, seed: u64) -> tactilemap_core::Result<WrinkleReport> {
        let cfg = WrinkleConfig {
            radius_px,
            ..WrinkleConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (skel, s) = wrinkles::analyze(&self.height, &cfg, &mut rng)?;
        let report = WrinkleReport {
            skeleton_pixels: skel.mask.count(),
            samples: s.depths.len(),
            depth_at_percentile_um: s.p80,
            gaussian_mean_um: s.gaussian_mean,
            gaussian_sd_um: s.gaussian_sd,
            histogram: s.histogram,
        };
        self.skeleton = Some(skel.mask);
        Ok(report)
    }
}
