//! Indentation calibration: grid plan, automatic touch detection, ground
//! truth normals and dataset assembly.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::net::build_mask;
use crate::raster::{self, Mask, NormalMap, Raster, SensorGeometry};
use crate::sim::VirtualProbe;
use crate::{Error, Result, TactileImage};

/// Plan axis values in mm, shared by x and y.
pub const PLAN_AXIS_MM: [f64; 7] = [-4.5, -3.0, -1.5, 0.0, 1.5, 3.0, 4.5];

/// Indenter radii in mm used for the calibration set.
pub const INDENTER_RADII_MM: [f64; 3] = [0.5, 0.875, 1.25];

/// Radial fraction beyond which ground-truth normals are frozen.
pub const RIM_CLAMP: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPlan {
    /// `(x mm, y mm)` pairs.
    pub positions: Vec<(f64, f64)>,
    pub indenter_radius_mm: f64,
}

impl GridPlan {
    /// The 7 × 7 plan, x varying fastest.
    pub fn standard(indenter_radius_mm: f64) -> Self {
        let positions = PLAN_AXIS_MM
            .iter()
            .flat_map(|&y| PLAN_AXIS_MM.iter().map(move |&x| (x, y)))
            .collect();
        Self {
            positions,
            indenter_radius_mm,
        }
    }

    /// Index of the `(0, 0)` position, if present.
    pub fn origin_index(&self) -> Option<usize> {
        self.positions.iter().position(|&(x, y)| x == 0.0 && y == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TouchParams {
    pub down_step_um: i64,
    pub up_step_um: i64,
    pub frames_per_reading: usize,
    /// Side of the square comparison window, px.
    pub crop_px: usize,
    pub touch_factor: f64,
    pub untouch_factor: f64,
    /// Maximum descent before giving up, µm.
    pub travel_limit_um: i64,
}

impl Default for TouchParams {
    fn default() -> Self {
        Self {
            down_step_um: 50,
            up_step_um: 15,
            frames_per_reading: 5,
            crop_px: 300,
            touch_factor: 1.1,
            untouch_factor: 0.7,
            travel_limit_um: 5000,
        }
    }
}

impl TouchParams {
    /// Defaults with the comparison window scaled to a resampled geometry.
    pub fn for_geometry(geom: &SensorGeometry) -> Self {
        let d = Self::default();
        Self {
            crop_px: ((d.crop_px as f64) * geom.crop_size as f64 / 1500.0).round().max(3.0) as usize,
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.down_step_um <= 0
            || self.up_step_um <= 0
            || self.frames_per_reading < 2
            || self.crop_px == 0
            || !(self.touch_factor > 0.0)
            || !(self.untouch_factor > 0.0)
            || self.travel_limit_um <= 0
        {
            return Err(Error::invalid("touch parameters must be positive (and >= 2 frames)"));
        }
        if self.up_step_um >= self.down_step_um {
            return Err(Error::invalid("up step must be smaller than down step"));
        }
        Ok(())
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn window_around(img: &TactileImage, center: (f64, f64), size: usize) -> Result<TactileImage> {
    let size = size.min(img.width()).min(img.height());
    let start = |c: f64, n: usize| {
        let s = (c.round() as i64 - size as i64 / 2).clamp(0, (n - size) as i64);
        s as usize
    };
    img.window(start(center.0, img.height()), start(center.1, img.width()), size, size)
}

/// Trace of one touch-detection run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TouchTrace {
    pub z_mm: f64,
    pub e_untouched: f64,
    pub e_final: f64,
    pub descent_steps: usize,
    pub ascent_steps: usize,
}

/// Two-phase search: coarse descent until the image departs from the
/// untouched reference, then fine ascent until it returns. Returns the
/// final probe height in mm.
pub fn detect_touch(probe: &mut VirtualProbe, params: &TouchParams) -> Result<f64> {
    detect_touch_traced(probe, params).map(|t| t.z_mm)
}

pub fn detect_touch_traced(probe: &mut VirtualProbe, params: &TouchParams) -> Result<TouchTrace> {
    params.validate()?;
    let center = probe.center_px;
    let crops = |frames: Vec<TactileImage>| -> Result<Vec<TactileImage>> {
        frames
            .iter()
            .map(|f| window_around(f, center, params.crop_px))
            .collect()
    };
    let k = params.frames_per_reading;
    let reference_frames = crops(probe.capture(k)?)?;
    let reference = TactileImage::median_of(&reference_frames)?;
    let mut pairwise = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            pairwise.push(reference_frames[i].mse(&reference_frames[j])?);
        }
    }
    let e_untouched = median(&mut pairwise);
    let t_touch = params.touch_factor * e_untouched;

    let reading = |probe: &mut VirtualProbe| -> Result<f64> {
        let mut errs = crops(probe.capture(k)?)?
            .iter()
            .map(|f| f.mse(&reference))
            .collect::<Result<Vec<_>>>()?;
        Ok(median(&mut errs))
    };

    let start = probe.z_um();
    let mut descent_steps = 0;
    let e_final = loop {
        if start - probe.z_um() + params.down_step_um > params.travel_limit_um {
            return Err(Error::NoContact {
                travel_mm: params.travel_limit_um as f64 / 1000.0,
            });
        }
        probe.move_by_um(-params.down_step_um);
        descent_steps += 1;
        let e = reading(probe)?;
        if e > t_touch {
            break e;
        }
    };

    let t_untouch = params.untouch_factor * e_final;
    let mut ascent_steps = 0;
    loop {
        probe.move_by_um(params.up_step_um);
        ascent_steps += 1;
        if reading(probe)? < t_untouch {
            break;
        }
        if probe.z_um() > start {
            return Err(Error::NoContact {
                travel_mm: params.travel_limit_um as f64 / 1000.0,
            });
        }
    }
    Ok(TouchTrace {
        z_mm: probe.z_mm(),
        e_untouched,
        e_final,
        descent_steps,
        ascent_steps,
    })
}

/// Outcome of one randomized touch-detection run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TouchScenario {
    pub scenario: usize,
    pub noise_sigma: f64,
    pub indenter_radius_mm: f64,
    pub center_px: (f64, f64),
    pub surface_z_um: f64,
    pub start_z_um: i64,
    pub detected_z_um: f64,
    /// Detected minus true surface height; positive means above the gel.
    pub error_um: f64,
}

/// Runs `n` touch searches with random surface height (a sub-micrometre
/// offset included), start clearance, indenter, position and noise level
/// in `[max_noise / 10, max_noise]`.
pub fn touch_scenarios(
    geom: &SensorGeometry,
    lights: &crate::sim::LightingModel,
    params: &TouchParams,
    n: usize,
    max_noise: f64,
    seed: u64,
) -> Result<Vec<TouchScenario>> {
    use rand::Rng;
    if !(max_noise >= 0.0) {
        return Err(Error::invalid("noise level must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = geom.crop_size as f64;
    (0..n)
        .map(|i| {
            let sigma = if max_noise > 0.0 { rng.random_range(max_noise / 10.0..=max_noise) } else { 0.0 };
            let radius = INDENTER_RADII_MM[rng.random_range(0..INDENTER_RADII_MM.len())];
            let margin = size / 4.0;
            let center = (rng.random_range(margin..size - margin), rng.random_range(margin..size - margin));
            let surface_um: f64 = rng.random_range(-500.0..500.0);
            let start = surface_um.round() as i64 + rng.random_range(100..400);
            let mut probe = VirtualProbe::new(*geom, lights.clone().with_noise(sigma), radius, center, rng.random());
            probe.surface_z_mm = surface_um / 1000.0;
            probe.move_to_um(start);
            let z_mm = detect_touch(&mut probe, params)?;
            Ok(TouchScenario {
                scenario: i,
                noise_sigma: sigma,
                indenter_radius_mm: radius,
                center_px: center,
                surface_z_um: surface_um,
                start_z_um: start,
                detected_z_um: z_mm * 1000.0,
                error_um: z_mm * 1000.0 - surface_um,
            })
        })
        .collect()
}

/// Ground-truth normals of a sphere of radius `radius_px` pressed in to
/// its full radius at `center_px = (row, col)` on a `dims = (w, h)` raster.
pub fn gt_normals_for_sphere(center_px: (f64, f64), radius_px: f64, dims: (usize, usize)) -> Result<NormalMap> {
    let (w, h) = dims;
    if !(radius_px > 0.0) {
        return Err(Error::invalid("sphere radius must be positive"));
    }
    if !(center_px.0 >= 0.0 && center_px.1 >= 0.0 && center_px.0 < h as f64 && center_px.1 < w as f64) {
        return Err(Error::invalid(format!("center {center_px:?} outside {w}x{h}")));
    }
    let rmax = RIM_CLAMP * radius_px;
    let mut data = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let dy = r as f64 - center_px.0;
            let dx = c as f64 - center_px.1;
            let rho = (dx * dx + dy * dy).sqrt();
            if rho > radius_px {
                data.push([0.0, 0.0, 1.0]);
                continue;
            }
            let (dx, dy, rho) = if rho > rmax {
                let s = rmax / rho;
                (dx * s, dy * s, rmax)
            } else {
                (dx, dy, rho)
            };
            // bowl of the imprint: the surface tilts towards the center
            let nz = (1.0 - (rho / radius_px).powi(2)).sqrt();
            let v = [-dx / radius_px, -dy / radius_px, nz];
            let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            data.push([v[0] / norm, v[1] / norm, v[2] / norm]);
        }
    }
    NormalMap::new(w, h, data)
}

/// Pixel centers of every plan position given the center of `(0, 0)`.
/// Plan +x maps to +column and +y to +row.
pub fn propagate_centers(
    center0_px: (f64, f64),
    plan: &GridPlan,
    mm_per_px: f64,
    dims: (usize, usize),
) -> Result<Vec<(f64, f64)>> {
    if !(mm_per_px > 0.0) {
        return Err(Error::invalid("mm_per_px must be positive"));
    }
    let (w, h) = dims;
    let centers: Vec<(f64, f64)> = plan
        .positions
        .iter()
        .map(|&(x, y)| (center0_px.0 + y / mm_per_px, center0_px.1 + x / mm_per_px))
        .collect();
    let outside: Vec<usize> = centers
        .iter()
        .enumerate()
        .filter(|(_, &(r, c))| !(r >= 0.0 && c >= 0.0 && r <= (h - 1) as f64 && c <= (w - 1) as f64))
        .map(|(i, _)| i)
        .collect();
    if outside.is_empty() {
        Ok(centers)
    } else {
        Err(Error::OutOfFrame(outside))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndentationSample {
    pub image: TactileImage,
    pub untouched: TactileImage,
    pub gt_normals: NormalMap,
    pub mask: Mask,
    /// `(row, col)`.
    pub center_px: (f64, f64),
    pub indenter_radius_px: f64,
    pub indenter_radius_mm: f64,
    pub plan_index: usize,
    /// The `(0, 0)` frame whose center is labelled by hand.
    pub label_source: bool,
    pub z_touch_mm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub radii_mm: [f64; 3],
    pub touch: TouchParams,
    /// Fraction of the raster area added to the mask outside the box.
    pub mask_gamma: f64,
    /// Mask box half-width as a multiple of the indenter radius in px.
    pub box_scale: f64,
    pub test_fraction: f64,
    /// Clearance height the probe returns to between positions, µm.
    pub clearance_um: i64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            radii_mm: INDENTER_RADII_MM,
            touch: TouchParams::default(),
            mask_gamma: 0.05,
            box_scale: 1.1,
            test_fraction: 0.1,
            clearance_um: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<IndentationSample>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Dataset {
    /// Indices of all samples except the hand-labelled `(0, 0)` frames.
    pub fn without_label_sources(&self) -> Vec<usize> {
        (0..self.samples.len()).filter(|&i| !self.samples[i].label_source).collect()
    }
}

/// Seeded train/test partition of `0..n`.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64) * test_fraction).round() as usize;
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

/// Runs the calibration protocol over every radius and plan position.
///
/// `center0_px` is the pixel center of plan position `(0, 0)`; `plan`
/// supplies the positions (its radius is overridden per pass).
pub fn build_dataset(
    probe: &mut VirtualProbe,
    plan: &GridPlan,
    center0_px: (f64, f64),
    cfg: &DatasetConfig,
) -> Result<Dataset> {
    if !(cfg.mask_gamma >= 0.0 && cfg.mask_gamma < 1.0) {
        return Err(Error::invalid("mask gamma must lie in [0, 1)"));
    }
    let geom = probe.geometry;
    let n = geom.crop_size;
    let centers = propagate_centers(center0_px, plan, geom.mm_per_pixel, (n, n))?;
    let origin = plan.origin_index();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut samples = Vec::with_capacity(cfg.radii_mm.len() * centers.len());
    for &radius_mm in &cfg.radii_mm {
        probe.indenter_radius_mm = radius_mm;
        let radius_px = radius_mm / geom.mm_per_pixel;
        let radius_um = (radius_mm * 1000.0).round() as i64;
        for (i, &center) in centers.iter().enumerate() {
            probe.move_to_um((probe.surface_z_mm * 1000.0).round() as i64 + cfg.clearance_um);
            probe.move_to_xy(center);
            let untouched = TactileImage::median_of(&probe.capture(cfg.touch.frames_per_reading)?)?;
            let z_touch_mm = detect_touch(probe, &cfg.touch)?;
            probe.move_by_um(-radius_um);
            let image = probe.capture(1)?.remove(0);
            let gt_normals = gt_normals_for_sphere(center, radius_px, (n, n))?;
            let mask = build_mask((n, n), center, cfg.box_scale * radius_px, cfg.mask_gamma, &mut rng)?;
            samples.push(IndentationSample {
                image,
                untouched,
                gt_normals,
                mask,
                center_px: center,
                indenter_radius_px: radius_px,
                indenter_radius_mm: radius_mm,
                plan_index: i,
                label_source: Some(i) == origin,
                z_touch_mm,
            });
        }
    }
    let (train, test) = split_indices(samples.len(), cfg.test_fraction, cfg.seed);
    Ok(Dataset { samples, train, test })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub image: PathBuf,
    pub untouched: PathBuf,
    pub gt_normals: PathBuf,
    pub mask: PathBuf,
    pub center_px: (f64, f64),
    pub indenter_radius_px: f64,
    pub indenter_radius_mm: f64,
    pub plan_index: usize,
    pub label_source: bool,
    pub z_touch_mm: f64,
    pub split: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub samples: Vec<SampleEntry>,
}

/// Writes every raster under `dir` and returns the manifest (also written
/// as `dir/dataset.json`). Paths in the manifest are relative to `dir`.
pub fn save_dataset(dir: &Path, ds: &Dataset) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(ds.samples.len());
    for (i, s) in ds.samples.iter().enumerate() {
        let name = |kind: &str| PathBuf::from(format!("sample_{i:03}_{kind}.tmr"));
        let files = [
            (name("image"), Raster::from(s.image.clone())),
            (name("untouched"), Raster::from(s.untouched.clone())),
            (name("normals"), Raster::from(s.gt_normals.clone())),
            (name("mask"), Raster::from(s.mask.clone())),
        ];
        for (p, r) in &files {
            raster::save_raster(dir.join(p), r)?;
        }
        let split = if ds.test.binary_search(&i).is_ok() { "test" } else { "train" };
        entries.push(SampleEntry {
            image: files[0].0.clone(),
            untouched: files[1].0.clone(),
            gt_normals: files[2].0.clone(),
            mask: files[3].0.clone(),
            center_px: s.center_px,
            indenter_radius_px: s.indenter_radius_px,
            indenter_radius_mm: s.indenter_radius_mm,
            plan_index: s.plan_index,
            label_source: s.label_source,
            z_touch_mm: s.z_touch_mm,
            split: split.to_string(),
        });
    }
    let manifest = DatasetManifest { samples: entries };
    let path = dir.join("dataset.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Loads a dataset from its `dataset.json` manifest.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: DatasetManifest = serde_json::from_slice(&bytes)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut samples = Vec::with_capacity(manifest.samples.len());
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, e) in manifest.samples.into_iter().enumerate() {
        let sample = IndentationSample {
            image: raster::load_image(dir.join(&e.image))?,
            untouched: raster::load_image(dir.join(&e.untouched))?,
            gt_normals: raster::load_normal_map(dir.join(&e.gt_normals))?,
            mask: raster::load_mask(dir.join(&e.mask))?,
            center_px: e.center_px,
            indenter_radius_px: e.indenter_radius_px,
            indenter_radius_mm: e.indenter_radius_mm,
            plan_index: e.plan_index,
            label_source: e.label_source,
            z_touch_mm: e.z_touch_mm,
        };
        let dims = (sample.image.width(), sample.image.height());
        for (w, h) in [
            (sample.untouched.width(), sample.untouched.height()),
            (sample.gt_normals.width(), sample.gt_normals.height()),
            (sample.mask.width(), sample.mask.height()),
        ] {
            if (w, h) != dims {
                return Err(Error::dims(format!("{}x{}", dims.0, dims.1), format!("{w}x{h}")));
            }
        }
        if e.split == "test" {
            test.push(i);
        } else {
            train.push(i);
        }
        samples.push(sample);
    }
    Ok(Dataset { samples, train, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::HeightMap;
    use crate::sim::{sphere_imprint, LightingModel};

    fn angle_deg(a: [f64; 3], b: [f64; 3]) -> f64 {
        let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        dot.clamp(-1.0, 1.0).acos().to_degrees()
    }

    #[test]
    fn plan_has_49_positions() {
        let plan = GridPlan::standard(0.5);
        assert_eq!(plan.positions.len(), 49);
        assert_eq!(plan.origin_index(), Some(24));
    }

    #[test]
    fn gt_normals_apex_and_outside() {
        let n = gt_normals_for_sphere((20.0, 20.0), 10.0, (41, 41)).unwrap();
        assert_eq!(n.get(20, 20), [0.0, 0.0, 1.0]);
        assert_eq!(n.get(0, 0), [0.0, 0.0, 1.0]);
        // rim pixel uses the clamped direction
        let rim = n.get(20, 30);
        let nz = (1.0 - RIM_CLAMP * RIM_CLAMP).sqrt();
        assert!((rim[2] - nz).abs() < 1e-12 && rim[2] > 0.0);
    }

    #[test]
    fn gt_normals_match_imprint_gradient() {
        let geom = SensorGeometry::default();
        let radius_mm = 0.875;
        let radius_px = radius_mm / geom.mm_per_pixel;
        let size = 301;
        let g = SensorGeometry {
            crop_size: size,
            ..geom
        };
        let c = (150.0, 150.0);
        let hm = sphere_imprint(c, radius_mm, radius_mm, &g).unwrap();
        let fd = hm.normals();
        let gt = gt_normals_for_sphere(c, radius_px, (size, size)).unwrap();
        let mut worst: f64 = 0.0;
        for r in 0..size {
            for col in 0..size {
                let rho = ((r as f64 - c.0).powi(2) + (col as f64 - c.1).powi(2)).sqrt();
                if rho < 0.95 * radius_px {
                    worst = worst.max(angle_deg(fd.get(r, col), gt.get(r, col)));
                }
            }
        }
        assert!(worst < 2.0, "worst angle {worst}");
    }

    #[test]
    fn propagation_offsets_and_bounds() {
        let plan = GridPlan {
            positions: vec![(0.0, 0.0), (1.5, 0.0)],
            indenter_radius_mm: 0.5,
        };
        let c = propagate_centers((750.0, 750.0), &plan, 0.0077, (1500, 1500)).unwrap();
        assert_eq!(c[0], (750.0, 750.0));
        assert!((c[1].1 - 750.0 - 194.805).abs() < 1e-3);
        assert_eq!(c[1].0, 750.0);
        let all = propagate_centers((750.0, 750.0), &GridPlan::standard(0.5), 0.0077, (1500, 1500)).unwrap();
        assert_eq!(all.len(), 49);
        match propagate_centers((100.0, 750.0), &GridPlan::standard(0.5), 0.0077, (1500, 1500)) {
            // rows y = -4.5, -3, -1.5 mm fall above the raster
            Err(Error::OutOfFrame(idx)) => assert_eq!(idx, (0..21).collect::<Vec<_>>()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn propagation_is_translation_equivariant() {
        let plan = GridPlan::standard(1.0);
        let a = propagate_centers((700.0, 720.0), &plan, 0.0077, (1500, 1500)).unwrap();
        let b = propagate_centers((712.5, 705.0), &plan, 0.0077, (1500, 1500)).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((q.0 - p.0 - 12.5).abs() < 1e-9 && (q.1 - p.1 + 15.0).abs() < 1e-9);
        }
    }

    fn probe(seed: u64, sigma: f64, surface_um: f64) -> VirtualProbe {
        let geom = SensorGeometry::default().resampled(128);
        let mut p = VirtualProbe::new(geom, LightingModel::default().with_noise(sigma), 1.0, (64.0, 64.0), seed);
        p.surface_z_mm = surface_um / 1000.0;
        p.move_to_um(surface_um.round() as i64 + 200);
        p
    }

    #[test]
    fn touch_detection_finds_contact_region() {
        let mut p = probe(1, 0.0, 0.0);
        let params = TouchParams::for_geometry(&p.geometry);
        let trace = detect_touch_traced(&mut p, &params).unwrap();
        assert!(trace.descent_steps >= 4);
        assert!(trace.z_mm.abs() <= 0.05, "z {}", trace.z_mm);
    }

    #[test]
    fn touch_detection_without_image_change_reports_no_contact() {
        let mut p = probe(2, 0.0, 0.0);
        p.gel = HeightMap::zeros(128, 128, p.geometry.mm_per_pixel);
        p.surface_z_mm = -10.0; // unreachable within the travel limit
        let params = TouchParams::for_geometry(&p.geometry);
        assert!(matches!(detect_touch(&mut p, &params), Err(Error::NoContact { .. })));
    }

    #[test]
    fn tiny_dataset_is_consistent_and_reproducible() {
        let mut p = probe(3, 0.002, 0.0);
        let plan = GridPlan {
            positions: vec![(0.0, 0.0)],
            indenter_radius_mm: 0.5,
        };
        let cfg = DatasetConfig {
            radii_mm: [0.5, 0.5, 0.5],
            touch: TouchParams::for_geometry(&p.geometry),
            ..DatasetConfig::default()
        };
        let ds = build_dataset(&mut p, &plan, (64.0, 64.0), &cfg).unwrap();
        assert_eq!(ds.samples.len(), 3);
        let s = &ds.samples[0];
        assert!(s.label_source);
        assert_eq!(s.mask.width(), s.image.width());
        assert!(s.mask.count() >= (0.05f64 * 128.0 * 128.0).round() as usize);
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &ds).unwrap();
        let back = load_dataset(&dir.path().join("dataset.json")).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn split_is_deterministic() {
        let a = split_indices(147, 0.1, 7);
        let b = split_indices(147, 0.1, 7);
        assert_eq!(a, b);
        assert_eq!(a.1.len(), 15);
        assert_eq!(a.0.len() + a.1.len(), 147);
    }
}
