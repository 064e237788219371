//! Lambertian three-light forward model of the gel and synthetic scenes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::raster::{HeightMap, NormalMap, SensorGeometry};
use crate::{Error, Result, TactileImage};

/// Spatial gain applied to one light channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GainMap {
    Uniform { gain: f64 },
    /// `1 − falloff·(ρ/ρ_max)²` about `center` (fractions of width/height);
    /// `ρ_max` is the distance from the center to the farthest corner.
    Radial { falloff: f64, center: (f64, f64) },
}

impl GainMap {
    fn at(&self, row: usize, col: usize, w: usize, h: usize) -> f64 {
        match *self {
            GainMap::Uniform { gain } => gain,
            GainMap::Radial { falloff, center } => {
                let cy = center.0 * (h - 1) as f64;
                let cx = center.1 * (w - 1) as f64;
                let dy = (cy).max((h - 1) as f64 - cy);
                let dx = (cx).max((w - 1) as f64 - cx);
                let rho_max2 = (dx * dx + dy * dy).max(1e-12);
                let rho2 = (row as f64 - cy).powi(2) + (col as f64 - cx).powi(2);
                1.0 - falloff * rho2 / rho_max2
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            GainMap::Uniform { gain } => gain > 0.0 && gain <= 1.0,
            GainMap::Radial { falloff, .. } => (0.0..1.0).contains(&falloff),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("gain map {self:?} leaves (0, 1]")))
        }
    }
}

/// Three coloured lights, one per image channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightingModel {
    /// Unit directions towards each light, `(x = col, y = row, z = up)`.
    pub directions: [[f64; 3]; 3],
    pub ambient: [f64; 3],
    pub gains: [GainMap; 3],
    pub noise_sigma: f64,
}

impl Default for LightingModel {
    fn default() -> Self {
        let radial = GainMap::Radial {
            falloff: 0.2,
            center: (0.5, 0.5),
        };
        Self {
            directions: [0.0f64, 120.0, 240.0].map(|az| Self::direction(az, 45.0)),
            ambient: [0.05; 3],
            gains: [radial; 3],
            noise_sigma: 0.0,
        }
    }
}

impl LightingModel {
    /// Unit vector at `azimuth_deg` from +x towards +y and `elevation_deg`
    /// above the gel plane.
    pub fn direction(azimuth_deg: f64, elevation_deg: f64) -> [f64; 3] {
        let (a, e) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
        [e.cos() * a.cos(), e.cos() * a.sin(), e.sin()]
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for d in &self.directions {
            let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if (n - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("light direction {d:?} is not unit length")));
            }
        }
        if self.ambient.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(Error::invalid("ambient terms must lie in [0, 1]"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise sigma must be finite and non-negative"));
        }
        self.gains.iter().try_for_each(GainMap::validate)
    }
}

/// Renders a normal field; the noise stream is seeded by `seed`.
pub fn render_normals(n: &NormalMap, lights: &LightingModel, seed: u64) -> Result<TactileImage> {
    lights.validate()?;
    let (w, h) = (n.width(), n.height());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = if lights.noise_sigma > 0.0 {
        Some(Normal::new(0.0, lights.noise_sigma).expect("validated sigma"))
    } else {
        None
    };
    let mut data = Vec::with_capacity(w * h * 3);
    for r in 0..h {
        for c in 0..w {
            let v = n.get(r, c);
            for ch in 0..3 {
                let d = lights.directions[ch];
                let lambert = (v[0] * d[0] + v[1] * d[1] + v[2] * d[2]).max(0.0);
                let mut i = lights.gains[ch].at(r, c, w, h) * lambert + lights.ambient[ch];
                if let Some(dist) = &noise {
                    i += dist.sample(&mut rng);
                }
                data.push(i.clamp(0.0, 1.0) as f32);
            }
        }
    }
    TactileImage::new(w, h, data)
}

/// Renders a height field through its central-difference normals.
pub fn render(height: &HeightMap, lights: &LightingModel, seed: u64) -> Result<TactileImage> {
    render_normals(&height.normals(), lights, seed)
}

/// Inverts [`render_normals`] pixel by pixel, assuming no light is at
/// grazing incidence: removes ambient and gain, then solves the 3×3 light
/// system. A classical baseline that needs no training; it degrades where
/// a channel clips or a facet turns away from a light.
pub fn photometric_normals(img: &TactileImage, lights: &LightingModel) -> Result<NormalMap> {
    lights.validate()?;
    let inv = invert3(&lights.directions).ok_or_else(|| Error::IllPosed("light directions are coplanar".into()))?;
    let (w, h) = (img.width(), img.height());
    let mut data = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let px = img.pixel(r, c);
            let mut b = [0.0; 3];
            for ch in 0..3 {
                b[ch] = (px[ch] as f64 - lights.ambient[ch]) / lights.gains[ch].at(r, c, w, h);
            }
            let mut n = [0.0; 3];
            for (i, row) in inv.iter().enumerate() {
                n[i] = row[0] * b[0] + row[1] * b[1] + row[2] * b[2];
            }
            n[2] = n[2].max(1e-6);
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            data.push([n[0] / len, n[1] / len, n[2] / len]);
        }
    }
    NormalMap::new(w, h, data)
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det.abs() < 1e-12 {
        return None;
    }
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (a, b) = ((j + 1) % 3, (j + 2) % 3);
            let (c, d) = ((i + 1) % 3, (i + 2) % 3);
            out[i][j] = (m[a][c] * m[b][d] - m[a][d] * m[b][c]) / det;
        }
    }
    Some(out)
}

/// Rigid spherical-cap imprint (µm, negative into the gel) on a
/// `crop_size²` raster.
pub fn sphere_imprint(
    center_px: (f64, f64),
    radius_mm: f64,
    depth_mm: f64,
    geom: &SensorGeometry,
) -> Result<HeightMap> {
    if !(radius_mm > 0.0) {
        return Err(Error::invalid("indenter radius must be positive"));
    }
    if !(0.0..=radius_mm).contains(&depth_mm) {
        return Err(Error::invalid(format!(
            "indentation depth {depth_mm} mm outside [0, radius {radius_mm} mm]"
        )));
    }
    let n = geom.crop_size;
    let a2 = radius_mm * radius_mm - (radius_mm - depth_mm).powi(2);
    let pitch = geom.mm_per_pixel;
    Ok(HeightMap::from_fn(n, n, pitch, |r, c| {
        let dr = (r as f64 - center_px.0) * pitch;
        let dc = (c as f64 - center_px.1) * pitch;
        let rho2 = dr * dr + dc * dc;
        if depth_mm > 0.0 && rho2 <= a2 {
            let sag = radius_mm - (radius_mm * radius_mm - rho2).sqrt();
            -(depth_mm - sag) * 1000.0
        } else {
            0.0
        }
    }))
}

/// Contact radius in mm of a sphere of radius `r` pressed to depth `d`.
pub fn contact_radius_mm(r: f64, d: f64) -> f64 {
    (r * r - (r - d).powi(2)).max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "layout")]
pub enum ChannelLayout {
    /// Grooves run along the rows (profile varies with column) unless
    /// `horizontal` is set.
    Straight {
        #[serde(default)]
        horizontal: bool,
    },
    /// Concentric annular grooves about `center_px = (row, col)`;
    /// `None` means the raster center.
    Circular { center_px: Option<(f64, f64)> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelObjectSpec {
    #[serde(flatten)]
    pub layout: ChannelLayout,
    pub channel_width_um: f64,
    /// Land width between grooves; `None` equals the channel width.
    #[serde(default)]
    pub gap_um: Option<f64>,
    pub depth_um: f64,
}

impl ChannelObjectSpec {
    pub fn straight(width_um: f64, depth_um: f64) -> Self {
        Self {
            layout: ChannelLayout::Straight { horizontal: false },
            channel_width_um: width_um,
            gap_um: None,
            depth_um,
        }
    }

    pub fn circular(width_um: f64, depth_um: f64) -> Self {
        Self {
            layout: ChannelLayout::Circular { center_px: None },
            channel_width_um: width_um,
            gap_um: None,
            depth_um,
        }
    }

    /// Straight 500 µm channels at 24, 48, 72, 96 µm.
    pub fn validation_set() -> Vec<Self> {
        [24.0, 48.0, 72.0, 96.0].map(|d| Self::straight(500.0, d)).to_vec()
    }

    /// Circular 350 µm channels at 12, 36, 60, 84 µm.
    pub fn test_set() -> Vec<Self> {
        [12.0, 36.0, 60.0, 84.0].map(|d| Self::circular(350.0, d)).to_vec()
    }

    pub fn period_um(&self) -> f64 {
        self.channel_width_um + self.gap_um.unwrap_or(self.channel_width_um)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.channel_width_um > 0.0) || !(self.depth_um >= 0.0) {
            return Err(Error::invalid("channel width must be positive and depth non-negative"));
        }
        if let Some(g) = self.gap_um {
            if !(g > 0.0) {
                return Err(Error::invalid("channel gap must be positive"));
            }
        }
        Ok(())
    }
}

/// Rectangular-profile grooves of `spec.depth_um` (land at 0, groove floor
/// at −depth). Straight bands start with a land band at the raster center;
/// circular layouts start with a land disc.
pub fn channel_object(spec: &ChannelObjectSpec, geom: &SensorGeometry) -> Result<HeightMap> {
    spec.validate()?;
    let n = geom.crop_size;
    let pitch_um = geom.mm_per_pixel * 1000.0;
    let center = (n - 1) as f64 / 2.0;
    let period = spec.period_um();
    let land = spec.gap_um.unwrap_or(spec.channel_width_um);
    let groove = |pos_um: f64| pos_um.rem_euclid(period) >= land;
    Ok(HeightMap::from_fn(n, n, geom.mm_per_pixel, |r, c| {
        let pos = match spec.layout {
            ChannelLayout::Straight { horizontal: false } => (c as f64 - center) * pitch_um + land / 2.0,
            ChannelLayout::Straight { horizontal: true } => (r as f64 - center) * pitch_um + land / 2.0,
            ChannelLayout::Circular { center_px } => {
                let (cy, cx) = center_px.unwrap_or((center, center));
                ((r as f64 - cy).powi(2) + (c as f64 - cx).powi(2)).sqrt() * pitch_um
            }
        };
        if spec.depth_um > 0.0 && groove(pos) {
            -spec.depth_um
        } else {
            0.0
        }
    }))
}

/// Stand-in for the indentation rig: a gel, a spherical indenter above a
/// fixed pixel position, and a camera.
#[derive(Debug, Clone)]
pub struct VirtualProbe {
    /// Undeformed gel relief in µm.
    pub gel: HeightMap,
    pub geometry: SensorGeometry,
    pub lights: LightingModel,
    pub indenter_radius_mm: f64,
    pub center_px: (f64, f64),
    /// Height of the gel surface in the probe's z frame, mm.
    pub surface_z_mm: f64,
    z_um: i64,
    rng: ChaCha8Rng,
}

impl VirtualProbe {
    pub fn new(
        geometry: SensorGeometry,
        lights: LightingModel,
        indenter_radius_mm: f64,
        center_px: (f64, f64),
        seed: u64,
    ) -> Self {
        let n = geometry.crop_size;
        Self {
            gel: HeightMap::zeros(n, n, geometry.mm_per_pixel),
            geometry,
            lights,
            indenter_radius_mm,
            center_px,
            surface_z_mm: 0.0,
            z_um: 1000,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Current indenter height in mm; positive is above `surface_z_mm = 0`.
    pub fn z_mm(&self) -> f64 {
        self.z_um as f64 / 1000.0
    }

    pub fn z_um(&self) -> i64 {
        self.z_um
    }

    /// Moves to an absolute height given in whole micrometres.
    pub fn move_to_um(&mut self, z_um: i64) {
        self.z_um = z_um;
    }

    pub fn move_by_um(&mut self, dz_um: i64) {
        self.z_um += dz_um;
    }

    pub fn move_to_xy(&mut self, center_px: (f64, f64)) {
        self.center_px = center_px;
    }

    /// Current indentation depth in mm.
    pub fn depth_mm(&self) -> f64 {
        (self.surface_z_mm - self.z_mm()).max(0.0)
    }

    /// Height of the deformed gel at the current pose.
    pub fn surface(&self) -> Result<HeightMap> {
        let depth = self.depth_mm().min(self.indenter_radius_mm);
        let imprint = sphere_imprint(self.center_px, self.indenter_radius_mm, depth, &self.geometry)?;
        let data = imprint
            .data()
            .iter()
            .zip(self.gel.data())
            .map(|(a, b)| a + b)
            .collect();
        HeightMap::new(imprint.width(), imprint.height(), data, self.geometry.mm_per_pixel)
    }

    /// Captures `n` frames with independent noise.
    pub fn capture(&mut self, n: usize) -> Result<Vec<TactileImage>> {
        use rand::Rng;
        if n == 0 {
            return Err(Error::invalid("capture count must be at least 1"));
        }
        let normals = self.surface()?.normals();
        (0..n)
            .map(|_| render_normals(&normals, &self.lights, self.rng.random()))
            .collect()
    }
}

/// Free-function form of [`VirtualProbe::capture`].
pub fn probe_capture(probe: &mut VirtualProbe, n: usize) -> Result<Vec<TactileImage>> {
    probe.capture(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::MM_PER_PIXEL;

    fn flat_lights() -> LightingModel {
        LightingModel {
            ambient: [0.3; 3],
            gains: [GainMap::Uniform { gain: 1.0 }; 3],
            ..LightingModel::default()
        }
    }

    #[test]
    fn photometric_inversion_recovers_gentle_normals() {
        let geom = SensorGeometry::default().resampled(96);
        let h = HeightMap::from_fn(96, 96, geom.mm_per_pixel, |r, c| {
            40.0 * ((r as f64 / 9.0).sin() + (c as f64 / 13.0).cos())
        });
        let n = h.normals();
        let img = render_normals(&n, &LightingModel::default(), 0).unwrap();
        let back = photometric_normals(&img, &LightingModel::default()).unwrap();
        for (a, b) in n.data().iter().zip(back.data()) {
            let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
            assert!(dot > 1.0 - 1e-6, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn flat_field_renders_constant() {
        let lights = flat_lights();
        let img = render(&HeightMap::zeros(20, 10, MM_PER_PIXEL), &lights, 1).unwrap();
        for ch in 0..3 {
            let expect = (lights.directions[ch][2].max(0.0) + 0.3).clamp(0.0, 1.0) as f32;
            for r in 0..10 {
                for c in 0..20 {
                    assert_eq!(img.pixel(r, c)[ch], expect);
                }
            }
        }
    }

    #[test]
    fn noise_free_render_ignores_seed() {
        let hm = sphere_imprint((20.0, 20.0), 0.5, 0.2, &SensorGeometry::default().resampled(40)).unwrap();
        let lights = LightingModel::default();
        assert_eq!(render(&hm, &lights, 1).unwrap(), render(&hm, &lights, 2).unwrap());
    }

    #[test]
    fn noisy_render_deterministic_per_seed() {
        let hm = HeightMap::zeros(16, 16, MM_PER_PIXEL);
        let lights = LightingModel::default().with_noise(0.01);
        assert_eq!(render(&hm, &lights, 9).unwrap(), render(&hm, &lights, 9).unwrap());
        assert_ne!(render(&hm, &lights, 9).unwrap(), render(&hm, &lights, 10).unwrap());
    }

    #[test]
    fn tilted_plane_matches_lambert_term() {
        let lights = flat_lights();
        let pitch = 0.01;
        let a = 3.0; // µm per pixel
        let hm = HeightMap::from_fn(12, 12, pitch, |_, c| a * c as f64);
        let img = render(&hm, &lights, 0).unwrap();
        let n = crate::raster::normal_from_slopes(a / (pitch * 1000.0), 0.0);
        for ch in 0..3 {
            let d = lights.directions[ch];
            let expect = ((n[0] * d[0] + n[1] * d[1] + n[2] * d[2]).max(0.0) + 0.3).clamp(0.0, 1.0);
            assert!((img.pixel(6, 6)[ch] as f64 - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn full_depth_imprint_geometry() {
        let geom = SensorGeometry::default();
        let hm = sphere_imprint((750.0, 750.0), 1.25, 1.25, &geom).unwrap();
        assert!((hm.get(750, 750) + 1250.0).abs() < 1e-9);
        // contact radius equals R: 1.25 / 0.0077 = 162.34 px
        let a_px: f64 = 1.25 / 0.0077;
        assert!(hm.get(750, 750 + a_px.floor() as usize) < 0.0);
        assert_eq!(hm.get(750, 750 + a_px.ceil() as usize), 0.0);
    }

    #[test]
    fn zero_depth_imprint_is_flat() {
        let geom = SensorGeometry::default().resampled(64);
        let hm = sphere_imprint((32.0, 32.0), 1.0, 0.0, &geom).unwrap();
        assert!(hm.data().iter().all(|&v| v == 0.0));
        assert!(sphere_imprint((32.0, 32.0), 1.0, 1.5, &geom).is_err());
    }

    #[test]
    fn imprint_apex_normal_is_vertical() {
        let geom = SensorGeometry::default().resampled(101);
        let hm = sphere_imprint((50.0, 50.0), 1.0, 0.5, &geom).unwrap();
        let n = hm.normals().get(50, 50);
        assert!(n[0].abs() < 1e-12 && n[1].abs() < 1e-12);
    }

    #[test]
    fn imprint_is_radially_symmetric() {
        let geom = SensorGeometry::default().resampled(81);
        let hm = sphere_imprint((40.0, 40.0), 0.875, 0.6, &geom).unwrap();
        for r in 0..81usize {
            for c in 0..81usize {
                let (dr, dc) = (r as i64 - 40, c as i64 - 40);
                // 8 symmetric images of (dr, dc) share ρ
                let mirrored = hm.get((40 - dr) as usize, (40 + dc) as usize);
                let swapped = hm.get((40 + dc) as usize, (40 + dr) as usize);
                assert!((hm.get(r, c) - mirrored).abs() < 1e-9);
                assert!((hm.get(r, c) - swapped).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn straight_channels_square_wave() {
        let geom = SensorGeometry::default().resampled(256);
        let hm = channel_object(&ChannelObjectSpec::straight(500.0, 96.0), &geom).unwrap();
        let row: Vec<f64> = (0..256).map(|c| hm.get(100, c)).collect();
        let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(hi - lo, 96.0);
        assert!(row.iter().all(|&v| v == 0.0 || v == -96.0));
        // constant along the grooves
        for c in 0..256 {
            assert!((0..256).all(|r| hm.get(r, c) == row[c]));
        }
    }

    #[test]
    fn circular_channels_radial_square_wave() {
        let geom = SensorGeometry::default().resampled(256);
        let hm = channel_object(&ChannelObjectSpec::circular(350.0, 12.0), &geom).unwrap();
        assert!(hm.data().iter().all(|&v| v == 0.0 || v == -12.0));
        assert_eq!(hm.peak_to_peak(), 12.0);
        let flat = channel_object(&ChannelObjectSpec::circular(350.0, 0.0), &geom).unwrap();
        assert!(flat.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn probe_above_surface_sees_undeformed_gel() {
        let geom = SensorGeometry::default().resampled(64);
        let mut probe = VirtualProbe::new(geom, LightingModel::default(), 0.5, (32.0, 32.0), 3);
        probe.move_to_um(1000);
        let frames = probe.capture(5).unwrap();
        let flat = render(&HeightMap::zeros(64, 64, geom.mm_per_pixel), &LightingModel::default(), 0).unwrap();
        assert!(frames.iter().all(|f| *f == flat));
        probe.move_to_um(-100);
        let touched = probe.capture(1).unwrap();
        assert!(touched[0].mse(&flat).unwrap() > 0.0);
    }
}
