//! Raster value types, sensor geometry and the raster file format.
//!
//! All rasters are row-major with row 0 at the top. Pixel coordinates are
//! written `(row, col)`; the horizontal axis `x` is the column index and the
//! vertical axis `y` is the row index.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default physical pixel pitch of the sensor camera.
pub const MM_PER_PIXEL: f64 = 0.0077;

/// Tolerance on the L2 norm of a stored surface normal.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Surface height in µm on a regular grid with a physical pixel pitch.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
    mm_per_pixel: f64,
}

impl HeightMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>, mm_per_pixel: f64) -> Result<Self> {
        if width * height != data.len() {
            return Err(Error::dims(
                format!("{width}x{height} = {} values", width * height),
                format!("{} values", data.len()),
            ));
        }
        if !(mm_per_pixel > 0.0 && mm_per_pixel.is_finite()) {
            return Err(Error::invalid(format!(
                "mm_per_pixel must be positive, got {mm_per_pixel}"
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite height at index {i}")));
        }
        Ok(Self {
            width,
            height,
            data,
            mm_per_pixel,
        })
    }

    pub fn zeros(width: usize, height: usize, mm_per_pixel: f64) -> Self {
        Self::from_fn(width, height, mm_per_pixel, |_, _| 0.0)
    }

    /// Builds a map by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mm_per_pixel: f64,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(width, height, data, mm_per_pixel).expect("from_fn produced an invalid map")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mm_per_pixel(&self) -> f64 {
        self.mm_per_pixel
    }

    /// Pixel pitch in µm.
    pub fn pitch_um(&self) -> f64 {
        self.mm_per_pixel * 1000.0
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Bilinear sample at fractional `(row, col)`; `None` outside the raster.
    pub fn sample(&self, row: f64, col: f64) -> Option<f64> {
        bilinear(&self.data, self.width, self.height, row, col)
    }

    /// Applies `f` to every value, keeping geometry.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.data.iter().map(|&v| f(v)).collect(),
            self.mm_per_pixel,
        )
    }

    /// Removes `border` pixels from every side.
    pub fn crop_border(&self, border: usize) -> Result<Self> {
        if 2 * border >= self.width || 2 * border >= self.height {
            return Err(Error::invalid(format!(
                "border crop {border} too large for {}x{}",
                self.width, self.height
            )));
        }
        let w = self.width - 2 * border;
        let h = self.height - 2 * border;
        let mut data = Vec::with_capacity(w * h);
        for r in border..border + h {
            data.extend_from_slice(&self.data[r * self.width + border..r * self.width + border + w]);
        }
        Self::new(w, h, data, self.mm_per_pixel)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn rms(&self) -> f64 {
        (self.data.iter().map(|v| v * v).sum::<f64>() / self.data.len() as f64).sqrt()
    }

    pub fn peak_to_peak(&self) -> f64 {
        let (lo, hi) = self
            .data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi - lo
    }

    /// Surface normals from central differences in physical units
    /// (one-sided at the borders).
    pub fn normals(&self) -> NormalMap {
        let pitch = self.pitch_um();
        let (w, h) = (self.width, self.height);
        let mut data = Vec::with_capacity(w * h);
        for r in 0..h {
            for c in 0..w {
                let (c0, c1) = (c.saturating_sub(1), (c + 1).min(w - 1));
                let (r0, r1) = (r.saturating_sub(1), (r + 1).min(h - 1));
                let dx = if c1 > c0 {
                    (self.get(r, c1) - self.get(r, c0)) / ((c1 - c0) as f64 * pitch)
                } else {
                    0.0
                };
                let dy = if r1 > r0 {
                    (self.get(r1, c) - self.get(r0, c)) / ((r1 - r0) as f64 * pitch)
                } else {
                    0.0
                };
                data.push(normal_from_slopes(dx, dy));
            }
        }
        NormalMap {
            width: w,
            height: h,
            data,
        }
    }
}

/// Unit normal `(-p, -q, 1)/|..|` of a surface with slopes `p = ∂h/∂x`, `q = ∂h/∂y`.
#[inline]
pub fn normal_from_slopes(p: f64, q: f64) -> [f64; 3] {
    let inv = 1.0 / (p * p + q * q + 1.0).sqrt();
    [-p * inv, -q * inv, inv]
}

pub(crate) fn bilinear(data: &[f64], w: usize, h: usize, row: f64, col: f64) -> Option<f64> {
    if !(row >= 0.0 && col >= 0.0 && row <= (h - 1) as f64 && col <= (w - 1) as f64) {
        return None;
    }
    let r0 = (row.floor() as usize).min(h.saturating_sub(2));
    let c0 = (col.floor() as usize).min(w.saturating_sub(2));
    let fr = row - r0 as f64;
    let fc = col - c0 as f64;
    let r1 = (r0 + 1).min(h - 1);
    let c1 = (c0 + 1).min(w - 1);
    let v00 = data[r0 * w + c0];
    let v01 = data[r0 * w + c1];
    let v10 = data[r1 * w + c0];
    let v11 = data[r1 * w + c1];
    Some((v00 * (1.0 - fc) + v01 * fc) * (1.0 - fr) + (v10 * (1.0 - fc) + v11 * fc) * fr)
}

/// Unit surface normals `(nx, ny, nz)` with `nz > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl NormalMap {
    pub fn new(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<Self> {
        if width * height != data.len() {
            return Err(Error::dims(
                format!("{width}x{height}"),
                format!("{} vectors", data.len()),
            ));
        }
        for (i, n) in data.iter().enumerate() {
            let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
                return Err(Error::invalid(format!("normal {i} has norm {norm}")));
            }
            if !(n[2] > 0.0) {
                return Err(Error::invalid(format!("normal {i} has nz = {} <= 0", n[2])));
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn flat(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![[0.0, 0.0, 1.0]; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[[f64; 3]] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> [f64; 3] {
        self.data[row * self.width + col]
    }
}

/// An RGB frame with channel values in `[0, 1]`, stored interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct TactileImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl TactileImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width * height * 3 != data.len() {
            return Err(Error::dims(
                format!("{width}x{height}x3"),
                format!("{} values", data.len()),
            ));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!(
                "image value {} at index {i} outside [0, 1]",
                data[i]
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self::new(width, height, data).expect("fill value outside [0, 1]")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        let i = 3 * (row * self.width + col);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Sub-window with top-left corner `(row0, col0)`.
    pub fn window(&self, row0: usize, col0: usize, width: usize, height: usize) -> Result<Self> {
        if row0 + height > self.height || col0 + width > self.width {
            return Err(Error::invalid(format!(
                "window {width}x{height} at ({row0}, {col0}) exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(width * height * 3);
        for r in row0..row0 + height {
            let start = 3 * (r * self.width + col0);
            data.extend_from_slice(&self.data[start..start + 3 * width]);
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Mean squared difference over all pixels and channels.
    pub fn mse(&self, other: &TactileImage) -> Result<f64> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::dims(
                format!("{}x{}", self.width, self.height),
                format!("{}x{}", other.width, other.height),
            ));
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum();
        Ok(sum / self.data.len() as f64)
    }

    /// Per-pixel, per-channel median across equally sized frames.
    pub fn median_of(frames: &[TactileImage]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::invalid("median of zero frames"))?;
        for f in frames {
            if f.width != first.width || f.height != first.height {
                return Err(Error::dims(
                    format!("{}x{}", first.width, first.height),
                    format!("{}x{}", f.width, f.height),
                ));
            }
        }
        let n = frames.len();
        let mut buf = vec![0f32; n];
        let data = (0..first.data.len())
            .map(|i| {
                for (b, f) in buf.iter_mut().zip(frames) {
                    *b = f.data[i];
                }
                buf.sort_by(f32::total_cmp);
                if n % 2 == 1 {
                    buf[n / 2]
                } else {
                    0.5 * (buf[n / 2 - 1] + buf[n / 2])
                }
            })
            .collect();
        Ok(Self {
            width: first.width,
            height: first.height,
            data,
        })
    }
}

/// Binary raster (loss masks, valley masks).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if width * height != data.len() {
            return Err(Error::dims(
                format!("{width}x{height}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// `(row, col)` of every set pixel in raster order.
    pub fn positions(&self) -> Vec<(usize, usize)> {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| (i / self.width, i % self.width))
            .collect()
    }
}

/// Fixed camera and crop geometry of the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorGeometry {
    pub native_width: usize,
    pub native_height: usize,
    pub crop_size: usize,
    /// `(row, col)` of the crop center in the native frame.
    pub crop_center: (usize, usize),
    pub border_crop: usize,
    pub mm_per_pixel: f64,
}

impl Default for SensorGeometry {
    fn default() -> Self {
        Self {
            native_width: 3264,
            native_height: 2448,
            crop_size: 1500,
            crop_center: (1224, 1482),
            border_crop: 100,
            mm_per_pixel: MM_PER_PIXEL,
        }
    }
}

impl SensorGeometry {
    pub fn validate(&self) -> Result<()> {
        let half = self.crop_size / 2;
        let (r, c) = self.crop_center;
        if r < half
            || c < half
            || r - half + self.crop_size > self.native_height
            || c - half + self.crop_size > self.native_width
        {
            return Err(Error::invalid("crop window outside the native frame"));
        }
        if 2 * self.border_crop >= self.crop_size {
            return Err(Error::invalid("border crop must be below half the crop size"));
        }
        if !(self.mm_per_pixel > 0.0) {
            return Err(Error::invalid("mm_per_pixel must be positive"));
        }
        Ok(())
    }

    /// The same physical field of view resampled so the crop is
    /// `crop_size` pixels wide. Pixel quantities scale, the pitch grows.
    pub fn resampled(&self, crop_size: usize) -> Self {
        let f = crop_size as f64 / self.crop_size as f64;
        let scale = |v: usize| (v as f64 * f).round() as usize;
        Self {
            native_width: scale(self.native_width),
            native_height: scale(self.native_height),
            crop_size,
            crop_center: (scale(self.crop_center.0), scale(self.crop_center.1)),
            border_crop: scale(self.border_crop),
            mm_per_pixel: self.mm_per_pixel / f,
        }
    }

    /// Ratio of this geometry's pixel pitch to the native sensor pitch.
    pub fn pixel_scale(&self) -> f64 {
        self.mm_per_pixel / MM_PER_PIXEL
    }

    pub fn mm_to_px(&self, mm: f64) -> f64 {
        mm / self.mm_per_pixel
    }

    /// Top-left `(row, col)` of the crop window in the native frame.
    pub fn crop_origin(&self) -> (usize, usize) {
        let half = self.crop_size / 2;
        (self.crop_center.0 - half, self.crop_center.1 - half)
    }
}

/// Extracts the `crop_size`² window centred on `geom.crop_center`.
pub fn crop_center(img: &TactileImage, geom: &SensorGeometry) -> Result<TactileImage> {
    if img.width() != geom.native_width || img.height() != geom.native_height {
        return Err(Error::dims(
            format!("{}x{}", geom.native_width, geom.native_height),
            format!("{}x{}", img.width(), img.height()),
        ));
    }
    geom.validate()?;
    let (r0, c0) = geom.crop_origin();
    img.window(r0, c0, geom.crop_size, geom.crop_size)
}

// --- raster file format ----------------------------------------------------

const MAGIC: &[u8; 8] = b"TMRASTER";
const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
enum DType {
    F32 = 1,
    F64 = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
enum Kind {
    Height = 1,
    Normals = 2,
    Rgb = 3,
    Mask = 4,
}

/// Any raster the file format can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum Raster {
    Height(HeightMap),
    Normals(NormalMap),
    Image(TactileImage),
    Mask(Mask),
}

impl From<HeightMap> for Raster {
    fn from(v: HeightMap) -> Self {
        Raster::Height(v)
    }
}
impl From<NormalMap> for Raster {
    fn from(v: NormalMap) -> Self {
        Raster::Normals(v)
    }
}
impl From<TactileImage> for Raster {
    fn from(v: TactileImage) -> Self {
        Raster::Image(v)
    }
}
impl From<Mask> for Raster {
    fn from(v: Mask) -> Self {
        Raster::Mask(v)
    }
}

impl Raster {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Raster::Height(_) => "height",
            Raster::Normals(_) => "normals",
            Raster::Image(_) => "rgb",
            Raster::Mask(_) => "mask",
        }
    }
}

/// Serializes a raster into the fixed-header little-endian format.
///
/// Header (64 bytes): magic `TMRASTER`, u16 version, u16 dtype
/// (1 = f32, 2 = f64), u32 kind, u32 width, u32 height, u32 channels,
/// u32 reserved, f64 mm/pixel, zero padding. Height maps and normals are
/// stored as f64, images and masks as f32.
pub fn encode_raster(raster: &Raster) -> Vec<u8> {
    let (kind, dtype, w, h, ch, pitch) = match raster {
        Raster::Height(m) => (Kind::Height, DType::F64, m.width, m.height, 1, m.mm_per_pixel),
        Raster::Normals(m) => (Kind::Normals, DType::F64, m.width, m.height, 3, 0.0),
        Raster::Image(m) => (Kind::Rgb, DType::F32, m.width, m.height, 3, 0.0),
        Raster::Mask(m) => (Kind::Mask, DType::F32, m.width, m.height, 1, 0.0),
    };
    let elem = if dtype == DType::F64 { 8 } else { 4 };
    let mut out = Vec::with_capacity(HEADER_LEN + w * h * ch * elem);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(dtype as u16).to_le_bytes());
    out.extend_from_slice(&(kind as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(ch as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&pitch.to_le_bytes());
    out.resize(HEADER_LEN, 0);
    match raster {
        Raster::Height(m) => m.data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        Raster::Normals(m) => m
            .data
            .iter()
            .flatten()
            .for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        Raster::Image(m) => m.data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        Raster::Mask(m) => m.data.iter().for_each(|&b| {
            let v: f32 = if b { 1.0 } else { 0.0 };
            out.extend_from_slice(&v.to_le_bytes())
        }),
    }
    out
}

/// Inverse of [`encode_raster`]; `path` is only used in error messages.
pub fn decode_raster(bytes: &[u8], path: &Path) -> Result<Raster> {
    let corrupt = |reason: String| Error::CorruptFile {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER_LEN {
        return Err(corrupt(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[0..8] != MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let version = u16_at(8);
    if version != FORMAT_VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let dtype = match u16_at(10) {
        1 => DType::F32,
        2 => DType::F64,
        d => return Err(corrupt(format!("unknown dtype code {d}"))),
    };
    let kind = u32_at(12);
    let (w, h, ch) = (u32_at(16), u32_at(20), u32_at(24));
    let pitch = f64::from_le_bytes(bytes[32..40].try_into().unwrap());
    let expected = match (kind, dtype, ch) {
        (1, DType::F64, 1) | (2, DType::F64, 3) | (3, DType::F32, 3) | (4, DType::F32, 1) => {
            w * h * ch
        }
        _ => {
            return Err(corrupt(format!(
                "inconsistent header: kind {kind}, dtype {dtype:?}, {ch} channels"
            )))
        }
    };
    let elem = if dtype == DType::F64 { 8 } else { 4 };
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected * elem {
        return Err(corrupt(format!(
            "payload is {} bytes, header implies {}",
            payload.len(),
            expected * elem
        )));
    }
    let f64s = || -> Vec<f64> {
        payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let f32s = || -> Vec<f32> {
        payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let raster = match kind {
        1 => {
            let data = f64s();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(corrupt("non-finite height value".into()));
            }
            Raster::Height(HeightMap::new(w, h, data, pitch).map_err(|e| corrupt(e.to_string()))?)
        }
        2 => {
            let flat = f64s();
            if flat.iter().any(|v| !v.is_finite()) {
                return Err(corrupt("non-finite normal component".into()));
            }
            let data = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
            Raster::Normals(NormalMap::new(w, h, data).map_err(|e| corrupt(e.to_string()))?)
        }
        3 => {
            let data = f32s();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(corrupt("non-finite pixel value".into()));
            }
            Raster::Image(TactileImage::new(w, h, data).map_err(|e| corrupt(e.to_string()))?)
        }
        _ => {
            let vals = f32s();
            if vals.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(corrupt("mask value other than 0 or 1".into()));
            }
            Raster::Mask(Mask::new(w, h, vals.iter().map(|&v| v == 1.0).collect())?)
        }
    };
    Ok(raster)
}

pub fn save_raster(path: impl AsRef<Path>, raster: &Raster) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_raster(raster);
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raster(&bytes, path)
}

macro_rules! typed_loader {
    ($name:ident, $variant:ident, $ty:ty) => {
        pub fn $name(path: impl AsRef<Path>) -> Result<$ty> {
            let path = path.as_ref();
            match load_raster(path)? {
                Raster::$variant(v) => Ok(v),
                other => Err(Error::CorruptFile {
                    path: path.to_path_buf(),
                    reason: format!(
                        "expected {} raster, found {}",
                        stringify!($variant),
                        other.kind_name()
                    ),
                }),
            }
        }
    };
}

typed_loader!(load_height_map, Height, HeightMap);
typed_loader!(load_normal_map, Normals, NormalMap);
typed_loader!(load_image, Image, TactileImage);
typed_loader!(load_mask, Mask, Mask);

#[cfg(feature = "png")]
pub mod png {
    //! PNG import/export. Channel values map linearly onto the integer range.

    use std::path::Path;

    use image::{ImageBuffer, Luma, Rgb};

    use super::{HeightMap, Mask, TactileImage};
    use crate::{Error, Result};

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum BitDepth {
        Eight,
        Sixteen,
    }

    pub fn save_rgb(path: impl AsRef<Path>, img: &TactileImage, depth: BitDepth) -> Result<()> {
        let (w, h) = (img.width() as u32, img.height() as u32);
        match depth {
            BitDepth::Eight => {
                let raw = img.data().iter().map(|&v| (v * 255.0).round() as u8).collect();
                let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
                    ImageBuffer::from_raw(w, h, raw).expect("buffer size");
                buf.save(path.as_ref())?;
            }
            BitDepth::Sixteen => {
                let raw = img.data().iter().map(|&v| (v * 65535.0).round() as u16).collect();
                let buf: ImageBuffer<Rgb<u16>, Vec<u16>> =
                    ImageBuffer::from_raw(w, h, raw).expect("buffer size");
                buf.save(path.as_ref())?;
            }
        }
        Ok(())
    }

    /// Loads an 8- or 16-bit PNG as an RGB image in `[0, 1]`.
    pub fn load_rgb(path: impl AsRef<Path>) -> Result<TactileImage> {
        let dynimg = image::open(path.as_ref())?;
        let rgb = dynimg.to_rgb16();
        let (w, h) = rgb.dimensions();
        let data = rgb.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect();
        TactileImage::new(w as usize, h as usize, data)
    }

    /// Grey-scale preview of a height map, min→black, max→white.
    pub fn save_height_preview(path: impl AsRef<Path>, map: &HeightMap) -> Result<()> {
        let lo = map.data().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = map.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let raw = map
            .data()
            .iter()
            .map(|&v| (((v - lo) / span) * 65535.0).round() as u16)
            .collect();
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(map.width() as u32, map.height() as u32, raw)
                .ok_or_else(|| Error::invalid("height preview buffer"))?;
        buf.save(path.as_ref())?;
        Ok(())
    }

    pub fn save_mask(path: impl AsRef<Path>, mask: &Mask) -> Result<()> {
        let raw = mask.data().iter().map(|&b| if b { 255u8 } else { 0 }).collect();
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
            ImageBuffer::from_raw(mask.width() as u32, mask.height() as u32, raw)
                .ok_or_else(|| Error::invalid("mask buffer"))?;
        buf.save(path.as_ref())?;
        Ok(())
    }
}
