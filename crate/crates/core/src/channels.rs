//! Channel-depth metrology on height maps and agreement statistics.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::stats::{mean, percentile, sd_population};
use crate::{Error, HeightMap, Result};

/// Where a profile was taken from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "cut")]
pub enum Cut {
    Row { index: usize },
    Column { index: usize },
    /// Ray from `origin = (row, col)` at `angle_deg` measured from the +col
    /// axis toward +row.
    Ray { angle_deg: f64, origin: (f64, f64) },
}

/// Heights (µm) sampled at unit steps along a cut.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    /// Distance along the cut in px.
    pub positions: Vec<f64>,
    pub heights: Vec<f64>,
    pub cut: Cut,
}

impl Profile {
    pub fn new(positions: Vec<f64>, heights: Vec<f64>, cut: Cut) -> Result<Self> {
        if positions.len() != heights.len() {
            return Err(Error::dims(positions.len(), heights.len()));
        }
        if positions.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("profile positions must be strictly increasing"));
        }
        if heights.iter().any(|h| !h.is_finite()) {
            return Err(Error::invalid("profile heights must be finite"));
        }
        Ok(Self { positions, heights, cut })
    }

    /// Unit-spaced profile starting at 0.
    pub fn from_heights(heights: Vec<f64>, cut: Cut) -> Result<Self> {
        Self::new((0..heights.len()).map(|i| i as f64).collect(), heights, cut)
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }
}

/// Direction the straight cuts run in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Each profile is one raster row.
    Rows,
    /// Each profile is one raster column.
    Columns,
}

/// Every `spacing`-th row (or column), starting with the first.
pub fn straight_sections(h: &HeightMap, spacing: usize, orientation: Orientation) -> Result<Vec<Profile>> {
    if spacing == 0 {
        return Err(Error::invalid("section spacing must be at least 1 px"));
    }
    let (w, ht) = (h.width(), h.height());
    let lines = match orientation {
        Orientation::Rows => ht,
        Orientation::Columns => w,
    };
    (0..lines)
        .step_by(spacing)
        .map(|i| match orientation {
            Orientation::Rows => Profile::from_heights((0..w).map(|c| h.get(i, c)).collect(), Cut::Row { index: i }),
            Orientation::Columns => {
                Profile::from_heights((0..ht).map(|r| h.get(r, i)).collect(), Cut::Column { index: i })
            }
        })
        .collect()
}

/// Rays from `center = (row, col)` every `dtheta_deg`, sampled bilinearly
/// at unit steps until they leave the raster.
pub fn circular_sections(h: &HeightMap, center: (f64, f64), dtheta_deg: f64) -> Result<Vec<Profile>> {
    let (cy, cx) = center;
    if !(cy >= 0.0 && cx >= 0.0 && cy <= (h.height() - 1) as f64 && cx <= (h.width() - 1) as f64) {
        return Err(Error::invalid(format!("center {center:?} outside the raster")));
    }
    if !(dtheta_deg > 0.0 && dtheta_deg <= 360.0) {
        return Err(Error::invalid(format!("angle step {dtheta_deg} must be in (0, 360]")));
    }
    let n = (360.0 / dtheta_deg - 1e-9).floor() as usize + 1;
    (0..n)
        .map(|i| {
            let angle = i as f64 * dtheta_deg;
            let (s, c) = angle.to_radians().sin_cos();
            let heights: Vec<f64> = (0..)
                .map(|t| h.sample(cy + t as f64 * s, cx + t as f64 * c))
                .take_while(Option::is_some)
                .flatten()
                .collect();
            Profile::from_heights(
                heights,
                Cut::Ray {
                    angle_deg: angle,
                    origin: center,
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Smoothing {
    pub window: usize,
    pub order: usize,
}

impl Default for Smoothing {
    fn default() -> Self {
        Self { window: 31, order: 3 }
    }
}

impl Smoothing {
    pub fn validate(&self) -> Result<()> {
        if self.window % 2 == 0 || self.window <= self.order {
            return Err(Error::invalid(format!(
                "smoothing window {} must be odd and exceed the order {}",
                self.window, self.order
            )));
        }
        Ok(())
    }
}

/// Weights `w` such that `Σ wⱼ·y(offsets[j])` is the value at offset 0 of
/// the least-squares polynomial of degree `order` through the samples.
fn savgol_weights(offsets: &[f64], order: usize) -> Vec<f64> {
    let m = order + 1;
    let scale = offsets.iter().fold(1.0f64, |a, &o| a.max(o.abs()));
    let s: Vec<f64> = offsets.iter().map(|o| o / scale).collect();
    let mut ata = vec![vec![0.0; m + 1]; m];
    for &x in &s {
        let pows: Vec<f64> = (0..m).map(|k| x.powi(k as i32)).collect();
        for i in 0..m {
            for j in 0..m {
                ata[i][j] += pows[i] * pows[j];
            }
        }
    }
    // Right-hand side e0: the fitted polynomial evaluated at 0 is c·e0.
    ata[0][m] = 1.0;
    for col in 0..m {
        let piv = (col..m).max_by(|&a, &b| ata[a][col].abs().total_cmp(&ata[b][col].abs())).expect("rows");
        ata.swap(col, piv);
        for row in 0..m {
            if row != col {
                let f = ata[row][col] / ata[col][col];
                for k in col..=m {
                    ata[row][k] -= f * ata[col][k];
                }
            }
        }
    }
    let c: Vec<f64> = (0..m).map(|i| ata[i][m] / ata[i][i]).collect();
    s.iter()
        .map(|&x| c.iter().enumerate().map(|(k, ck)| ck * x.powi(k as i32)).sum())
        .collect()
}

/// Savitzky–Golay smoothing. Samples within half a window of either end
/// are evaluated from the polynomial fitted to the first (last) `window`
/// samples. Profiles shorter than the window are fitted as a whole.
pub fn smooth_profile(p: &Profile, cfg: Smoothing) -> Result<Profile> {
    cfg.validate()?;
    let n = p.len();
    let win = cfg.window.min(n);
    if win <= cfg.order {
        return Err(Error::invalid(format!(
            "profile of {n} samples too short for order {}",
            cfg.order
        )));
    }
    let half = cfg.window / 2;
    let y = &p.heights;
    let mut out = vec![0.0; n];
    let apply = |w: &[f64], start: usize| w.iter().zip(&y[start..]).map(|(a, b)| a * b).sum::<f64>();
    if n >= cfg.window {
        let offsets: Vec<f64> = (0..cfg.window).map(|j| j as f64 - half as f64).collect();
        let w = savgol_weights(&offsets, cfg.order);
        for i in half..n - half {
            out[i] = apply(&w, i - half);
        }
        for i in (0..half).chain(n - half..n) {
            let start = if i < half { 0 } else { n - cfg.window };
            let offsets: Vec<f64> = (0..cfg.window).map(|j| (start + j) as f64 - i as f64).collect();
            out[i] = apply(&savgol_weights(&offsets, cfg.order), start);
        }
    } else {
        for (i, o) in out.iter_mut().enumerate() {
            let offsets: Vec<f64> = (0..n).map(|j| j as f64 - i as f64).collect();
            *o = apply(&savgol_weights(&offsets, cfg.order), 0);
        }
    }
    Profile::new(p.positions.clone(), out, p.cut)
}

/// Minimum prominence of a detected extremum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Prominence {
    /// Absolute threshold in µm.
    Absolute(f64),
    /// Fraction of the profile's interquartile height range.
    IqrFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeakDetector {
    pub prominence: Prominence,
    /// Minimum index separation of kept peaks.
    pub distance: usize,
}

impl Default for PeakDetector {
    fn default() -> Self {
        Self {
            prominence: Prominence::IqrFraction(0.25),
            distance: 20,
        }
    }
}

impl PeakDetector {
    /// Separation of half the expected channel width.
    pub fn for_channel_width(width_px: f64) -> Self {
        Self {
            distance: ((width_px / 2.0).round() as usize).max(1),
            ..Self::default()
        }
    }

    fn threshold(&self, heights: &[f64]) -> f64 {
        match self.prominence {
            Prominence::Absolute(v) => v,
            Prominence::IqrFraction(f) => {
                let q1 = percentile(heights, 25.0).unwrap_or(0.0);
                let q3 = percentile(heights, 75.0).unwrap_or(0.0);
                f * (q3 - q1)
            }
        }
    }
}

/// Local maxima of `x` (flat tops reported at their middle sample), thinned
/// to a minimum separation keeping the highest first, then filtered by
/// prominence. Endpoints are never peaks.
///
/// Heights within a relative 1e-10 of each other compare as equal, so that
/// symmetric twin extrema stay ties after a constant offset.
pub fn find_peaks(x: &[f64], min_prominence: f64, distance: usize) -> Vec<usize> {
    let n = x.len();
    let tol = tie_tolerance(x);
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i - 1] < x[i] - tol {
            let mut j = i;
            while j + 1 < n && (x[j + 1] - x[i]).abs() <= tol {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[i] - tol {
                peaks.push((i + j) / 2);
                i = j + 1;
                continue;
            }
            i = j;
        }
        i += 1;
    }

    if distance > 1 && peaks.len() > 1 {
        let mut keep = vec![true; peaks.len()];
        let mut order: Vec<usize> = (0..peaks.len()).collect();
        // Highest first; ties resolved toward later peaks.
        order.sort_by(|&a, &b| x[peaks[b]].total_cmp(&x[peaks[a]]).then(b.cmp(&a)));
        for &k in &order {
            if !keep[k] {
                continue;
            }
            let mut j = k;
            while j > 0 && peaks[k] - peaks[j - 1] < distance {
                keep[j - 1] = false;
                j -= 1;
            }
            let mut j = k + 1;
            while j < peaks.len() && peaks[j] - peaks[k] < distance {
                keep[j] = false;
                j += 1;
            }
        }
        peaks = peaks.into_iter().zip(keep).filter_map(|(p, k)| k.then_some(p)).collect();
    }

    peaks.retain(|&p| prominence_with(x, p, tol) >= min_prominence);
    peaks
}

fn tie_tolerance(x: &[f64]) -> f64 {
    1e-10 * x.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Height of a peak above the higher of the two lowest points reached before
/// climbing above it on either side.
pub fn prominence(x: &[f64], p: usize) -> f64 {
    prominence_with(x, p, tie_tolerance(x))
}

fn prominence_with(x: &[f64], p: usize, tol: f64) -> f64 {
    let v = x[p];
    let mut left = v;
    for &y in x[..p].iter().rev() {
        if y > v + tol {
            break;
        }
        left = left.min(y);
    }
    let mut right = v;
    for &y in &x[p + 1..] {
        if y > v + tol {
            break;
        }
        right = right.min(y);
    }
    v - left.max(right)
}

/// Peaks of the profile and of its negation, with one threshold computed
/// from the profile.
pub fn peaks_and_valleys(p: &Profile, det: &PeakDetector) -> (Vec<usize>, Vec<usize>) {
    if p.len() < 3 {
        return (Vec::new(), Vec::new());
    }
    let t = det.threshold(&p.heights);
    let neg: Vec<f64> = p.heights.iter().map(|h| -h).collect();
    (find_peaks(&p.heights, t, det.distance), find_peaks(&neg, t, det.distance))
}

/// One peak–valley difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthPair {
    pub profile: usize,
    pub valley: usize,
    pub peak: usize,
    pub depth_um: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthStats {
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
    pub n: usize,
}

impl DepthStats {
    pub fn from_depths(depths: &[f64]) -> Result<Self> {
        if depths.is_empty() {
            return Err(Error::EmptyResult("no peak–valley pairs found".into()));
        }
        Ok(Self {
            mean: mean(depths),
            sd: sd_population(depths),
            n: depths.len(),
        })
    }

    /// Combines per-reading summaries as the mean of means and the mean of
    /// standard deviations.
    pub fn average(parts: &[DepthStats]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::EmptyResult("nothing to average".into()));
        }
        let k = parts.len() as f64;
        Ok(Self {
            mean: parts.iter().map(|s| s.mean).sum::<f64>() / k,
            sd: parts.iter().map(|s| s.sd).sum::<f64>() / k,
            n: parts.iter().map(|s| s.n).sum(),
        })
    }
}

/// Pairs every valley with the nearest peak on each side.
pub fn depth_pairs(profiles: &[Profile], smoothing: Option<Smoothing>, det: &PeakDetector) -> Result<Vec<DepthPair>> {
    let mut out = Vec::new();
    for (k, p) in profiles.iter().enumerate() {
        let smoothed;
        let p = match smoothing {
            Some(cfg) if p.len() > cfg.order => {
                smoothed = smooth_profile(p, cfg)?;
                &smoothed
            }
            _ => p,
        };
        let (peaks, valleys) = peaks_and_valleys(p, det);
        for &v in &valleys {
            let i = peaks.partition_point(|&q| q < v);
            for q in [i.checked_sub(1).map(|j| peaks[j]), peaks.get(i).copied()].into_iter().flatten() {
                out.push(DepthPair {
                    profile: k,
                    valley: v,
                    peak: q,
                    depth_um: (p.heights[q] - p.heights[v]).abs(),
                });
            }
        }
    }
    Ok(out)
}

pub fn depth_stats(profiles: &[Profile], smoothing: Option<Smoothing>, det: &PeakDetector) -> Result<DepthStats> {
    if profiles.is_empty() {
        return Err(Error::invalid("no profiles given"));
    }
    let pairs = depth_pairs(profiles, smoothing, det)?;
    DepthStats::from_depths(&pairs.iter().map(|p| p.depth_um).collect::<Vec<_>>())
}

/// How cross-sections are laid over a channel-object height map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "sections")]
pub enum SectionPlan {
    Straight { spacing: usize, orientation: Orientation },
    /// Rays about `center = (row, col)`, the raster center when `None`.
    Circular { center: Option<(f64, f64)>, dtheta_deg: f64 },
}

/// Complete recipe for measuring one channel object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureConfig {
    pub plan: SectionPlan,
    pub smoothing: Option<Smoothing>,
    pub detector: PeakDetector,
}

impl MeasureConfig {
    /// Grooves `width_px` wide; straight grooves vary along columns, so
    /// each profile is a row. Rows are taken every 17 px and rays every 15°.
    pub fn for_channels(width_px: f64, circular: bool) -> Self {
        let plan = if circular {
            SectionPlan::Circular {
                center: None,
                dtheta_deg: 15.0,
            }
        } else {
            SectionPlan::Straight {
                spacing: 17,
                orientation: Orientation::Rows,
            }
        };
        Self {
            plan,
            smoothing: None,
            detector: PeakDetector::for_channel_width(width_px),
        }
    }

    pub fn sections(&self, h: &HeightMap) -> Result<Vec<Profile>> {
        match self.plan {
            SectionPlan::Straight { spacing, orientation } => straight_sections(h, spacing, orientation),
            SectionPlan::Circular { center, dtheta_deg } => {
                let c = center.unwrap_or(((h.height() - 1) as f64 / 2.0, (h.width() - 1) as f64 / 2.0));
                circular_sections(h, c, dtheta_deg)
            }
        }
    }
}

/// Sections, pairs and summary of one height map.
pub fn measure(h: &HeightMap, cfg: &MeasureConfig) -> Result<(Vec<DepthPair>, DepthStats)> {
    let profiles = cfg.sections(h)?;
    let pairs = depth_pairs(&profiles, cfg.smoothing, &cfg.detector)?;
    let stats = DepthStats::from_depths(&pairs.iter().map(|p| p.depth_um).collect::<Vec<_>>())?;
    Ok((pairs, stats))
}

pub fn write_pairs_csv(path: impl AsRef<Path>, pairs: &[DepthPair]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["profile", "pair", "valley_px", "peak_px", "depth_um"])?;
    for (i, p) in pairs.iter().enumerate() {
        w.write_record([
            p.profile.to_string(),
            i.to_string(),
            p.valley.to_string(),
            p.peak.to_string(),
            format!("{:.6}", p.depth_um),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_stats_json(path: impl AsRef<Path>, stats: &DepthStats) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut f, stats)?;
    f.write_all(b"\n").map_err(|e| Error::io(path, e))
}

/// Intraclass correlations of two raters over the same targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IccSet {
    /// One-way random effects, single measure.
    pub icc1: f64,
    /// Two-way random effects, absolute agreement, single measure.
    pub icc2_1: f64,
    /// Two-way mixed effects, consistency, single measure.
    pub icc3_1: f64,
}

pub fn icc(x: &[f64], y: &[f64]) -> Result<IccSet> {
    check_pairs(x, y)?;
    let n = x.len() as f64;
    let k = 2.0;
    let gm = (x.iter().sum::<f64>() + y.iter().sum::<f64>()) / (2.0 * n);
    let (mx, my) = (mean(x), mean(y));
    let row_means: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a + b) / 2.0).collect();
    let msr = k * row_means.iter().map(|m| (m - gm).powi(2)).sum::<f64>() / (n - 1.0);
    let msc = n * ((mx - gm).powi(2) + (my - gm).powi(2)) / (k - 1.0);
    let sse: f64 = x
        .iter()
        .zip(y)
        .zip(&row_means)
        .map(|((a, b), r)| (a - r - mx + gm).powi(2) + (b - r - my + gm).powi(2))
        .sum();
    let mse = sse / ((n - 1.0) * (k - 1.0));
    let msw = x
        .iter()
        .zip(y)
        .zip(&row_means)
        .map(|((a, b), r)| (a - r).powi(2) + (b - r).powi(2))
        .sum::<f64>()
        / (n * (k - 1.0));
    Ok(IccSet {
        icc1: (msr - msw) / (msr + (k - 1.0) * msw),
        icc2_1: (msr - mse) / (msr + (k - 1.0) * mse + k * (msc - mse) / n),
        icc3_1: (msr - mse) / (msr + (k - 1.0) * mse),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub mae: f64,
    /// `1 − Σ(y−x)² / Σ(y−ȳ)²`: fit of the measurements to the line y = x.
    pub r2: f64,
    /// Squared Pearson correlation.
    pub r2_pearson: f64,
    /// Two-way mixed, consistency, single measure.
    pub icc: f64,
    pub icc_variants: IccSet,
}

/// Agreement of measurements `y` with references `x`.
pub fn agreement(x: &[f64], y: &[f64]) -> Result<Agreement> {
    check_pairs(x, y)?;
    let n = x.len() as f64;
    let mae = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let (mx, my) = (mean(x), mean(y));
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - a).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let r2 = if syy > 0.0 {
        1.0 - ss_res / syy
    } else if ss_res == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    let r2_pearson = if sxx > 0.0 && syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        f64::NAN
    };
    let icc_variants = icc(x, y)?;
    Ok(Agreement {
        mae,
        r2,
        r2_pearson,
        icc: icc_variants.icc3_1,
        icc_variants,
    })
}

fn check_pairs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::dims(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::invalid("agreement needs at least two pairs"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn profile(h: Vec<f64>) -> Profile {
        Profile::from_heights(h, Cut::Row { index: 0 }).unwrap()
    }

    fn square_wave(n: usize, period: usize, amp: f64) -> Vec<f64> {
        (0..n).map(|i| if (i % period) < period / 2 { 0.0 } else { -amp }).collect()
    }

    #[test]
    fn straight_section_counts() {
        let h = HeightMap::zeros(1300, 1300, 0.0077);
        assert_eq!(straight_sections(&h, 100, Orientation::Rows).unwrap().len(), 13);
        let one = straight_sections(&h, 5000, Orientation::Columns).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].cut, Cut::Column { index: 0 });
        assert!(straight_sections(&h, 0, Orientation::Rows).is_err());
    }

    #[test]
    fn constant_map_gives_constant_profiles() {
        let h = HeightMap::from_fn(40, 30, 0.01, |_, _| 7.5);
        for p in straight_sections(&h, 7, Orientation::Columns).unwrap() {
            assert!(p.heights.iter().all(|&v| v == 7.5));
        }
    }

    #[test]
    fn circular_ray_count_and_symmetry() {
        let n = 101;
        let c = 50.0;
        let h = HeightMap::from_fn(n, n, 0.01, |r, k| {
            let rho = ((r as f64 - c).powi(2) + (k as f64 - c).powi(2)).sqrt();
            (rho / 6.0).sin() * 10.0
        });
        let rays = circular_sections(&h, (c, c), 15.0).unwrap();
        assert_eq!(rays.len(), 24);
        // Axis-aligned rays sample exact grid points and must coincide.
        for i in [0, 6, 12, 18] {
            assert_eq!(rays[i].len(), 51);
            for (a, b) in rays[0].heights.iter().zip(&rays[i].heights) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_degree_ray_matches_center_row() {
        let h = HeightMap::from_fn(64, 48, 0.01, |r, c| (r * 3 + c * c) as f64 * 0.1);
        let rays = circular_sections(&h, (20.0, 30.0), 90.0).unwrap();
        let row = &straight_sections(&h, 1, Orientation::Rows).unwrap()[20];
        assert_eq!(rays[0].heights, row.heights[30..]);
        let col = &straight_sections(&h, 1, Orientation::Columns).unwrap()[30];
        assert_eq!(rays[1].heights, col.heights[20..]);
        assert!(circular_sections(&h, (-1.0, 3.0), 15.0).is_err());
    }

    #[test]
    fn savgol_reproduces_cubics() {
        let f = |x: f64| 0.002 * x.powi(3) - 0.3 * x * x + 4.0 * x - 11.0;
        let p = profile((0..200).map(|i| f(i as f64)).collect());
        let s = smooth_profile(&p, Smoothing::default()).unwrap();
        for (a, b) in p.heights.iter().zip(&s.heights) {
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "{a} vs {b}");
        }
        let short = profile((0..9).map(|i| f(i as f64)).collect());
        let s = smooth_profile(&short, Smoothing::default()).unwrap();
        for (a, b) in short.heights.iter().zip(&s.heights) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn savgol_rejects_bad_windows() {
        let p = profile(vec![0.0; 50]);
        assert!(smooth_profile(&p, Smoothing { window: 10, order: 3 }).is_err());
        assert!(smooth_profile(&p, Smoothing { window: 3, order: 3 }).is_err());
        let c = profile(vec![2.5; 50]);
        let s = smooth_profile(&c, Smoothing { window: 11, order: 3 }).unwrap();
        assert!(s.heights.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn savgol_noise_gain_matches_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let p = profile((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
        let s = smooth_profile(&p, Smoothing { window: 11, order: 3 }).unwrap();
        let var = |v: &[f64]| sd_population(v).powi(2);
        let ratio = var(&s.heights[5..n - 5]) / var(&p.heights);
        // White-noise gain of a linear filter is Σ wⱼ².
        let offsets: Vec<f64> = (-5..=5).map(f64::from).collect();
        let gain: f64 = savgol_weights(&offsets, 3).iter().map(|w| w * w).sum();
        assert!(ratio < 1.0);
        assert!((ratio - gain).abs() < 0.03, "{ratio} vs {gain}");
    }

    #[test]
    fn square_wave_extrema() {
        let (period, amp) = (130, 96.0);
        let p = profile(square_wave(1300, period, amp));
        let (peaks, valleys) = peaks_and_valleys(&p, &PeakDetector::default());
        // Plateaus touching either end are not extrema.
        assert_eq!(peaks.len(), 9);
        assert_eq!(valleys.len(), 9);
        let mut all: Vec<(usize, bool)> = peaks.iter().map(|&i| (i, true)).chain(valleys.iter().map(|&i| (i, false))).collect();
        all.sort();
        assert!(all.windows(2).all(|w| w[0].1 != w[1].1));
        for &v in &valleys {
            assert_eq!(v % period, 97);
        }
        for &q in &peaks {
            assert_eq!(q % period, 32);
        }
    }

    #[test]
    fn ramp_and_pulse() {
        let det = PeakDetector {
            prominence: Prominence::Absolute(0.0),
            distance: 1,
        };
        let (p, v) = peaks_and_valleys(&profile((0..50).map(f64::from).collect()), &det);
        assert!(p.is_empty() && v.is_empty());
        let tri: Vec<f64> = (0..41).map(|i| 20.0 - (i as f64 - 20.0).abs()).collect();
        let (p, _) = peaks_and_valleys(&profile(tri), &det);
        assert_eq!(p, vec![20]);
    }

    #[test]
    fn distance_keeps_highest() {
        let x = [0.0, 1.0, 0.0, 3.0, 0.0, 2.0, 0.0];
        assert_eq!(find_peaks(&x, 0.0, 1), vec![1, 3, 5]);
        assert_eq!(find_peaks(&x, 0.0, 3), vec![3]);
        assert_eq!(find_peaks(&x, 1.5, 1), vec![3, 5]);
    }

    #[test]
    fn ideal_channels_depth() {
        let h = HeightMap::from_fn(300, 200, 0.0077, |_, c| if (c / 65) % 2 == 0 { 0.0 } else { -96.0 });
        let profiles = straight_sections(&h, 20, Orientation::Rows).unwrap();
        let det = PeakDetector::for_channel_width(65.0);
        let s = depth_stats(&profiles, None, &det).unwrap();
        assert!((s.mean - 96.0).abs() < 2.0 && s.sd < 2.0, "{s:?}");
        // Smoothing ideal steps overshoots at the edges; a blurred relief
        // (as any reconstruction is) does not.
        let blurred = HeightMap::from_fn(300, 400, 0.0077, |_, c| {
            let phase = (2.0 * std::f64::consts::PI * c as f64 / 130.0).cos();
            -48.0 * (1.0 - (2.0 * phase).tanh() / 2.0f64.tanh())
        });
        let profiles = straight_sections(&blurred, 20, Orientation::Rows).unwrap();
        let s = depth_stats(&profiles, Some(Smoothing::default()), &det).unwrap();
        assert!((s.mean - 96.0).abs() < 2.0 && s.sd < 2.0, "{s:?}");
    }

    #[test]
    fn flat_map_has_no_pairs() {
        let h = HeightMap::zeros(50, 50, 0.01);
        let profiles = straight_sections(&h, 10, Orientation::Rows).unwrap();
        assert!(matches!(
            depth_stats(&profiles, None, &PeakDetector::default()),
            Err(Error::EmptyResult(_))
        ));
    }

    #[test]
    fn averaging_matches_cross_gel_table() {
        let rows = crate::data::gel_objects();
        let avg = crate::data::object_averages();
        for (dataset, gels) in [("validation", 1..=2), ("test", 1..=2)] {
            let mut parts: Vec<Vec<DepthStats>> = Vec::new();
            for gel in gels {
                for (i, group) in crate::data::max_force_rows(&rows, gel, dataset).into_iter().enumerate() {
                    if parts.len() <= i {
                        parts.push(Vec::new());
                    }
                    parts[i].extend(group.iter().map(|r| DepthStats {
                        mean: r.mean_um,
                        sd: r.sd_um,
                        n: 1,
                    }));
                }
            }
            for group in parts {
                let designed = rows.iter().find(|r| r.mean_um == group[0].mean).unwrap().designed_um;
                let want = avg.iter().find(|a| a.dataset == dataset && a.designed_um == designed).unwrap();
                let got = DepthStats::average(&group).unwrap();
                assert!((got.mean - want.gelsight_mean_um).abs() < 0.005 + 1e-9, "{designed}: {got:?}");
                assert!((got.sd - want.gelsight_sd_um).abs() < 0.005 + 1e-9, "{designed}: {got:?}");
            }
        }
        let p24 = avg.iter().find(|a| a.designed_um == 24.0).unwrap();
        let s = DepthStats::average(&[DepthStats {
            mean: p24.profilometer_mean_um,
            sd: p24.profilometer_sd_um,
            n: 1,
        }])
        .unwrap();
        assert_eq!((s.mean, s.sd), (22.65, 3.30));
    }

    #[test]
    fn agreement_identity() {
        let x = [1.0, 5.0, 9.0, 2.0];
        let a = agreement(&x, &x).unwrap();
        assert_eq!(a.mae, 0.0);
        assert!((a.r2 - 1.0).abs() < 1e-12 && (a.icc - 1.0).abs() < 1e-12);
        assert!((a.icc_variants.icc2_1 - 1.0).abs() < 1e-12);
        assert!(agreement(&x, &x[..3]).is_err());
    }

    #[test]
    fn agreement_reference_values() {
        let a = agreement(&[22.65, 53.95, 70.31, 101.22], &[27.45, 56.56, 79.88, 94.51]).unwrap();
        assert!((a.r2 - 0.935).abs() < 0.02 && (a.icc - 0.976).abs() < 0.02, "{a:?}");
        let t = agreement(&[9.09, 35.05, 66.92, 92.34], &[13.50, 38.70, 67.51, 87.17]).unwrap();
        assert!((t.r2 - 0.981).abs() < 0.02 && (t.icc - 0.992).abs() < 0.02, "{t:?}");
    }

    proptest! {
        #[test]
        fn depth_translation_and_sign_invariant(shift in -500.0f64..500.0, depth in 5.0f64..150.0, period in 30usize..90) {
            let base = square_wave(600, period, depth);
            let det = PeakDetector::for_channel_width(period as f64 / 2.0);
            let a = depth_stats(&[profile(base.clone())], Some(Smoothing { window: 11, order: 3 }), &det).unwrap();
            let b = depth_stats(&[profile(base.iter().map(|h| h + shift).collect())], Some(Smoothing { window: 11, order: 3 }), &det).unwrap();
            prop_assert!((a.mean - b.mean).abs() < 1e-6 && a.n == b.n);
            let c = depth_stats(&[profile(base.iter().map(|h| -h).collect())], None, &det).unwrap();
            let d = depth_stats(&[profile(base)], None, &det).unwrap();
            prop_assert!((c.mean - d.mean).abs() < 1e-9);
        }

        #[test]
        fn savgol_reproduces_low_degree(a in -5.0f64..5.0, b in -1.0f64..1.0, c in -0.01f64..0.01, order in 2usize..6) {
            let p = profile((0..120).map(|i| { let x = i as f64; a + b * x + c * x * x }).collect());
            let s = smooth_profile(&p, Smoothing { window: 2 * order + 5, order }).unwrap();
            for (u, v) in p.heights.iter().zip(&s.heights) {
                prop_assert!((u - v).abs() < 1e-8);
            }
        }
    }
}
