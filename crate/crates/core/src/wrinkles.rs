//! Wrinkle valleys: multi-angle line scans, thinning, and depth sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channels::find_peaks;
use crate::raster::Mask;
use crate::stats::{mean, percentile, sd_population};
use crate::{Error, HeightMap, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WrinkleConfig {
    /// Scan directions, degrees from the +col axis toward +row.
    pub angles_deg: Vec<f64>,
    /// Minimum valley prominence, µm.
    pub prominence_um: f64,
    /// Minimum separation of valleys along one line, in samples.
    pub distance: usize,
    pub n_samples: usize,
    /// Search radius for the surrounding peak, px.
    pub radius_px: usize,
    pub percentile: f64,
    pub bins: usize,
}

impl Default for WrinkleConfig {
    fn default() -> Self {
        Self {
            angles_deg: vec![-60.0, -30.0, 0.0, 30.0, 60.0, 90.0],
            prominence_um: 1.0,
            distance: 1,
            n_samples: 10_000,
            radius_px: 30,
            percentile: 80.0,
            bins: 30,
        }
    }
}

impl WrinkleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.angles_deg.is_empty() || self.angles_deg.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("need at least one finite scan angle"));
        }
        if !(self.prominence_um >= 0.0) {
            return Err(Error::invalid("prominence must be non-negative"));
        }
        if self.n_samples == 0 || self.bins == 0 {
            return Err(Error::invalid("sample and bin counts must be positive"));
        }
        if !(0.0..=100.0).contains(&self.percentile) {
            return Err(Error::invalid("percentile outside [0, 100]"));
        }
        Ok(())
    }
}

/// Valley pixels; `skeletonized` marks thinned masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValleyMask {
    pub mask: Mask,
    pub skeletonized: bool,
}

fn snap(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        0.0
    } else if (x.abs() - 1.0).abs() < 1e-12 {
        x.signum()
    } else {
        x
    }
}

/// Sample positions of one scan line, as `(row, col)` pairs in order.
fn line_samples(base: (f64, f64), dir: (f64, f64), h: usize, w: usize) -> Vec<(f64, f64)> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (b, d, max) in [(base.0, dir.0, (h - 1) as f64), (base.1, dir.1, (w - 1) as f64)] {
        if d == 0.0 {
            if b < -1e-9 || b > max + 1e-9 {
                return Vec::new();
            }
        } else {
            let (a, c) = ((0.0 - b) / d, (max - b) / d);
            lo = lo.max(a.min(c));
            hi = hi.min(a.max(c));
        }
    }
    let (t0, t1) = ((lo - 1e-9).ceil() as i64, (hi + 1e-9).floor() as i64);
    (t0..=t1)
        .map(|t| {
            let t = t as f64;
            (
                (base.0 + t * dir.0).clamp(0.0, (h - 1) as f64),
                (base.1 + t * dir.1).clamp(0.0, (w - 1) as f64),
            )
        })
        .collect()
}

/// Scan lines covering the raster at `angle_deg`, spaced one pixel apart.
fn scan_lines(h: usize, w: usize, angle_deg: f64) -> Vec<Vec<(f64, f64)>> {
    let (s, c) = angle_deg.to_radians().sin_cos();
    let dir = (snap(s), snap(c));
    let normal = (dir.1, -dir.0);
    let origin = (((h - 1) / 2) as f64, ((w - 1) / 2) as f64);
    let reach = (h + w) as i64;
    (-reach..=reach)
        .map(|o| {
            let o = o as f64;
            line_samples((origin.0 + o * normal.0, origin.1 + o * normal.1), dir, h, w)
        })
        .filter(|l| l.len() >= 3)
        .collect()
}

fn line_valleys(hm: &HeightMap, line: &[(f64, f64)], cfg: &WrinkleConfig) -> Vec<(usize, usize)> {
    let neg: Vec<f64> = line
        .iter()
        .map(|&(r, c)| -hm.sample(r, c).expect("line stays inside the raster"))
        .collect();
    find_peaks(&neg, cfg.prominence_um, cfg.distance)
        .into_iter()
        .map(|i| (line[i].0.round() as usize, line[i].1.round() as usize))
        .collect()
}

/// Marks every pixel that is a valley on some scan line at some angle.
pub fn detect_valleys(h: &HeightMap, cfg: &WrinkleConfig) -> Result<ValleyMask> {
    cfg.validate()?;
    if h.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("height map has non-finite values"));
    }
    let (ht, w) = (h.height(), h.width());
    let lines: Vec<Vec<(f64, f64)>> = cfg.angles_deg.iter().flat_map(|&a| scan_lines(ht, w, a)).collect();
    #[cfg(feature = "parallel")]
    let hits: Vec<Vec<(usize, usize)>> = {
        use rayon::prelude::*;
        lines.par_iter().map(|l| line_valleys(h, l, cfg)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let hits: Vec<Vec<(usize, usize)>> = lines.iter().map(|l| line_valleys(h, l, cfg)).collect();
    let mut mask = Mask::empty(w, ht);
    for (r, c) in hits.into_iter().flatten() {
        mask.set(r, c, true);
    }
    Ok(ValleyMask {
        mask,
        skeletonized: false,
    })
}

/// Neighbours P2..P9 clockwise from north; outside pixels count as unset.
fn neighbours(m: &Mask, r: usize, c: usize) -> [bool; 8] {
    let (h, w) = (m.height() as i64, m.width() as i64);
    let at = |dr: i64, dc: i64| {
        let (rr, cc) = (r as i64 + dr, c as i64 + dc);
        rr >= 0 && cc >= 0 && rr < h && cc < w && m.get(rr as usize, cc as usize)
    };
    [
        at(-1, 0),
        at(-1, 1),
        at(0, 1),
        at(1, 1),
        at(1, 0),
        at(1, -1),
        at(0, -1),
        at(-1, -1),
    ]
}

fn transitions(p: &[bool; 8]) -> usize {
    (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count()
}

/// One two-subiteration thinning pass; returns whether anything changed.
fn zhang_suen_pass(m: &mut Mask) -> bool {
    let mut changed = false;
    for step in 0..2 {
        let mut del = Vec::new();
        for (r, c) in m.positions() {
            let p = neighbours(m, r, c);
            let b = p.iter().filter(|&&x| x).count();
            if !(2..=6).contains(&b) || transitions(&p) != 1 {
                continue;
            }
            // P2 P4 P6 / P4 P6 P8 on the first step, P2 P4 P8 / P2 P6 P8 on the second.
            let (n, e, s, wst) = (p[0], p[2], p[4], p[6]);
            let ok = if step == 0 {
                !(n && e && s) && !(e && s && wst)
            } else {
                !(n && e && wst) && !(n && s && wst)
            };
            if ok {
                del.push((r, c));
            }
        }
        changed |= !del.is_empty();
        for (r, c) in del {
            m.set(r, c, false);
        }
    }
    changed
}

/// Connected groups of set neighbours, walking the ring of eight (ring
/// neighbours are always 8-adjacent to each other).
fn neighbour_components(p: &[bool; 8]) -> usize {
    let mut seen = [false; 8];
    let mut comps = 0;
    for start in 0..8 {
        if !p[start] || seen[start] {
            continue;
        }
        comps += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for j in [(i + 1) % 8, (i + 7) % 8] {
                if p[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    comps
}

/// Removes one pixel from every 2×2 fully-set block, preferring pixels whose
/// removal keeps their neighbourhood connected.
fn break_blocks(m: &mut Mask) -> bool {
    let mut changed = false;
    for r in 0..m.height().saturating_sub(1) {
        for c in 0..m.width().saturating_sub(1) {
            let cells = [(r, c), (r, c + 1), (r + 1, c), (r + 1, c + 1)];
            if !cells.iter().all(|&(a, b)| m.get(a, b)) {
                continue;
            }
            let pick = cells
                .iter()
                .copied()
                .find(|&(a, b)| neighbour_components(&neighbours(m, a, b)) == 1)
                .unwrap_or(cells[0]);
            m.set(pick.0, pick.1, false);
            changed = true;
        }
    }
    changed
}

/// Zhang–Suen thinning to a fixpoint, followed by removal of any remaining
/// 2×2 blocks, repeated until neither step changes the mask.
pub fn skeletonize(mask: &Mask) -> ValleyMask {
    let mut m = mask.clone();
    loop {
        while zhang_suen_pass(&mut m) {}
        if !break_blocks(&mut m) {
            break;
        }
    }
    ValleyMask {
        mask: m,
        skeletonized: true,
    }
}

/// For up to `n_samples` skeleton pixels drawn without replacement, the
/// height of the highest point within `radius_px` above the valley pixel.
pub fn estimate_depths(
    h: &HeightMap,
    skeleton: &ValleyMask,
    n_samples: usize,
    radius_px: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let m = &skeleton.mask;
    if (m.width(), m.height()) != (h.width(), h.height()) {
        return Err(Error::dims(
            format!("{}x{}", h.width(), h.height()),
            format!("{}x{}", m.width(), m.height()),
        ));
    }
    let pts = m.positions();
    if pts.is_empty() {
        return Err(Error::EmptyResult("skeleton has no pixels".into()));
    }
    let rad = radius_px as i64;
    let disk: Vec<(i64, i64)> = (-rad..=rad)
        .flat_map(|dr| (-rad..=rad).map(move |dc| (dr, dc)))
        .filter(|(dr, dc)| dr * dr + dc * dc <= rad * rad)
        .collect();
    let (ht, w) = (h.height() as i64, h.width() as i64);
    let k = n_samples.min(pts.len());
    let picks = rand::seq::index::sample(rng, pts.len(), k);
    Ok(picks
        .into_iter()
        .map(|i| {
            let (r, c) = pts[i];
            let base = h.get(r, c);
            let top = disk
                .iter()
                .map(|&(dr, dc)| (r as i64 + dr, c as i64 + dc))
                .filter(|&(rr, cc)| rr >= 0 && cc >= 0 && rr < ht && cc < w)
                .map(|(rr, cc)| h.get(rr as usize, cc as usize))
                .fold(base, f64::max);
            top - base
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    /// Normalized so that `Σ density·width = 1`.
    pub density: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrinkleSummary {
    pub depths: Vec<f64>,
    pub p80: f64,
    pub percentile: f64,
    pub histogram: Histogram,
    /// Maximum-likelihood normal fit: mean and population SD.
    pub gaussian_mean: f64,
    pub gaussian_sd: f64,
}

pub fn histogram(xs: &[f64], bins: usize) -> Result<Histogram> {
    if xs.is_empty() || bins == 0 {
        return Err(Error::EmptyResult("histogram needs values and bins".into()));
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0usize; bins];
    for &x in xs {
        counts[(((x - lo) / width) as usize).min(bins - 1)] += 1;
    }
    let total = xs.len() as f64 * width;
    Ok(Histogram {
        edges,
        density: counts.iter().map(|&n| n as f64 / total).collect(),
    })
}

pub fn summarize(depths: &[f64], pct: f64, bins: usize) -> Result<WrinkleSummary> {
    if depths.is_empty() {
        return Err(Error::EmptyResult("no depths to summarize".into()));
    }
    Ok(WrinkleSummary {
        depths: depths.to_vec(),
        p80: percentile(depths, pct)?,
        percentile: pct,
        histogram: histogram(depths, bins)?,
        gaussian_mean: mean(depths),
        gaussian_sd: sd_population(depths),
    })
}

/// Detect, thin, sample and summarize in one go.
pub fn analyze(h: &HeightMap, cfg: &WrinkleConfig, rng: &mut impl Rng) -> Result<(ValleyMask, WrinkleSummary)> {
    let raw = detect_valleys(h, cfg)?;
    let skel = skeletonize(&raw.mask);
    let depths = estimate_depths(h, &skel, cfg.n_samples, cfg.radius_px, rng)?;
    let summary = summarize(&depths, cfg.percentile, cfg.bins)?;
    Ok((skel, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn sinusoid(n: usize, amp: f64, period: f64) -> HeightMap {
        HeightMap::from_fn(n, n, 0.0077, |_, c| amp * (2.0 * PI * c as f64 / period).sin())
    }

    fn has_block(m: &Mask) -> bool {
        (0..m.height() - 1).any(|r| {
            (0..m.width() - 1).any(|c| m.get(r, c) && m.get(r, c + 1) && m.get(r + 1, c) && m.get(r + 1, c + 1))
        })
    }

    /// 8-connected component labels of a mask.
    fn components(m: &Mask) -> usize {
        let mut seen = vec![false; m.width() * m.height()];
        let mut n = 0;
        for (r, c) in m.positions() {
            if seen[r * m.width() + c] {
                continue;
            }
            n += 1;
            let mut stack = vec![(r, c)];
            seen[r * m.width() + c] = true;
            while let Some((a, b)) = stack.pop() {
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let (x, y) = (a as i64 + dr, b as i64 + dc);
                        if x >= 0 && y >= 0 && (x as usize) < m.height() && (y as usize) < m.width() {
                            let (x, y) = (x as usize, y as usize);
                            if m.get(x, y) && !seen[x * m.width() + y] {
                                seen[x * m.width() + y] = true;
                                stack.push((x, y));
                            }
                        }
                    }
                }
            }
        }
        n
    }

    #[test]
    fn sinusoid_valleys_at_analytic_minima() {
        let (n, period) = (200, 40.0);
        let v = detect_valleys(&sinusoid(n, 10.0, period), &WrinkleConfig::default()).unwrap();
        assert!(v.mask.count() > 0);
        for (_, c) in v.mask.positions() {
            let k = ((c as f64 / period) - 0.75).round();
            let target = period * (0.75 + k);
            assert!((c as f64 - target).abs() <= 1.0, "col {c}");
        }
        // Every interior row finds every minimum on the row scan.
        let row = 100;
        let hits = (0..n).filter(|&c| v.mask.get(row, c)).count();
        assert_eq!(hits, 5);
    }

    #[test]
    fn constant_map_has_no_valleys() {
        let h = HeightMap::from_fn(64, 64, 0.01, |_, _| 3.0);
        assert_eq!(detect_valleys(&h, &WrinkleConfig::default()).unwrap().mask.count(), 0);
    }

    #[test]
    fn rotation_swaps_row_and_column_scans() {
        let n = 80;
        let h = HeightMap::from_fn(n, n, 0.01, |r, c| {
            let (x, y) = (c as f64, r as f64);
            5.0 * (x / 4.3).sin() * (y / 7.1).cos() + 3.0 * ((x + 2.0 * y) / 5.7).sin()
        });
        // Rotate a quarter turn: (r, c) ↦ (c, n−1−r).
        let rot = HeightMap::from_fn(n, n, 0.01, |r, c| h.get(n - 1 - c, r));
        let only = |a: f64| WrinkleConfig {
            angles_deg: vec![a],
            ..WrinkleConfig::default()
        };
        let a = detect_valleys(&h, &only(0.0)).unwrap().mask;
        let b = detect_valleys(&rot, &only(90.0)).unwrap().mask;
        assert!(a.count() > 0);
        for r in 0..n {
            for c in 0..n {
                assert_eq!(a.get(r, c), b.get(c, n - 1 - r), "({r}, {c})");
            }
        }
    }

    /// Textbook two-subiteration thinning on a zero-padded grid.
    fn reference_thinning(grid: &mut [Vec<u8>]) {
        let (h, w) = (grid.len(), grid[0].len());
        loop {
            let mut changed = false;
            for step in 0..2 {
                let mut del = Vec::new();
                for r in 1..h - 1 {
                    for c in 1..w - 1 {
                        if grid[r][c] == 0 {
                            continue;
                        }
                        let p = [
                            grid[r - 1][c],
                            grid[r - 1][c + 1],
                            grid[r][c + 1],
                            grid[r + 1][c + 1],
                            grid[r + 1][c],
                            grid[r + 1][c - 1],
                            grid[r][c - 1],
                            grid[r - 1][c - 1],
                        ];
                        let b: u8 = p.iter().sum();
                        let a = (0..8).filter(|&i| p[i] == 0 && p[(i + 1) % 8] == 1).count();
                        let cond = if step == 0 {
                            p[0] * p[2] * p[4] == 0 && p[2] * p[4] * p[6] == 0
                        } else {
                            p[0] * p[2] * p[6] == 0 && p[0] * p[4] * p[6] == 0
                        };
                        if (2..=6).contains(&b) && a == 1 && cond {
                            del.push((r, c));
                        }
                    }
                }
                changed |= !del.is_empty();
                for (r, c) in del {
                    grid[r][c] = 0;
                }
            }
            if !changed {
                break;
            }
        }
    }

    #[test]
    fn thick_bar_thins_to_centerline() {
        let (w, h) = (40, 9);
        let mut m = Mask::empty(w, h);
        let mut grid = vec![vec![0u8; w]; h];
        for r in 3..6 {
            for c in 5..35 {
                m.set(r, c, true);
                grid[r][c] = 1;
            }
        }
        let s = skeletonize(&m).mask;
        reference_thinning(&mut grid);
        for r in 0..h {
            for c in 0..w {
                assert_eq!(s.get(r, c), grid[r][c] == 1, "({r}, {c})");
            }
        }
        let pts = s.positions();
        assert!(pts.iter().all(|&(r, _)| r == 4), "{pts:?}");
        let cols: Vec<usize> = pts.iter().map(|p| p.1).collect();
        assert_eq!(cols.len(), cols.last().unwrap() - cols.first().unwrap() + 1);
        // The algorithm is not mirror-symmetric: the west end loses one
        // pixel, the east end two.
        assert_eq!((cols[0], *cols.last().unwrap()), (6, 32));
    }

    #[test]
    fn thin_line_and_empty_are_fixpoints() {
        let mut m = Mask::empty(20, 20);
        for i in 2..18 {
            m.set(i, i, true);
            m.set(10, i, true);
        }
        assert_eq!(skeletonize(&m).mask, m);
        let e = Mask::empty(7, 5);
        assert_eq!(skeletonize(&e).mask, e);
    }

    #[test]
    fn solid_square_keeps_one_component() {
        let mut m = Mask::empty(30, 30);
        for r in 5..25 {
            for c in 5..25 {
                m.set(r, c, true);
            }
        }
        let s = skeletonize(&m).mask;
        assert!(s.count() > 0 && components(&s) == 1 && !has_block(&s));
    }

    #[test]
    fn sinusoid_depths_peak_to_trough() {
        let h = sinusoid(150, 25.0, 50.0);
        let cfg = WrinkleConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (_, s) = analyze(&h, &cfg, &mut rng).unwrap();
        for d in &s.depths {
            assert!((d - 50.0).abs() < 0.02 * 50.0, "{d}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(analyze(&h, &cfg, &mut rng).unwrap().1, s);
    }

    #[test]
    fn zero_radius_gives_zero_depths() {
        let h = sinusoid(60, 5.0, 20.0);
        let v = skeletonize(&detect_valleys(&h, &WrinkleConfig::default()).unwrap().mask);
        let d = estimate_depths(&h, &v, 100, 0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(d.iter().all(|&x| x == 0.0));
        let empty = ValleyMask {
            mask: Mask::empty(60, 60),
            skeletonized: true,
        };
        assert!(estimate_depths(&h, &empty, 10, 3, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn summary_conventions() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = summarize(&xs, 80.0, 10).unwrap();
        assert!((s.p80 - 80.2).abs() < 1e-12);
        let h = &s.histogram;
        let area: f64 = h.density.iter().zip(h.edges.windows(2)).map(|(d, e)| d * (e[1] - e[0])).sum();
        assert!((area - 1.0).abs() < 1e-12);
        let same = summarize(&[7.0; 12], 80.0, 5).unwrap();
        assert_eq!((same.p80, same.gaussian_sd), (7.0, 0.0));
        assert!(summarize(&[], 80.0, 5).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn skeleton_idempotent_and_thin(bits in proptest::collection::vec(proptest::bool::weighted(0.55), 24 * 24)) {
            let m = Mask::new(24, 24, bits).unwrap();
            let s = skeletonize(&m).mask;
            prop_assert!(!has_block(&s));
            prop_assert!(s.positions().iter().all(|&(r, c)| m.get(r, c)));
            prop_assert_eq!(skeletonize(&s).mask, s);
        }

        #[test]
        fn depths_translation_invariant(shift in -1000.0f64..1000.0, seed in 0u64..1000) {
            let h = HeightMap::from_fn(48, 48, 0.01, |r, c| 6.0 * (c as f64 / 3.1).sin() + 2.0 * (r as f64 / 5.3).cos());
            let up = h.map(|v| v + shift).unwrap();
            let skel = skeletonize(&detect_valleys(&h, &WrinkleConfig::default()).unwrap().mask);
            let a = estimate_depths(&h, &skel, 200, 10, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = estimate_depths(&up, &skel, 200, 10, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(*x >= 0.0 && (x - y).abs() < 1e-9);
            }
        }
    }
}
