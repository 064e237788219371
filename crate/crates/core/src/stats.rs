//! Rank tests and descriptive statistics for repeated skin measurements.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::{Error, Result};

/// Largest sample size that takes the exact Wilcoxon path under
/// [`WilcoxonMethod::Auto`].
pub const EXACT_WILCOXON_MAX_N: usize = 25;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard deviation with an `n` denominator.
pub fn sd_population(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Standard deviation with an `n − 1` denominator; `None` for a single value.
pub fn sd_sample(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs);
    Some((xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
}

/// Percentile `q ∈ [0, 100]` by linear interpolation between order
/// statistics at fractional rank `q/100·(n−1)`.
pub fn percentile(xs: &[f64], q: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyResult("percentile of an empty list".into()));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::invalid(format!("percentile {q} outside [0, 100]")));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Sizes of the tie groups in `xs` (groups of one included).
fn tie_groups(xs: &[f64]) -> Vec<usize> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let j = v[i..].iter().take_while(|&&x| x == v[i]).count();
        out.push(j);
        i += j;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptive {
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation (`n` denominator).
    pub sd: f64,
    /// Sample standard deviation (`n − 1`); absent for a single value.
    pub sd_sample: Option<f64>,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

pub fn describe(xs: &[f64]) -> Result<Descriptive> {
    if xs.is_empty() {
        return Err(Error::EmptyResult("describe of an empty column".into()));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite value in column"));
    }
    Ok(Descriptive {
        n: xs.len(),
        mean: mean(xs),
        sd: sd_population(xs),
        sd_sample: sd_sample(xs),
        median: percentile(xs, 50.0)?,
        min: xs.iter().copied().fold(f64::INFINITY, f64::min),
        max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Subjects × conditions matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatedMeasures {
    pub labels: Vec<String>,
    /// `rows[subject][condition]`.
    pub rows: Vec<Vec<f64>>,
}

impl RepeatedMeasures {
    pub fn new(labels: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = labels.len();
        if rows.len() < 2 || k < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 subjects and 2 conditions, got {}×{k}",
                rows.len()
            )));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != k) {
            return Err(Error::dims(k, r.len()));
        }
        if rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::invalid("missing or non-finite cell"));
        }
        Ok(Self { labels, rows })
    }

    /// Builds the matrix from condition columns.
    pub fn from_columns(labels: Vec<String>, columns: &[&[f64]]) -> Result<Self> {
        let n = columns.first().map_or(0, |c| c.len());
        if let Some(c) = columns.iter().find(|c| c.len() != n) {
            return Err(Error::dims(n, c.len()));
        }
        let rows = (0..n).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
        Self::new(labels, rows)
    }

    pub fn subjects(&self) -> usize {
        self.rows.len()
    }

    pub fn conditions(&self) -> usize {
        self.labels.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p: f64,
}

/// Friedman χ² with the usual tie correction and a χ²(k−1) p-value.
pub fn friedman(data: &RepeatedMeasures) -> Result<TestResult> {
    friedman_with(data, true)
}

pub fn friedman_with(data: &RepeatedMeasures, tie_correction: bool) -> Result<TestResult> {
    let (n, k) = (data.subjects() as f64, data.conditions());
    if k < 3 {
        return Err(Error::invalid(format!("Friedman test needs k ≥ 3, got {k}")));
    }
    let kf = k as f64;
    let mut rank_sums = vec![0.0; k];
    let mut ties = 0.0;
    for row in &data.rows {
        for (s, r) in rank_sums.iter_mut().zip(average_ranks(row)) {
            *s += r;
        }
        ties += tie_groups(row).iter().map(|&t| (t * t * t - t) as f64).sum::<f64>();
    }
    let ss: f64 = rank_sums.iter().map(|r| r * r).sum();
    let mut chi2 = 12.0 / (n * kf * (kf + 1.0)) * ss - 3.0 * n * (kf + 1.0);
    if tie_correction {
        let c = 1.0 - ties / (n * (kf * kf * kf - kf));
        chi2 = if c > 0.0 { chi2 / c } else { 0.0 };
    }
    // Rounding noise can leave a tiny negative value when all ranks agree.
    let chi2 = chi2.max(0.0);
    let dist = ChiSquared::new(kf - 1.0).expect("k ≥ 3 gives positive dof");
    Ok(TestResult {
        statistic: chi2,
        p: dist.sf(chi2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    /// Exact up to [`EXACT_WILCOXON_MAX_N`] nonzero pairs, normal above.
    #[default]
    Auto,
    /// Null distribution of the rank sum over untied ranks `1..n`,
    /// evaluated at `floor(W)`.
    Exact,
    /// Enumerates sign assignments over the actual (average) ranks.
    ExactTied,
    /// Normal approximation with tie and continuity corrections.
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// `min(T+, T−)`.
    pub w: f64,
    pub p: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
}

/// Two-sided paired signed-rank test of `a − b`, zero differences dropped.
pub fn wilcoxon(a: &[f64], b: &[f64], method: WilcoxonMethod) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::dims(a.len(), b.len()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|&d| d != 0.0).collect();
    if d.is_empty() {
        return Err(Error::Degenerate("all paired differences are zero".into()));
    }
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let ranks = average_ranks(&abs);
    let t_plus: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w = t_plus.min(total - t_plus);
    let method = match method {
        WilcoxonMethod::Auto if n <= EXACT_WILCOXON_MAX_N => WilcoxonMethod::Exact,
        WilcoxonMethod::Auto => WilcoxonMethod::Normal,
        m => m,
    };
    let p = match method {
        WilcoxonMethod::Exact => {
            let ranks: Vec<usize> = (1..=n).collect();
            2.0 * lower_tail(&ranks, w.floor() as usize)
        }
        WilcoxonMethod::ExactTied => {
            // Average ranks are multiples of 1/2; doubling makes them integers.
            let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
            2.0 * lower_tail(&doubled, (2.0 * w).round() as usize)
        }
        WilcoxonMethod::Normal => {
            let ties: f64 = tie_groups(&abs).iter().map(|&t| (t * t * t - t) as f64).sum();
            let nf = n as f64;
            let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
            let z = if var > 0.0 {
                ((total / 2.0 - w).abs() - 0.5).max(0.0) / var.sqrt()
            } else {
                0.0
            };
            2.0 * Normal::new(0.0, 1.0).expect("unit normal").sf(z)
        }
        WilcoxonMethod::Auto => unreachable!("resolved above"),
    };
    Ok(WilcoxonResult { w, p: p.min(1.0), n })
}

/// `P(Σ sᵢ·rᵢ ≤ t)` over the 2ⁿ equally likely sign vectors `s ∈ {0,1}ⁿ`.
fn lower_tail(ranks: &[usize], t: usize) -> f64 {
    let max: usize = ranks.iter().sum();
    let mut counts = vec![0.0f64; max + 1];
    counts[0] = 1.0;
    let mut top = 0;
    for &r in ranks {
        top += r;
        for s in (r..=top).rev() {
            counts[s] += counts[s - r];
        }
    }
    let hits: f64 = counts[..=t.min(max)].iter().sum();
    hits / 2f64.powi(ranks.len() as i32)
}

/// `min(1, m·p)` for each p-value.
pub fn bonferroni(pvals: &[f64], m: usize) -> Result<Vec<f64>> {
    if let Some(p) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("p-value {p} outside [0, 1]")));
    }
    Ok(pvals.iter().map(|p| (p * m as f64).min(1.0)).collect())
}

/// Friedman plus pairwise post-hoc tests for one location with three
/// readings (two before treatment, one after).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationReport {
    pub location: String,
    pub friedman: TestResult,
    /// Pairs in order (pre1, pre2), (pre1, post), (pre2, post).
    pub wilcoxon: [WilcoxonResult; 3],
    pub bonferroni: [f64; 3],
}

pub const PAIR_LABELS: [&str; 3] = ["Pre1 vs Pre2", "Pre1 vs Post", "Pre2 vs Post"];

pub fn location_report(location: &str, pre1: &[f64], pre2: &[f64], post: &[f64]) -> Result<LocationReport> {
    let rm = RepeatedMeasures::from_columns(
        vec!["pre1".into(), "pre2".into(), "post".into()],
        &[pre1, pre2, post],
    )?;
    let pairs = [(pre1, pre2), (pre1, post), (pre2, post)];
    let mut w = Vec::with_capacity(3);
    for (a, b) in pairs {
        w.push(wilcoxon(a, b, WilcoxonMethod::Auto)?);
    }
    let adj = bonferroni(&w.iter().map(|r| r.p).collect::<Vec<_>>(), 3)?;
    Ok(LocationReport {
        location: location.to_string(),
        friedman: friedman(&rm)?,
        wilcoxon: [w[0], w[1], w[2]],
        bonferroni: [adj[0], adj[1], adj[2]],
    })
}

/// Fixed four-decimal table, one row per location.
pub fn format_report(rows: &[LocationReport]) -> String {
    let mut out = String::from("location,friedman_chi2,friedman_p");
    for prefix in ["wilcoxon", "bonferroni"] {
        for l in PAIR_LABELS {
            out.push_str(&format!(",{prefix} {}", l.to_lowercase()));
        }
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{:.4},{:.4}", r.location, r.friedman.statistic, r.friedman.p));
        for w in &r.wilcoxon {
            out.push_str(&format!(",{:.4}", w.p));
        }
        for p in &r.bonferroni {
            out.push_str(&format!(",{p:.4}"));
        }
        out.push('\n');
    }
    out
}
