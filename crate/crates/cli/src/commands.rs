use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use tactilemap_core::calibration::{self, DatasetConfig, GridPlan, TouchParams};
use tactilemap_core::channels::{self, MeasureConfig};
use tactilemap_core::hertz::{self, ForceCurve, DEFAULT_POISSON_RATIO};
use tactilemap_core::net::{self, NetConfig, TrainConfig};
use tactilemap_core::raster::{self, png, Raster, MM_PER_PIXEL};
use tactilemap_core::recon::{self, Boundary, PoissonSymbol, ReconConfig};
use tactilemap_core::sim::{self, ChannelLayout, ChannelObjectSpec, LightingModel, VirtualProbe};
use tactilemap_core::wrinkles::{self, WrinkleConfig};
use tactilemap_core::{data, stats, HeightMap, NormalMap, SensorGeometry, TactileImage};

use crate::manifest::{resolve, Recorder};
use crate::Global;

/// Width of the native crop that pixel-valued parameters refer to.
const NATIVE_CROP: usize = 1500;

fn geometry(crop_size: usize) -> Result<SensorGeometry> {
    let g = SensorGeometry::default().resampled(crop_size);
    g.validate()?;
    Ok(g)
}

/// Touch window given in native pixels, rescaled to `geom`.
fn scaled_touch(t: TouchParams, geom: &SensorGeometry) -> TouchParams {
    TouchParams {
        crop_px: ((t.crop_px * geom.crop_size) as f64 / NATIVE_CROP as f64).round().max(3.0) as usize,
        ..t
    }
}

/// Pitch of a raster covering the standard field of view.
fn pitch_for_width(width: usize) -> f64 {
    MM_PER_PIXEL * NATIVE_CROP as f64 / width as f64
}

fn load_rgb(path: &Path) -> Result<TactileImage> {
    let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    Ok(if is_png {
        png::load_rgb(path)?
    } else {
        raster::load_image(path)?
    })
}

fn require(p: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    match p {
        Some(p) => Ok(p),
        None => bail!("missing required input {flag}"),
    }
}

fn object_name(spec: &ChannelObjectSpec) -> String {
    let kind = match spec.layout {
        ChannelLayout::Straight { .. } => "straight",
        ChannelLayout::Circular { .. } => "circular",
    };
    format!("{kind}_{}um_{}um", spec.channel_width_um, spec.depth_um)
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Side of the square sensor crop in pixels.
    #[arg(long)]
    crop_size: Option<usize>,
    /// Per-channel Gaussian image noise.
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Only render the channel objects.
    #[arg(long)]
    no_dataset: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateParams {
    pub crop_size: usize,
    pub noise_sigma: f64,
    pub objects: Vec<ChannelObjectSpec>,
    pub dataset: bool,
    /// Touch window in native pixels; the seed is taken from `--seed`.
    pub calibration: DatasetConfig,
}

impl Default for SimulateParams {
    fn default() -> Self {
        Self {
            crop_size: 256,
            noise_sigma: 0.002,
            objects: ChannelObjectSpec::validation_set()
                .into_iter()
                .chain(ChannelObjectSpec::test_set())
                .collect(),
            dataset: true,
            calibration: DatasetConfig::default(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub name: String,
    pub spec: ChannelObjectSpec,
    pub height: PathBuf,
    pub image: PathBuf,
    pub preview: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ObjectIndex {
    pub mm_per_pixel: f64,
    pub untouched: PathBuf,
    pub objects: Vec<ObjectEntry>,
}

pub fn simulate(g: &Global, a: SimulateArgs) -> Result<()> {
    let p: SimulateParams = resolve(
        g.config.as_deref(),
        json!({
            "crop_size": a.crop_size,
            "noise_sigma": a.noise_sigma,
            "dataset": if a.no_dataset { Some(false) } else { None },
        }),
    )?;
    let geom = geometry(p.crop_size)?;
    let lights = LightingModel::default().with_noise(p.noise_sigma);
    lights.validate()?;
    let mut rec = Recorder::new(&g.out, "simulate", g.seed, serde_json::to_value(&p)?)?;
    if let Some(c) = &g.config {
        rec.input(c);
    }
    let n = geom.crop_size;
    let mut summary = json!({});

    if p.dataset {
        let dcfg = DatasetConfig {
            touch: scaled_touch(p.calibration.touch, &geom),
            seed: g.seed,
            ..p.calibration
        };
        let c = (n - 1) as f64 / 2.0;
        let mut probe = VirtualProbe::new(geom, lights.clone(), dcfg.radii_mm[0], (c, c), g.seed ^ 0x5eed);
        let ds = calibration::build_dataset(&mut probe, &GridPlan::standard(dcfg.radii_mm[0]), (c, c), &dcfg)?;
        let dir = rec.path("calibration");
        let m = calibration::save_dataset(&dir, &ds)?;
        rec.output(dir.join("dataset.json"));
        for e in &m.samples {
            for f in [&e.image, &e.untouched, &e.gt_normals, &e.mask] {
                rec.output(dir.join(f));
            }
        }
        summary["samples"] = json!(ds.samples.len());
        summary["train"] = json!(ds.train.len());
        summary["test"] = json!(ds.test.len());
    }

    let dir = rec.path("objects");
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let flat = HeightMap::zeros(n, n, geom.mm_per_pixel);
    let untouched = sim::render(&flat, &lights, g.seed.wrapping_add(1))?;
    let untouched_path = PathBuf::from("untouched.tmr");
    raster::save_raster(dir.join(&untouched_path), &Raster::from(untouched))?;
    rec.output(dir.join(&untouched_path));
    let mut entries = Vec::new();
    for (i, spec) in p.objects.iter().enumerate() {
        let name = object_name(spec);
        let h = sim::channel_object(spec, &geom)?;
        let img = sim::render(&h, &lights, g.seed.wrapping_add(100 + i as u64))?;
        let e = ObjectEntry {
            height: format!("{name}_height.tmr").into(),
            image: format!("{name}_image.tmr").into(),
            preview: format!("{name}_image.png").into(),
            name,
            spec: *spec,
        };
        raster::save_raster(dir.join(&e.height), &Raster::from(h))?;
        png::save_rgb(dir.join(&e.preview), &img, png::BitDepth::Sixteen)?;
        raster::save_raster(dir.join(&e.image), &Raster::from(img))?;
        for f in [&e.height, &e.image, &e.preview] {
            rec.output(dir.join(f));
        }
        entries.push(e);
    }
    summary["objects"] = json!(entries.len());
    let index = ObjectIndex {
        mm_per_pixel: geom.mm_per_pixel,
        untouched: untouched_path,
        objects: entries,
    };
    rec.write_json("objects/objects.json", &index)?;
    let m = rec.finish(summary.clone())?;
    println!("{}", serde_json::to_string(&summary)?);
    eprintln!("wrote {}", m.display());
    Ok(())
}

// --------------------------------------------------------------- calibrate

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    scenarios: Option<usize>,
    /// Largest image noise drawn for a scenario.
    #[arg(long)]
    max_noise: Option<f64>,
    #[arg(long)]
    crop_size: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrateParams {
    pub crop_size: usize,
    pub scenarios: usize,
    pub max_noise: f64,
    /// Window in native pixels.
    pub touch: TouchParams,
}

impl Default for CalibrateParams {
    fn default() -> Self {
        Self {
            crop_size: 256,
            scenarios: 50,
            max_noise: 0.005,
            touch: TouchParams::default(),
        }
    }
}

pub fn calibrate(g: &Global, a: CalibrateArgs) -> Result<()> {
    let p: CalibrateParams = resolve(
        g.config.as_deref(),
        json!({"scenarios": a.scenarios, "max_noise": a.max_noise, "crop_size": a.crop_size}),
    )?;
    let geom = geometry(p.crop_size)?;
    let mut rec = Recorder::new(&g.out, "calibrate", g.seed, serde_json::to_value(&p)?)?;
    let runs = calibration::touch_scenarios(
        &geom,
        &LightingModel::default(),
        &scaled_touch(p.touch, &geom),
        p.scenarios,
        p.max_noise,
        g.seed,
    )?;
    let path = rec.path("touch.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "scenario",
        "noise_sigma",
        "indenter_radius_mm",
        "surface_z_um",
        "start_z_um",
        "detected_z_um",
        "error_um",
    ])?;
    for r in &runs {
        w.write_record([
            r.scenario.to_string(),
            format!("{:.6}", r.noise_sigma),
            r.indenter_radius_mm.to_string(),
            format!("{:.4}", r.surface_z_um),
            r.start_z_um.to_string(),
            format!("{:.4}", r.detected_z_um),
            format!("{:.4}", r.error_um),
        ])?;
    }
    w.flush()?;
    rec.output(path);
    let errs: Vec<f64> = runs.iter().map(|r| r.error_um).collect();
    let summary = if errs.is_empty() {
        json!({"scenarios": 0})
    } else {
        json!({
            "scenarios": errs.len(),
            "min_error_um": errs.iter().cloned().fold(f64::INFINITY, f64::min),
            "max_error_um": errs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            "mean_error_um": stats::mean(&errs),
            "within_0_15_um": errs.iter().filter(|&&e| (0.0..=15.0).contains(&e)).count(),
        })
    };
    rec.finish(summary.clone())?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

// ------------------------------------------------------------------- train

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `dataset.json` written by `simulate`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Convolution width of each block.
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub dataset: Option<PathBuf>,
    pub net: NetConfig,
    /// The seed is taken from `--seed`.
    pub train: TrainConfig,
}

pub fn train(g: &Global, a: TrainArgs) -> Result<()> {
    let p: TrainParams = resolve(
        g.config.as_deref(),
        json!({
            "dataset": a.dataset,
            "net": {"channels_per_block": a.channels},
            "train": {"epochs": a.epochs, "lr": a.lr},
        }),
    )?;
    let ds_path = require(p.dataset.clone(), "--dataset")?;
    let ds = calibration::load_dataset(&ds_path)?;
    let tcfg = TrainConfig { seed: g.seed, ..p.train };
    let mut rec = Recorder::new(&g.out, "train", g.seed, serde_json::to_value(&p)?)?;
    rec.input(&ds_path);
    let pick = |idx: &[usize]| idx.iter().map(|&i| &ds.samples[i]).collect::<Vec<_>>();
    let (train_s, test_s) = (pick(&ds.train), pick(&ds.test));
    let init = net::Network::init(p.net, tcfg.seed)?;
    let out = net::train_with(&train_s, init, &tcfg, |e| {
        eprintln!("epoch {:>3}  loss {:.5}  lr {:.2e}", e.epoch, e.mean_loss, e.lr);
    })?;
    let weights = rec.path("weights.tmw");
    net::save_weights(&weights, &out.model)?;
    rec.output(weights);
    let loss = rec.path("loss.csv");
    net::write_loss_csv(&loss, &out.history)?;
    rec.output(loss);
    let test_loss = if test_s.is_empty() {
        None
    } else {
        Some(net::evaluate(&out.model, &test_s)?)
    };
    let summary = json!({
        "train_samples": train_s.len(),
        "test_samples": test_s.len(),
        "final_train_loss": out.history.last().map(|e| e.mean_loss),
        "test_loss": test_loss,
    });
    rec.finish(summary.clone())?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

// ------------------------------------------------------------- reconstruct

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Trained weights (`weights.tmw`).
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Tactile frame, `.tmr` or `.png`.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Frame of the untouched gel, `.tmr` or `.png`.
    #[arg(long)]
    untouched: Option<PathBuf>,
    /// Integrate this normal map instead of running the estimator.
    #[arg(long, conflicts_with_all = ["weights", "image", "untouched"])]
    normals: Option<PathBuf>,
    /// Pixel pitch; inferred from the raster width when absent.
    #[arg(long)]
    pitch_mm: Option<f64>,
    /// High-pass cutoff in cycles per pixel.
    #[arg(long)]
    cutoff: Option<f64>,
    /// Border removed from every side, px.
    #[arg(long)]
    border: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructParams {
    pub pitch_mm: Option<f64>,
    /// When absent, scaled from the native setting to the pitch.
    pub cutoff: Option<f64>,
    pub border_crop: Option<usize>,
    pub symbol: PoissonSymbol,
    pub boundary: Boundary,
}

pub fn reconstruct(g: &Global, a: ReconstructArgs) -> Result<()> {
    let p: ReconstructParams = resolve(
        g.config.as_deref(),
        json!({"pitch_mm": a.pitch_mm, "cutoff": a.cutoff, "border_crop": a.border}),
    )?;
    let mut rec = Recorder::new(&g.out, "reconstruct", g.seed, serde_json::to_value(&p)?)?;
    let normals: NormalMap = match a.normals {
        Some(path) => {
            rec.input(&path);
            raster::load_normal_map(&path)?
        }
        None => {
            let (w, i, u) = (
                require(a.weights, "--weights")?,
                require(a.image, "--image")?,
                require(a.untouched, "--untouched")?,
            );
            for f in [&w, &i, &u] {
                rec.input(f);
            }
            let model = net::load_weights(&w)?;
            net::infer_normals(&model, &load_rgb(&i)?, &load_rgb(&u)?)?
        }
    };
    let pitch = p.pitch_mm.unwrap_or_else(|| pitch_for_width(normals.width()));
    let base = ReconConfig::for_pitch(pitch);
    let cfg = ReconConfig {
        cutoff: p.cutoff.unwrap_or(base.cutoff),
        border_crop: p.border_crop.unwrap_or(base.border_crop),
        symbol: p.symbol,
        boundary: p.boundary,
        ..base
    };
    let h = recon::normals_to_height(&normals, &cfg)?;
    let np = rec.path("normals.tmr");
    raster::save_raster(&np, &Raster::from(normals))?;
    rec.output(np);
    let hp = rec.path("height.tmr");
    raster::save_raster(&hp, &Raster::from(h.clone()))?;
    rec.output(hp);
    let pp = rec.path("height.png");
    png::save_height_preview(&pp, &h)?;
    rec.output(pp);
    let summary = json!({
        "width": h.width(),
        "height": h.height(),
        "mm_per_pixel": pitch,
        "cutoff": cfg.cutoff,
        "border_crop": cfg.border_crop,
        "rms_um": h.rms(),
        "peak_to_peak_um": h.peak_to_peak(),
    });
    rec.finish(summary.clone())?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

// ---------------------------------------------------------------- channels

#[derive(Debug, Args)]
pub struct ChannelsArgs {
    /// Height map (`.tmr`).
    #[arg(long)]
    height: Option<PathBuf>,
    /// Designed channel width.
    #[arg(long)]
    width_um: Option<f64>,
    /// Concentric grooves measured along rays from the center.
    #[arg(long)]
    circular: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelsParams {
    pub channel_width_um: f64,
    pub circular: bool,
    /// Overrides the sections, smoothing and detector derived from the width.
    pub measure: Option<MeasureConfig>,
}

impl Default for ChannelsParams {
    fn default() -> Self {
        Self {
            channel_width_um: 500.0,
            circular: false,
            measure: None,
        }
    }
}

pub fn channels(g: &Global, a: ChannelsArgs) -> Result<()> {
    let p: ChannelsParams = resolve(
        g.config.as_deref(),
        json!({"channel_width_um": a.width_um, "circular": if a.circular { Some(true) } else { None }}),
    )?;
    let path = require(a.height, "--height")?;
    let h = raster::load_height_map(&path)?;
    let mcfg = p
        .measure
        .unwrap_or_else(|| MeasureConfig::for_channels(p.channel_width_um / h.pitch_um(), p.circular));
    let mut rec = Recorder::new(&g.out, "channels", g.seed, json!({"params": p, "resolved": mcfg}))?;
    rec.input(&path);
    let (pairs, st) = channels::measure(&h, &mcfg)?;
    let pp = rec.path("pairs.csv");
    channels::write_pairs_csv(&pp, &pairs)?;
    rec.output(pp);
    let sp = rec.path("stats.json");
    channels::write_stats_json(&sp, &st)?;
    rec.output(sp);
    rec.finish(serde_json::to_value(st)?)?;
    println!("{}", serde_json::to_string(&st)?);
    Ok(())
}

// ---------------------------------------------------------------- wrinkles

#[derive(Debug, Args)]
pub struct WrinklesArgs {
    /// Height map (`.tmr`).
    #[arg(long)]
    height: Option<PathBuf>,
    #[arg(long)]
    n_samples: Option<usize>,
    /// Peak search radius, px.
    #[arg(long)]
    radius_px: Option<usize>,
}

pub fn wrinkles(g: &Global, a: WrinklesArgs) -> Result<()> {
    let p: WrinkleConfig = resolve(
        g.config.as_deref(),
        json!({"n_samples": a.n_samples, "radius_px": a.radius_px}),
    )?;
    p.validate()?;
    let path = require(a.height, "--height")?;
    let h = raster::load_height_map(&path)?;
    let mut rec = Recorder::new(&g.out, "wrinkles", g.seed, serde_json::to_value(&p)?)?;
    rec.input(&path);
    let raw = wrinkles::detect_valleys(&h, &p)?;
    let skel = wrinkles::skeletonize(&raw.mask);
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let depths = wrinkles::estimate_depths(&h, &skel, p.n_samples, p.radius_px, &mut rng)?;
    let s = wrinkles::summarize(&depths, p.percentile, p.bins)?;

    for (name, m) in [("valleys.png", &raw.mask), ("skeleton.png", &skel.mask)] {
        let f = rec.path(name);
        png::save_mask(&f, m)?;
        rec.output(f);
    }
    let mut text = String::from("depth_um\n");
    s.depths.iter().for_each(|d| text.push_str(&format!("{d}\n")));
    rec.write_text("depths.csv", &text)?;
    let mut text = String::from("bin_lo_um,bin_hi_um,density\n");
    for (i, d) in s.histogram.density.iter().enumerate() {
        text.push_str(&format!("{},{},{}\n", s.histogram.edges[i], s.histogram.edges[i + 1], d));
    }
    rec.write_text("histogram.csv", &text)?;
    let summary = json!({
        "valley_pixels": raw.mask.count(),
        "skeleton_pixels": skel.mask.count(),
        "samples": s.depths.len(),
        "percentile": s.percentile,
        "depth_at_percentile_um": s.p80,
        "gaussian_mean_um": s.gaussian_mean,
        "gaussian_sd_um": s.gaussian_sd,
    });
    rec.write_json("summary.json", &summary)?;
    rec.finish(summary.clone())?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

// ------------------------------------------------------------------- hertz

#[derive(Debug, Args)]
pub struct HertzArgs {
    /// CSV with `displacement_mm,force_n` columns; repeat for several trials.
    #[arg(long = "curve")]
    curves: Vec<PathBuf>,
    #[arg(long)]
    radius_mm: Option<f64>,
    #[arg(long)]
    poisson: Option<f64>,
    /// Also fit the displacement at first contact.
    #[arg(long)]
    fit_offset: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HertzParams {
    pub indenter_radius_mm: f64,
    pub poisson_ratio: f64,
    pub fit_offset: bool,
}

impl Default for HertzParams {
    fn default() -> Self {
        Self {
            indenter_radius_mm: 1.5,
            poisson_ratio: DEFAULT_POISSON_RATIO,
            fit_offset: false,
        }
    }
}

pub fn hertz(g: &Global, a: HertzArgs) -> Result<()> {
    let p: HertzParams = resolve(
        g.config.as_deref(),
        json!({
            "indenter_radius_mm": a.radius_mm,
            "poisson_ratio": a.poisson,
            "fit_offset": if a.fit_offset { Some(true) } else { None },
        }),
    )?;
    if a.curves.is_empty() {
        bail!("at least one --curve is required");
    }
    let mut rec = Recorder::new(&g.out, "hertz", g.seed, serde_json::to_value(&p)?)?;
    let mut fits = Vec::new();
    for c in &a.curves {
        rec.input(c);
        let curve = ForceCurve::load_csv(c, p.indenter_radius_mm, p.poisson_ratio)?;
        let fit = if p.fit_offset {
            hertz::fit_modulus_with_offset(&curve)?
        } else {
            hertz::fit_modulus(&curve)?
        };
        fits.push(json!({"curve": c, "fit": fit}));
    }
    let moduli: Vec<f64> = fits
        .iter()
        .map(|f| f["fit"]["e2_kpa"].as_f64().unwrap_or(f64::NAN))
        .collect();
    let summary = hertz::summarize_trials(&moduli)?;
    rec.write_json("fit.json", &json!({"trials": fits, "summary": summary}))?;
    rec.finish(serde_json::to_value(&summary)?)?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

// ------------------------------------------------------------------- stats

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Wrinkle-depth table (participant column plus location columns);
    /// the bundled table when absent.
    #[arg(long)]
    table: Option<PathBuf>,
}

pub fn stats(g: &Global, a: StatsArgs) -> Result<()> {
    let table = match &a.table {
        Some(p) => data::WrinkleTable::load(p)?,
        None => data::wrinkle_p80(),
    };
    let mut rec = Recorder::new(&g.out, "stats", g.seed, json!({"table": a.table}))?;
    if let Some(p) = &a.table {
        rec.input(p);
    }
    let mut rows = Vec::new();
    for (key, label) in data::TREATED_LOCATIONS {
        let [pre1, pre2, post] = table.treated(key)?;
        rows.push(stats::location_report(label, pre1, pre2, post)?);
    }
    let report = stats::format_report(&rows);
    rec.write_text("tests.csv", &report)?;
    let mut desc = String::from("column,n,mean,sd,median,min,max\n");
    for (name, col) in table.columns.iter().zip(&table.values) {
        let d = stats::describe(col)?;
        desc.push_str(&format!(
            "{name},{},{:.2},{:.2},{:.2},{:.2},{:.2}\n",
            d.n, d.mean, d.sd, d.median, d.min, d.max
        ));
    }
    rec.write_text("descriptive.csv", &desc)?;
    rec.write_json("tests.json", &rows)?;
    rec.finish(json!({"locations": rows.len()}))?;
    print!("{report}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn touch_window_scales_with_crop() {
        let geom = geometry(256).unwrap();
        assert_eq!(scaled_touch(TouchParams::default(), &geom).crop_px, 51);
    }

    #[test]
    fn pitch_follows_width() {
        assert!((pitch_for_width(1500) - MM_PER_PIXEL).abs() < 1e-15);
        assert!((pitch_for_width(256) - 0.0077 * 1500.0 / 256.0).abs() < 1e-15);
    }

    #[test]
    fn object_names_are_distinct() {
        let mut names: Vec<String> = SimulateParams::default().objects.iter().map(object_name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 8);
    }
}
