use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tactilemap_core::raster::{self, Raster};
use tactilemap_core::HeightMap;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tactilemap"))
        .args(args)
        .env("TACTILEMAP_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(
        o.status.success(),
        "{args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn json_file(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

#[test]
fn help_exits_cleanly() {
    let o = run(&["reconstruct", "--help"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("--weights"));
}

#[test]
fn missing_scene_file_fails_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = run(&["simulate", "--config", "/nonexistent/scene.json", "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("scene.json"), "{err}");
}

#[test]
fn stats_reproduces_reference_tests() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["stats", "--out", dir.path().to_str().unwrap()]);
    for want in ["19.7333", "22.5333", "21.7333", "0.5995", "0.0001", "0.6879"] {
        assert!(out.contains(want), "{want} missing from\n{out}");
    }
    let palm = out.lines().find(|l| l.starts_with("Palm")).unwrap();
    assert!(palm.contains(",0.5995,0.0001,"), "{palm}");
    let m = json_file(&dir.path().join("manifest.json"));
    assert_eq!(m["command"], "stats");
    assert_eq!(m["outputs"].as_array().unwrap().len(), 3);
}

#[test]
fn default_scene_counts_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.json");
    // Small crop to keep the dataset light; counts do not depend on it.
    std::fs::write(&scene, r#"{"crop_size": 64}"#).unwrap();
    let mut manifests = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        ok(&["simulate", "--config", scene.to_str().unwrap(), "--seed", "5", "--out", out.to_str().unwrap()]);
        let ds = json_file(&out.join("calibration/dataset.json"));
        assert_eq!(ds["samples"].as_array().unwrap().len(), 147);
        let objs = json_file(&out.join("objects/objects.json"));
        assert_eq!(objs["objects"].as_array().unwrap().len(), 8);
        let m = json_file(&out.join("manifest.json"));
        assert_eq!(m["seed"], 5);
        assert_eq!(m["config"]["crop_size"], 64);
        manifests.push(m);
    }
    assert_eq!(manifests[0]["outputs"], manifests[1]["outputs"]);
    assert_eq!(manifests[0]["config_sha256"], manifests[1]["config_sha256"]);
}

#[test]
fn flag_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.json");
    std::fs::write(&scene, r#"{"crop_size": 64, "noise_sigma": 0.01}"#).unwrap();
    let out = dir.path().join("o");
    ok(&[
        "simulate",
        "--config",
        scene.to_str().unwrap(),
        "--no-dataset",
        "--noise-sigma",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    let m = json_file(&out.join("manifest.json"));
    assert_eq!(m["config"]["noise_sigma"], 0.0);
    assert_eq!(m["config"]["crop_size"], 64);
    assert!(!out.join("calibration").exists());
}

#[test]
fn channel_depth_of_reconstructed_96um_object() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--no-dataset", "--out", sim.to_str().unwrap()]);
    let h = raster::load_height_map(sim.join("objects/straight_500um_96um_height.tmr")).unwrap();
    let normals = dir.path().join("normals.tmr");
    raster::save_raster(&normals, &Raster::from(h.normals())).unwrap();
    let rec = dir.path().join("rec");
    ok(&["reconstruct", "--normals", normals.to_str().unwrap(), "--out", rec.to_str().unwrap()]);
    let ch = dir.path().join("ch");
    let out = ok(&[
        "channels",
        "--height",
        rec.join("height.tmr").to_str().unwrap(),
        "--width-um",
        "500",
        "--out",
        ch.to_str().unwrap(),
    ]);
    let st: Value = serde_json::from_str(&out).unwrap();
    let mean = st["mean"].as_f64().unwrap();
    assert!((81.0..=111.0).contains(&mean), "mean {mean}");
    assert_eq!(json_file(&ch.join("stats.json")), st);
}

#[test]
fn reconstruct_requires_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["reconstruct", "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--weights"));
}

#[test]
fn hertz_fits_trials() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["hertz".to_string()];
    for (i, e) in [124.44, 129.55, 132.74].iter().enumerate() {
        let c = tactilemap_core::hertz::synthetic_curve(*e, 0.49, 1.5, 2.0, 40).unwrap();
        let mut text = String::from("displacement_mm,force_n\n");
        for (d, f) in c.displacement_mm.iter().zip(&c.force_n) {
            text.push_str(&format!("{d},{f}\n"));
        }
        let p = dir.path().join(format!("t{i}.csv"));
        std::fs::write(&p, text).unwrap();
        args.push("--curve".into());
        args.push(p.to_str().unwrap().into());
    }
    let out_dir = dir.path().join("o");
    args.extend(["--out".into(), out_dir.to_str().unwrap().into()]);
    let out = ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let s: Value = serde_json::from_str(&out).unwrap();
    assert!((s["mean_kpa"].as_f64().unwrap() - 128.91).abs() < 0.01, "{s}");
}

#[test]
fn wrinkles_on_sinusoid() {
    let dir = tempfile::tempdir().unwrap();
    let h = HeightMap::from_fn(200, 200, 0.0077, |r, c| {
        let _ = r;
        25.0 * (2.0 * std::f64::consts::PI * c as f64 / 50.0).sin()
    });
    let p = dir.path().join("skin.tmr");
    raster::save_raster(&p, &Raster::from(h)).unwrap();
    let out_dir = dir.path().join("o");
    let out = ok(&["wrinkles", "--height", p.to_str().unwrap(), "--seed", "3", "--out", out_dir.to_str().unwrap()]);
    let s: Value = serde_json::from_str(&out).unwrap();
    let d = s["depth_at_percentile_um"].as_f64().unwrap();
    assert!((d - 50.0).abs() < 2.5, "{d}");
    for f in ["skeleton.png", "valleys.png", "depths.csv", "histogram.csv", "summary.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
}

#[test]
fn calibrate_reports_every_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&[
        "calibrate",
        "--scenarios",
        "3",
        "--crop-size",
        "128",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let s: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(s["scenarios"], 3);
    let csv = std::fs::read_to_string(dir.path().join("touch.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}
