use tactilemap_web::{Scene, WrinklePatch};

#[test]
fn straight_scene_round_trip() {
    let mut s = Scene::build("straight", 500.0, 96.0, 256, 0.0, 1).unwrap();
    assert_eq!(s.image_rgba().len(), 256 * 256 * 4);
    let r = s.reconstruct_report(1.0).unwrap();
    assert!(r.error_um.abs() < 15.0, "{r:?}");
    assert_eq!(s.recon_rgba().len(), r.width * r.height * 4);
    assert_eq!(s.recon_size(), r.width);
}

#[test]
fn circular_scene_round_trip() {
    let mut s = Scene::build("circular", 350.0, 60.0, 256, 0.0, 1).unwrap();
    let r = s.reconstruct_report(1.0).unwrap();
    assert!(r.error_um.abs() < 15.0, "{r:?}");
}

#[test]
fn bad_layout_is_rejected() {
    assert!(Scene::build("zigzag", 500.0, 10.0, 128, 0.0, 0).is_err());
    assert!(Scene::build("straight", 500.0, 10.0, 8, 0.0, 0).is_err());
}

#[test]
fn wrinkle_patch_report() {
    let mut p = WrinklePatch::build(128, 25.0, 50.0, 0.0).unwrap();
    let a = p.analyze_report(30, 7).unwrap();
    let b = p.analyze_report(30, 7).unwrap();
    assert_eq!(a.depth_at_percentile_um, b.depth_at_percentile_um);
    assert!(a.skeleton_pixels > 0);
    let overlay = p.overlay_rgba();
    assert_eq!(overlay.len(), 128 * 128 * 4);
    assert!(overlay.chunks_exact(4).any(|px| px[..3] == [230, 30, 30]));
}
