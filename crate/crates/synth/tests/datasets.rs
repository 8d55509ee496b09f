use std::fs;

use camconv_synth::{build_dataset, generate_samples, load_dataset, DatasetSpec, SynthError, MANIFEST_FILE};

fn spec(camera: &str, seeds: [u64; 2], scale: f64) -> DatasetSpec {
    DatasetSpec {
        name: "t".into(),
        camera: camera.into(),
        scene_seeds: seeds,
        views_per_scene: 2,
        resolution_scale: scale,
        seed: 5,
        augmentation: None,
    }
}

#[test]
fn single_preset_dataset_has_expected_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let m = build_dataset(&spec("s1·f72", [0, 10], 1.0), dir.path()).unwrap();
    assert_eq!(m.samples.len(), 20);
    for e in &m.samples {
        let text = fs::read_to_string(dir.path().join(&e.dir).join("cam.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["f"], 72.0);
        assert_eq!(v["w"], 256);
        assert_eq!(v["h"], 192);
    }
}

#[test]
fn uniform_focals_stay_in_range() {
    let samples = generate_samples(&spec("s1·U·f72·f128", [0, 8], 0.125)).unwrap();
    let fs: Vec<f64> = samples.iter().map(|s| s.cam().f() / 0.125).collect();
    assert!(fs.iter().all(|f| (72.0 - 1e-9..=128.0 + 1e-9).contains(f)), "{fs:?}");
    assert!(fs.windows(2).any(|w| w[0] != w[1]));
}

#[test]
fn rebuilding_is_bit_identical() {
    let s = spec("s1 s2 U f72 f128", [3, 5], 0.125);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    build_dataset(&s, a.path()).unwrap();
    build_dataset(&s, b.path()).unwrap();
    let m = camconv_synth::read_manifest(a.path()).unwrap();
    for e in &m.samples {
        for f in ["rgb.ppm", "depth.pfm", "mask.pgm", "cam.json"] {
            let x = fs::read(a.path().join(&e.dir).join(f)).unwrap();
            let y = fs::read(b.path().join(&e.dir).join(f)).unwrap();
            assert_eq!(x, y, "{} {f}", e.dir);
        }
    }
    assert_eq!(fs::read(a.path().join(MANIFEST_FILE)).unwrap(), fs::read(b.path().join(MANIFEST_FILE)).unwrap());
}

#[test]
fn load_round_trips_and_build_is_idempotent() {
    let s = spec("s2·f64", [0, 2], 0.125);
    let dir = tempfile::tempdir().unwrap();
    let m1 = build_dataset(&s, dir.path()).unwrap();
    let stamp = fs::metadata(dir.path().join(MANIFEST_FILE)).unwrap().modified().unwrap();
    let m2 = build_dataset(&s, dir.path()).unwrap();
    assert_eq!(m1, m2);
    assert_eq!(fs::metadata(dir.path().join(MANIFEST_FILE)).unwrap().modified().unwrap(), stamp);

    let ds = load_dataset(dir.path()).unwrap();
    let mem = generate_samples(&s).unwrap();
    assert_eq!(ds.samples.len(), mem.len());
    for (a, b) in ds.samples.iter().zip(&mem) {
        assert_eq!(a.cam(), b.cam());
        assert_eq!(a.depth.mask(), b.depth.mask());
        for (x, y) in a.depth.values().data().iter().zip(b.depth.values().data()) {
            assert_eq!(*x, *y as f32 as f64);
        }
        for (x, y) in a.rgb.data().iter().zip(b.rgb.data()) {
            assert!((x - y).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }
    assert_eq!(ds.sensor_sizes(), vec![(24, 32)]);
}

#[test]
fn concurrent_build_is_refused_while_locked() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join(".lock"), "1").unwrap();
    let r = build_dataset(&spec("s1·f72", [0, 1], 0.125), dir.path());
    assert!(matches!(r, Err(SynthError::Locked(_))));
}

#[test]
fn changed_spec_rebuilds() {
    let dir = tempfile::tempdir().unwrap();
    build_dataset(&spec("s1·f72", [0, 2], 0.125), dir.path()).unwrap();
    let m = build_dataset(&spec("s1·f128", [0, 1], 0.125), dir.path()).unwrap();
    assert_eq!(m.samples.len(), 2);
    assert_eq!(m.samples[0].cam.f, 16.0);
}
