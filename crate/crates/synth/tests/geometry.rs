use camconv_core::CameraIntrinsics;
use camconv_synth::scene::catalog_item;
use camconv_synth::{camera_consistency_case, generate_scene, render, sample_pose, Pose};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn point_to_box_distance(min: [f64; 3], max: [f64; 3], p: [f64; 3]) -> f64 {
    // Distance to the boundary: outside uses the clamped offset, inside the nearest face.
    let mut outside = 0.0;
    let mut inside = f64::INFINITY;
    for k in 0..3 {
        let d = (min[k] - p[k]).max(p[k] - max[k]).max(0.0);
        outside += d * d;
        inside = inside.min((p[k] - min[k]).min(max[k] - p[k]));
    }
    if outside > 0.0 {
        outside.sqrt()
    } else {
        inside
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn backprojected_pixels_lie_on_a_surface(seed in 0u64..10_000, f in 12.0f64..40.0) {
        let scene = generate_scene(seed);
        let pose = sample_pose(&scene, &mut ChaCha8Rng::seed_from_u64(seed));
        let cam = CameraIntrinsics::centered(f, 32, 24).unwrap();
        let s = render(&scene, &cam, &pose).unwrap();
        for v in 0..24 {
            for u in 0..32 {
                if !s.depth.mask().get(v, u) {
                    continue;
                }
                let p = pose.to_world(cam.backproject(u as f64, v as f64, s.depth.values().get(v, u, 0)));
                let dist = scene
                    .objects
                    .iter()
                    .map(|o| point_to_box_distance(o.bounds.min, o.bounds.max, p))
                    .fold(point_to_box_distance(scene.room.min, scene.room.max, p), f64::min);
                prop_assert!(dist < 1e-6, "pixel ({u},{v}) is {dist} m off every surface");
            }
        }
    }

    #[test]
    fn scenes_are_deterministic_and_inside_the_room(seed in any::<u64>()) {
        let a = generate_scene(seed);
        prop_assert_eq!(&a, &generate_scene(seed));
        prop_assert!((4..=10).contains(&a.objects.len()));
        for k in 0..3 {
            prop_assert!((3.0..8.0).contains(&a.room.max[k]));
        }
        for o in &a.objects {
            for k in 0..3 {
                prop_assert!(o.bounds.min[k] >= a.room.min[k] && o.bounds.max[k] <= a.room.max[k]);
            }
            let item = catalog_item(&o.kind).unwrap();
            let mut size = o.bounds.size();
            let mut want = item.size;
            size[..2].sort_by(f64::total_cmp);
            want[..2].sort_by(f64::total_cmp);
            for k in 0..3 {
                prop_assert!((size[k] - want[k]).abs() < 1e-12);
            }
        }
        prop_assert!(a.is_free(a.center()));
    }
}

#[test]
fn different_seeds_give_different_scenes() {
    let a = generate_scene(0);
    let b = generate_scene(1);
    assert!(a.objects.len() != b.objects.len() || a.objects[0].bounds != b.objects[0].bounds);
}

#[test]
fn chair_has_catalog_extents() {
    let chair = catalog_item("chair").unwrap();
    assert_eq!(chair.size, [0.5, 0.5, 1.0]);
}

#[test]
fn doubling_focal_shrinks_the_visible_set() {
    let scene = generate_scene(11);
    let c = scene.center();
    let pose = Pose::from_angles([c[0], c[1], 1.5], 0.7, -0.1, 0.0);
    let wide = CameraIntrinsics::centered(20.0, 40, 30).unwrap();
    let narrow = CameraIntrinsics::centered(40.0, 40, 30).unwrap();
    assert!(narrow.horizontal_fov() < wide.horizontal_fov());
    let a = render(&scene, &wide, &pose).unwrap();
    let b = render(&scene, &narrow, &pose).unwrap();
    // Every narrow-view ray falls strictly inside the wide view's image.
    let mut inside = 0;
    for v in 0..30 {
        for u in 0..40 {
            let p = narrow.backproject(u as f64, v as f64, b.depth.values().get(v, u, 0));
            let (i, j) = wide.project(p);
            assert!(i > 0.0 && i < 39.0 && j > 0.0 && j < 29.0);
            inside += 1;
        }
    }
    assert_eq!(inside, 1200);
    assert!(a.depth.mask().count() > 0);
}

#[test]
fn crop_and_resize_cameras_agree_with_rerendering() {
    for seed in 0..20 {
        let out = camera_consistency_case(seed, 64, 48).unwrap();
        assert!(out.compared_points > 0);
        assert!(out.max_point_error <= 1e-6, "{out:?}");
        assert!(out.rel_errors.p95 <= 0.02, "{out:?}");
    }
}
