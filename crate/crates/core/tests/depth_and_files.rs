use camconv_core::camera::CameraIntrinsics;
use camconv_core::depth::{confidence_target, normals_from_depth, to_depth, to_inverse, DepthMap, Mask};
use camconv_core::grid::Grid;
use camconv_core::pnm;
use proptest::prelude::*;

fn cam(w: usize, h: usize) -> CameraIntrinsics {
    CameraIntrinsics::new(30.0, w as f64 / 2.0, h as f64 / 2.0, w, h).unwrap()
}

#[test]
fn tilted_plane_normals_match_analytic_normal() {
    // Plane z = 2 + 0.1 X: along the ray (u, v, 1) the depth is 2 / (1 - 0.1 u).
    let c = cam(20, 16);
    let values = Grid::from_fn(16, 20, 1, |j, i, _| {
        let u = (i as f64 - c.cx()) / c.f();
        let _ = j;
        2.0 / (1.0 - 0.1 * u)
    });
    let d = DepthMap::new(values, Mask::all_valid(16, 20), c).unwrap();
    let n = normals_from_depth(&d).unwrap();
    let len = (0.01f64 + 1.0).sqrt();
    let expect = [0.1 / len, 0.0, -1.0 / len];
    for j in 1..15 {
        for i in 1..19 {
            assert!(n.mask().get(j, i));
            let v = n.normal(j, i);
            for k in 0..3 {
                assert!((v[k] - expect[k]).abs() < 1e-3, "({j},{i}) {v:?}");
            }
        }
    }
}

#[test]
fn confidence_target_matches_elementwise_oracle() {
    let a = Grid::from_fn(5, 5, 1, |y, x, _| 0.1 * (y * 5 + x) as f64);
    let b = Grid::from_fn(5, 5, 1, |y, x, _| 0.07 * (x * 5 + y) as f64);
    let c = confidence_target(&a, &b).unwrap();
    for i in 0..25 {
        assert!((c.data()[i] - (-(a.data()[i] - b.data()[i]).abs()).exp()).abs() < 1e-15);
    }
}

#[test]
fn files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let depth = Grid::from_fn(6, 8, 1, |y, x, _| 1.0 + (y * 8 + x) as f32 / 7.0);
    let rgb = Grid::from_fn(6, 8, 3, |y, x, c| ((y + x + c) % 4) as f32 / 3.0);
    let mask = Mask::from_fn(6, 8, |y, x| (y * x) % 3 != 1);
    pnm::save_pfm(dir.path().join("d.pfm"), &depth).unwrap();
    pnm::save_ppm(dir.path().join("c.ppm"), &rgb).unwrap();
    pnm::save_mask_pgm(dir.path().join("m.pgm"), &mask).unwrap();
    assert_eq!(pnm::load_pfm(dir.path().join("d.pfm")).unwrap(), depth);
    let back = pnm::load_ppm(dir.path().join("c.ppm")).unwrap();
    for (a, b) in back.data().iter().zip(rgb.data()) {
        assert!((a - b).abs() <= 0.5 / 255.0 + 1e-7);
    }
    assert_eq!(pnm::load_mask_pgm(dir.path().join("m.pgm")).unwrap(), mask);
}

proptest! {
    #[test]
    fn inverse_round_trip_within_one_ulp(vals in prop::collection::vec(0.1..100.0f64, 12)) {
        let d = DepthMap::new(Grid::from_vec(3, 4, 1, vals.clone()).unwrap(), Mask::all_valid(3, 4), cam(4, 3)).unwrap();
        let back = to_depth(&to_inverse(&d)).unwrap();
        for (a, b) in vals.iter().zip(back.values().data()) {
            prop_assert!(a.to_bits().abs_diff(b.to_bits()) <= 1);
        }
    }

    #[test]
    fn confidence_is_in_unit_interval_and_monotone(x in -5.0..5.0f64, d1 in 0.0..3.0f64, d2 in 0.0..3.0f64) {
        let p = Grid::from_vec(1, 2, 1, vec![x + d1, x + d2]).unwrap();
        let t = Grid::filled(1, 2, 1, x);
        let c = confidence_target(&p, &t).unwrap();
        let (c1, c2) = (c.data()[0], c.data()[1]);
        prop_assert!(c1 > 0.0 && c1 <= 1.0 && c2 > 0.0 && c2 <= 1.0);
        if d1 < d2 {
            prop_assert!(c1 >= c2);
        }
    }

    #[test]
    fn normals_are_unit_and_camera_facing(a in -0.3..0.3f64, b in -0.3..0.3f64, z0 in 1.0..10.0f64) {
        let c = cam(12, 10);
        let values = Grid::from_fn(10, 12, 1, |j, i, _| {
            let u = (i as f64 - c.cx()) / c.f();
            let v = (j as f64 - c.cy()) / c.f();
            z0 / (1.0 - a * u - b * v)
        });
        let d = DepthMap::new(values, Mask::all_valid(10, 12), c).unwrap();
        let n = normals_from_depth(&d).unwrap();
        for j in 0..10 {
            for i in 0..12 {
                if n.mask().get(j, i) {
                    let v = n.normal(j, i);
                    let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                    prop_assert!((len - 1.0).abs() < 1e-6);
                    prop_assert!(v[2] < 0.0);
                }
            }
        }
    }
}
