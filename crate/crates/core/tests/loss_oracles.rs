use camconv_core::autodiff::check::{check_gradients, GradCheckOptions};
use camconv_core::depth::Mask;
use camconv_core::grid::Grid;
use camconv_core::losses::{self, graph};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn positive(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Grid<f64> {
    Grid::from_fn(h, w, c, |_, _, _| rng.gen_range(0.2..3.0))
}

fn sparse_mask(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Mask {
    Mask::from_fn(h, w, |_, _| rng.gen_bool(0.85))
}

/// Direct double-loop oracle for the multi-spacing gradient loss.
fn gradient_loss_oracle(p: &Grid<f64>, t: &Grid<f64>, m: &Mask) -> f64 {
    let g = |d: &Grid<f64>, y0: usize, x0: usize, y1: usize, x1: usize| {
        let a = d.get(y0, x0, 0);
        let b = d.get(y1, x1, 0);
        (b - a) / (a + b).abs().max(1e-6)
    };
    let mut total = 0.0;
    for h in [1, 2, 4, 8, 16] {
        for y in 0..p.height() {
            for x in 0..p.width() {
                if !m.get(y, x) {
                    continue;
                }
                let mut sum = 0.0;
                let mut any = false;
                if x + h < p.width() && m.get(y, x + h) {
                    let d = g(p, y, x, y, x + h) - g(t, y, x, y, x + h);
                    sum += d * d;
                    any = true;
                }
                if y + h < p.height() && m.get(y + h, x) {
                    let d = g(p, y, x, y + h, x) - g(t, y, x, y + h, x);
                    sum += d * d;
                    any = true;
                }
                if any {
                    total += sum.sqrt();
                }
            }
        }
    }
    total
}

#[test]
fn elementwise_losses_match_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m = sparse_mask(&mut rng, 8, 8);
    let p = positive(&mut rng, 8, 8, 1);
    let t = positive(&mut rng, 8, 8, 1);
    let mut l1 = 0.0;
    for y in 0..8 {
        for x in 0..8 {
            if m.get(y, x) {
                l1 += (p.get(y, x, 0) - t.get(y, x, 0)).abs();
            }
        }
    }
    assert!((losses::depth_loss(&p, &t, &m).unwrap() - l1).abs() < 1e-12);
    assert!((losses::confidence_loss(&p, &t, &m).unwrap() - l1).abs() < 1e-12);

    let n1 = positive(&mut rng, 8, 8, 3);
    let n2 = positive(&mut rng, 8, 8, 3);
    let mut l2 = 0.0;
    for y in 0..8 {
        for x in 0..8 {
            if m.get(y, x) {
                let s: f64 = (0..3).map(|c| (n1.get(y, x, c) - n2.get(y, x, c)).powi(2)).sum();
                l2 += s.sqrt();
            }
        }
    }
    assert!((losses::normal_loss(&n1, &n2, &m).unwrap() - l2).abs() < 1e-12);
}

#[test]
fn gradient_loss_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let m = sparse_mask(&mut rng, 20, 20);
    let p = positive(&mut rng, 20, 20, 1);
    let t = positive(&mut rng, 20, 20, 1);
    let got = losses::gradient_loss(&p, &t, &m).unwrap();
    let want = gradient_loss_oracle(&p, &t, &m);
    assert!((got - want).abs() < 1e-9 * want.max(1.0), "{got} vs {want}");
}

#[test]
fn eigen_loss_matches_two_pass_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let m = sparse_mask(&mut rng, 9, 7);
    let p = positive(&mut rng, 9, 7, 1);
    let t = positive(&mut rng, 9, 7, 1);
    let z: Vec<f64> = (0..63)
        .filter(|&i| m.bits()[i])
        .map(|i| p.data()[i].ln() - t.data()[i].ln())
        .collect();
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let got = losses::eigen_scale_invariant_loss(&p, &t, &m).unwrap();
    assert!((got - var).abs() < 1e-12);
}

#[test]
fn gradient_loss_is_scale_invariant_to_1e9() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..10 {
        let m = sparse_mask(&mut rng, 24, 32);
        let xi = positive(&mut rng, 24, 32, 1);
        for k in [0.5, 2.0, 10.0] {
            let scaled = xi.map(|v| k * v);
            let l = losses::gradient_loss(&xi, &scaled, &m).unwrap();
            assert!(l.abs() < 1e-9, "k = {k}: {l}");
            let e = losses::eigen_scale_invariant_loss(&scaled, &xi, &m).unwrap();
            assert!(e.abs() < 1e-9, "k = {k}: {e}");
        }
    }
}

#[test]
fn loss_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let m = sparse_mask(&mut rng, 10, 10);
    let target = positive(&mut rng, 10, 10, 1);
    // Keep |p - t| away from the L1 kink.
    let pred = Grid::from_fn(10, 10, 1, |y, x, _| {
        let t = target.get(y, x, 0);
        t + if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * rng.gen_range(0.01..0.15)
    });
    let n_pred = positive(&mut rng, 10, 10, 3);
    let n_tgt = positive(&mut rng, 10, 10, 3);
    let opts = GradCheckOptions::default();
    let inputs = vec![("pred".to_string(), pred)];

    let depth = check_gradients(&inputs, |g, ids| graph::depth_loss(g, ids[0], &target, &m), &opts).unwrap();
    assert!(depth.passes(1e-4), "{depth:?}");
    let conf = check_gradients(&inputs, |g, ids| graph::confidence_loss(g, ids[0], &target, &m), &opts).unwrap();
    assert!(conf.passes(1e-4), "{conf:?}");
    let grad = check_gradients(&inputs, |g, ids| graph::gradient_loss(g, ids[0], &target, &m), &opts).unwrap();
    assert!(grad.passes(1e-4), "{grad:?}");
    let eig =
        check_gradients(&inputs, |g, ids| graph::eigen_scale_invariant_loss(g, ids[0], &target, &m), &opts)
            .unwrap();
    assert!(eig.passes(1e-4), "{eig:?}");
    let normal = check_gradients(
        &[("normals".to_string(), n_pred)],
        |g, ids| graph::normal_loss(g, ids[0], &n_tgt, &m),
        &opts,
    )
    .unwrap();
    assert!(normal.passes(1e-4), "{normal:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn losses_are_non_negative_and_zero_on_agreement(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = Mask::from_fn(6, 6, |y, x| (y + x) % 5 != 0);
        let p = positive(&mut rng, 6, 6, 1);
        let t = positive(&mut rng, 6, 6, 1);
        prop_assert!(losses::depth_loss(&p, &t, &m).unwrap() >= 0.0);
        prop_assert!(losses::gradient_loss(&p, &t, &m).unwrap() >= 0.0);
        prop_assert!(losses::eigen_scale_invariant_loss(&p, &t, &m).unwrap() >= 0.0);
        prop_assert_eq!(losses::depth_loss(&p, &p, &m).unwrap(), 0.0);
        prop_assert_eq!(losses::gradient_loss(&p, &p, &m).unwrap(), 0.0);
    }

    #[test]
    fn sig_operator_is_scale_invariant(seed in any::<u64>(), k in 0.01..100.0f64, h in prop::sample::select(vec![1usize, 2, 4, 8, 16])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = Mask::all_valid(20, 20);
        let d = positive(&mut rng, 20, 20, 1);
        let (a, _) = losses::sig_operator(&d, h, &m).unwrap();
        let (b, _) = losses::sig_operator(&d.map(|v| k * v), h, &m).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
