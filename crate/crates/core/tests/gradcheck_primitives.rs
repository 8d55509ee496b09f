use camconv_core::autodiff::check::{check_gradients, GradCheckOptions};
use camconv_core::autodiff::conv::reference_conv2d;
use camconv_core::autodiff::{Graph, NodeId, Padding};
use camconv_core::grid::Grid;
use camconv_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;

/// Uniform values with magnitude at least `1e-3`, away from kinks at zero.
fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize, lo: f64, hi: f64) -> Grid<f64> {
    Grid::from_fn(h, w, c, |_, _, _| loop {
        let v = rng.gen_range(lo..hi);
        if v.abs() >= 1e-3 {
            break v;
        }
    })
}

/// Sum of `node * probe` so every output element carries a distinct upstream gradient.
fn weighted_sum(g: &mut Graph<f64>, node: NodeId, seed: u64) -> Result<NodeId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w, c) = g.value(node).shape();
    let probe = g.constant(random_grid(&mut rng, h, w, c, -1.0, 1.0));
    let m = g.mul(node, probe)?;
    g.sum_all(m)
}

fn assert_unary(name: &str, lo: f64, hi: f64, op: fn(&mut Graph<f64>, NodeId) -> Result<NodeId>) {
    let mut rng = ChaCha8Rng::seed_from_u64(name.len() as u64);
    let x = random_grid(&mut rng, 4, 4, 1, lo, hi);
    let r = check_gradients(
        &[("x".into(), x)],
        |g, ids| {
            let y = op(g, ids[0])?;
            weighted_sum(g, y, 1)
        },
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(r.passes(TOL), "{name}: {r:?}");
}

#[test]
fn unary_primitives() {
    assert_unary("relu", -2.0, 2.0, |g, x| g.relu(x));
    assert_unary("sigmoid", -4.0, 4.0, |g, x| g.sigmoid(x));
    assert_unary("softplus", -4.0, 4.0, |g, x| g.softplus(x));
    assert_unary("exp", -2.0, 2.0, |g, x| g.exp(x));
    assert_unary("log", 0.1, 3.0, |g, x| g.log(x));
    assert_unary("abs", -2.0, 2.0, |g, x| g.abs(x));
    assert_unary("square", -2.0, 2.0, |g, x| g.square(x));
    assert_unary("sqrt", 0.1, 3.0, |g, x| g.sqrt(x));
    assert_unary("mul_scalar", -2.0, 2.0, |g, x| g.mul_scalar(x, -1.7));
    assert_unary("add_scalar", -2.0, 2.0, |g, x| g.add_scalar(x, 0.3));
    assert_unary("sum_all", -2.0, 2.0, |g, x| g.sum_all(x));
    assert_unary("upsample_x2", -2.0, 2.0, |g, x| g.upsample_bilinear_x2(x));
    assert_unary("upsample_odd", -2.0, 2.0, |g, x| g.upsample_bilinear(x, 7, 5));
    assert_unary("downsample", -2.0, 2.0, |g, x| g.upsample_bilinear(x, 3, 2));
}

#[test]
fn binary_primitives() {
    type Bin = fn(&mut Graph<f64>, NodeId, NodeId) -> Result<NodeId>;
    let ops: [(&str, Bin); 4] = [
        ("add", |g, a, b| g.add(a, b)),
        ("sub", |g, a, b| g.sub(a, b)),
        ("mul", |g, a, b| g.mul(a, b)),
        ("concat", |g, a, b| g.concat_channels(&[a, b])),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (name, op) in ops {
        let a = random_grid(&mut rng, 4, 4, 2, -2.0, 2.0);
        let b = random_grid(&mut rng, 4, 4, 2, -2.0, 2.0);
        let r = check_gradients(
            &[("a".into(), a), ("b".into(), b)],
            |g, ids| {
                let y = op(g, ids[0], ids[1])?;
                weighted_sum(g, y, 2)
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(r.passes(TOL), "{name}: {r:?}");
    }
}

#[test]
fn normalize_channels_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_grid(&mut rng, 4, 4, 3, -2.0, 2.0);
    let r = check_gradients(
        &[("x".into(), x)],
        |g, ids| {
            let y = g.normalize_channels(ids[0], 1e-8)?;
            weighted_sum(g, y, 5)
        },
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(r.passes(TOL), "{r:?}");
}

#[test]
fn conv2d_gradient_all_geometries() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for stride in [1, 2] {
        for padding in [Padding::Same, Padding::Valid] {
            let x = random_grid(&mut rng, 5, 6, 2, -1.0, 1.0);
            let k = random_grid(&mut rng, 3, 3, 2 * 3, -1.0, 1.0);
            let b = random_grid(&mut rng, 1, 1, 3, -1.0, 1.0);
            let r = check_gradients(
                &[("x".into(), x), ("kernel".into(), k), ("bias".into(), b)],
                |g, ids| {
                    let y = g.conv2d(ids[0], ids[1], Some(ids[2]), stride, padding)?;
                    weighted_sum(g, y, 6)
                },
                &GradCheckOptions::default(),
            )
            .unwrap();
            assert!(r.passes(TOL), "stride {stride} {padding:?}: {r:?}");
        }
    }
}

#[test]
fn conv2d_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (stride, padding) in [(1, Padding::Same), (2, Padding::Same), (1, Padding::Valid), (2, Padding::Valid)] {
        let x = random_grid(&mut rng, 5, 5, 3, -1.0, 1.0);
        let k = random_grid(&mut rng, 3, 3, 3 * 4, -1.0, 1.0);
        let bias = [0.1, -0.2, 0.3, 0.0];
        let expect = reference_conv2d(&x, &k, Some(&bias), stride, padding).unwrap();
        let mut g = Graph::new();
        let xn = g.constant(x);
        let kn = g.constant(k);
        let bn = g.constant(Grid::from_vec(1, 1, 4, bias.to_vec()).unwrap());
        let y = g.conv2d(xn, kn, Some(bn), stride, padding).unwrap();
        assert_eq!(g.value(y).shape(), expect.shape());
        for (a, b) in g.value(y).data().iter().zip(expect.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn backward_is_linear_in_the_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random_grid(&mut rng, 4, 4, 1, -2.0, 2.0);
    let grad_of = |which: u8| {
        let mut g = Graph::new();
        let xn = g.param(x.clone());
        let e = g.exp(xn).unwrap();
        let a = g.sum_all(e).unwrap();
        let s = g.square(xn).unwrap();
        let b = g.sum_all(s).unwrap();
        let root = match which {
            0 => a,
            1 => b,
            _ => g.add(a, b).unwrap(),
        };
        g.backward(root).unwrap();
        g.grad(xn).unwrap().clone()
    };
    let (ga, gb, gab) = (grad_of(0), grad_of(1), grad_of(2));
    for i in 0..ga.len() {
        assert!((ga.data()[i] + gb.data()[i] - gab.data()[i]).abs() < 1e-12);
    }
}

#[test]
fn identical_inputs_give_identical_bits() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut g: Graph<f32> = Graph::new();
        let x = g.constant(random_grid(&mut rng, 8, 8, 3, -1.0, 1.0).cast());
        let k = g.param(random_grid(&mut rng, 3, 3, 12, -1.0, 1.0).cast());
        let y = g.conv2d(x, k, None, 2, Padding::Same).unwrap();
        let r = g.relu(y).unwrap();
        let s = g.sum_all(r).unwrap();
        g.backward(s).unwrap();
        let mut bits: Vec<u32> = g.value(s).data().iter().map(|v| v.to_bits()).collect();
        bits.extend(g.grad(k).unwrap().data().iter().map(|v| v.to_bits()));
        bits
    };
    assert_eq!(run(), run());
}
