mod common;

use camconv_core::losses::LossWeights;
use camconv_net::{build, ModelParams, check_network_gradients, network_check_options, summarize, train_item, train_on_samples, NetConfig, TrainConfig};

const TOLERANCE: f64 = 1e-4;

fn tiny(cam: bool, norm: bool) -> NetConfig {
    NetConfig {
        levels: 2,
        base_channels: 4,
        use_camconvs: cam,
        use_focal_norm: norm,
        f_n: 6.0,
        seed: 11,
        ..Default::default()
    }
}

/// Moves every bias off zero so no unit sits exactly on a ReLU kink.
fn jitter_biases(params: &mut ModelParams) {
    let names: Vec<bool> = params.tensors().iter().map(|(n, _)| n.ends_with(".b")).collect();
    let mut k = 0u32;
    for (t, is_bias) in params.tensors_mut().zip(names) {
        if is_bias {
            for v in t.data_mut() {
                k += 1;
                *v += 0.05 + 0.01 * (k % 7) as f32;
            }
        }
    }
}

/// s3 at 16x16.
fn item_samples() -> Vec<camconv_synth::Sample> {
    common::samples("s3·f64", [4, 6], 1, 1.0 / 14.0)
}

#[test]
fn full_network_gradients_at_initialization() {
    let samples = item_samples();
    for (cam, norm) in [(false, false), (true, true)] {
        let cfg = tiny(cam, norm);
        let mut params = build(&cfg).unwrap();
        jitter_biases(&mut params);
        let item = train_item(&cfg, &samples[0]).unwrap();
        let report =
            check_network_gradients(&params, &item, &LossWeights::default(), &network_check_options()).unwrap();
        let s = summarize(&report);
        assert!(s.max_rel_error < TOLERANCE, "cam={cam} norm={norm}: {s:?}");
        assert!(s.skipped * 100 < s.checked, "{s:?}");
    }
}

#[test]
fn full_network_gradients_after_training_steps() {
    let samples = item_samples();
    let cfg = tiny(true, true);
    let train = TrainConfig {
        iterations: 10,
        batch_size: 2,
        ..Default::default()
    };
    let params = train_on_samples(&train, &cfg, &samples).unwrap().params;
    let item = train_item(&cfg, &samples[1]).unwrap();
    let report = check_network_gradients(&params, &item, &LossWeights::default(), &network_check_options()).unwrap();
    let s = summarize(&report);
    assert!(s.max_rel_error < TOLERANCE, "{s:?}");
    assert!(s.skipped * 100 < s.checked, "{s:?}");
}
