//! End-to-end properties of the enhancement model.

mod common;

use cdunet::autodiff::{Tape, Tensor};
use cdunet::model::{
    apply_mask, init_weights, mask_network, variant_features, Cdunet, EnhancementRequest, MaskSource, ModelConfig,
    ModelVariant, Params,
};
use cdunet::room::speech::speech_pool;
use cdunet::room::{build_dataset, DatasetKind, MIC_SPACING};
use cdunet::signal::{istft, stft, MultiChannelWaveform, Waveform};
use cdunet::train::{batch_gradients, eval_sweep, train, Crop, SweepConfig, SweepKind, TrainConfig};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn net(variant: ModelVariant, seed: u64) -> Cdunet {
    let cfg = ModelConfig::for_variant(variant);
    let w = init_weights(&cfg, seed).unwrap();
    Cdunet::new(cfg, w).unwrap()
}

#[test]
fn lookahead_never_exceeds_one_window() {
    // Overlap-add output at sample n mixes frames whose windows reach at most
    // N - 1 samples past n; the network itself must add nothing on top.
    let cfg = ModelConfig::default();
    let bound = cfg.window_size - 1;
    let n = net(ModelVariant::Cdunet, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for k in 0..4 {
        let mix = stereo_noise(100 + k, 8000);
        let t = rng.gen_range(2000..7000);
        let angle = rng.gen_range(0.0..=180.0);
        let look = observed_lookahead(&n, &mix, angle, 7.0, t, k);
        assert!(look <= bound, "lookahead {look} > {bound}");
    }
}

#[test]
fn mask_is_frame_causal() {
    // Perturbing input frames from k on leaves earlier mask frames untouched.
    for variant in [ModelVariant::Cdunet, ModelVariant::UnetPlain] {
        let cfg = ModelConfig::for_variant(variant);
        let w = init_weights(&cfg, 9).unwrap();
        let (c, f, t) = (variant.input_channels(), cfg.n_freq(), 12);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x: Vec<f32> = (0..c * f * t).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for k in [1, 5, 11] {
            let mut y = x.clone();
            for (i, v) in y.iter_mut().enumerate() {
                if i % t >= k {
                    *v += rng.gen_range(-0.5..0.5);
                }
            }
            let run = |data: Vec<f32>| {
                let mut tape = Tape::<f32>::new();
                let p = Params::bind(&mut tape, &w, false);
                let input = tape.constant(Tensor::new(vec![1, c, f, t], data).unwrap());
                let m = mask_network(&mut tape, input, &p, &cfg).unwrap();
                tape.data(m).to_vec()
            };
            let (a, b) = (run(x.clone()), run(y));
            for (i, (p, q)) in a.iter().zip(&b).enumerate() {
                if i % t < k {
                    assert_eq!(p, q, "{variant}: frame {} moved after perturbing from {k}", i % t);
                }
            }
            assert!(a.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }
}

#[test]
fn mask_lands_on_the_near_microphone() {
    let n = net(ModelVariant::Cdunet, 2);
    let mix = stereo_noise(20, 6000);
    for (angle, near) in [(45.0, 0), (135.0, 1)] {
        let req = EnhancementRequest::new(mix.clone(), angle, 7.0).unwrap();
        let out = n.enhance(&req).unwrap();
        let (block, specs) = n.features(&req).unwrap();
        let mask = n.mask(&block).unwrap();
        let expect = istft(&apply_mask(&specs[near], &mask).unwrap()).unwrap();
        assert_eq!(out, expect);

        // With a fixed unit mask the far channel has no path to the output.
        let silence = Waveform::zeros(mix.len(), FS);
        let zero_far = if near == 0 {
            MultiChannelWaveform::stereo(mix.channel(0).clone(), silence.clone())
        } else {
            MultiChannelWaveform::stereo(silence.clone(), mix.channel(1).clone())
        }
        .unwrap();
        let zero_near = if near == 0 {
            MultiChannelWaveform::stereo(silence, mix.channel(1).clone())
        } else {
            MultiChannelWaveform::stereo(mix.channel(0).clone(), silence)
        }
        .unwrap();
        let unit = |m: MultiChannelWaveform| {
            n.enhance_with(&EnhancementRequest::new(m, angle, 7.0).unwrap(), MaskSource::Constant(1.0))
                .unwrap()
        };
        let base = unit(mix.clone());
        assert_eq!(unit(zero_far), base);
        assert_ne!(unit(zero_near), base);
    }
}

#[test]
fn width_moves_only_the_edge_beams() {
    let mix = stereo_noise(30, 4000);
    let cfg = ModelConfig::default().stft().unwrap();
    let x1 = stft(mix.channel(0), &cfg).unwrap();
    let x2 = stft(mix.channel(1), &cfg).unwrap();
    let a = variant_features(ModelVariant::Cdunet, [&x1, &x2], 70.0, 5.0, MIC_SPACING).unwrap();
    let b = variant_features(ModelVariant::Cdunet, [&x1, &x2], 70.0, 20.0, MIC_SPACING).unwrap();
    // Planes: magnitudes of mic 1, mic 2, lower, centre, upper, then phases.
    for same in [0, 1, 3, 5, 6, 8] {
        assert_eq!(a.plane(same), b.plane(same), "plane {same}");
    }
    for moved in [2, 4, 7, 9] {
        assert_ne!(a.plane(moved), b.plane(moved), "plane {moved}");
    }
}

fn small_dataset(count: usize, seed: u64) -> Vec<cdunet::room::MixtureExample> {
    build_dataset(DatasetKind::Fixed, count, seed, &speech_pool(seed ^ 1, 4, 1.0, FS)).unwrap()
}

#[test]
fn every_tensor_receives_gradient() {
    let examples = small_dataset(2, 70);
    for variant in ModelVariant::ALL {
        let cfg = TrainConfig {
            model: ModelConfig::for_variant(variant),
            ..TrainConfig::default()
        };
        let mut w = init_weights(&cfg.model, 3).unwrap();
        // Move off the symmetric initial point (zero biases, unit scales).
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let names: Vec<String> = w.iter().map(|(k, _)| k.clone()).collect();
        for name in &names {
            for v in w.get_mut(name).unwrap().data_mut() {
                *v += rng.gen_range(-0.05..0.05);
            }
        }
        let crops = [Crop { example: 0, start: 0, len: 8000 }, Crop { example: 1, start: 4000, len: 8000 }];
        let (loss, grads) = batch_gradients(&w, &examples, &crops, &cfg).unwrap();
        assert!(loss.is_finite());
        assert_eq!(grads.len(), w.len());
        for (name, g) in &grads {
            assert!(g.iter().all(|v| v.is_finite()), "{variant}: {name} has non-finite gradient");
            assert!(g.iter().any(|&v| v != 0.0), "{variant}: {name} gets no gradient");
        }
    }
}

#[test]
fn training_and_evaluation_are_reproducible() {
    let examples = small_dataset(3, 80);
    let heldout = small_dataset(2, 81);
    let cfg = TrainConfig {
        steps: 3,
        batch_size: 2,
        seed: 12,
        crop_seconds: 0.5,
        ..TrainConfig::default()
    };
    let a = train(&cfg, &examples, &heldout, None).unwrap();
    let b = train(&cfg, &examples, &heldout, None).unwrap();
    assert_eq!(a.weights.to_bytes().unwrap(), b.weights.to_bytes().unwrap());
    assert_eq!(a.log, b.log);
    assert_eq!(a.heldout_si_snri.map(f64::to_bits), b.heldout_si_snri.map(f64::to_bits));

    let other = train(&TrainConfig { seed: 13, ..cfg }, &examples, &heldout, None).unwrap();
    assert_ne!(a.weights.to_bytes().unwrap(), other.weights.to_bytes().unwrap());

    let n = Cdunet::new(ModelConfig::default(), a.weights).unwrap();
    let sweep = SweepConfig {
        scenes_per_cell: 1,
        snr_levels: vec![0.0],
        clip_seconds: 0.5,
        pool_size: 3,
        ..SweepConfig::default()
    };
    let t1 = eval_sweep(&n, MaskSource::Network, SweepKind::Target, &sweep).unwrap();
    let t2 = eval_sweep(&n, MaskSource::Network, SweepKind::Target, &sweep).unwrap();
    assert_eq!(t1.to_csv().unwrap(), t2.to_csv().unwrap());
}

#[test]
fn enhanced_output_keeps_the_input_length() {
    let n = net(ModelVariant::UnetBf, 1);
    for len in [1000, 4321, 16_000] {
        let out = n.enhance(&EnhancementRequest::new(stereo_noise(len as u64, len), 100.0, 7.0).unwrap()).unwrap();
        assert_eq!(out.len(), len);
        assert!(out.samples().iter().all(|v| v.is_finite()));
    }
}
