//! The causal U-Net mask estimator.
//!
//! Three strided encoder convolutions feed a dual-path recurrent bottleneck
//! (frequency, then time). The decoder upsamples with transposed
//! convolutions; every skip tensor and every intermediate decoder output
//! passes through channel and spatial attention gates before being
//! concatenated. A sigmoid mask is applied to the STFT of the microphone
//! nearer the target.

mod config;
pub mod layers;
mod network;
mod weights;

pub use config::{ModelConfig, ModelVariant};
pub use layers::{
    cbam, cbam_channel_gate, cbam_spatial_gate, check_finite, decoder_block, dprnn_bottleneck, encoder_block,
    mask_network, Params,
};
pub use network::{
    apply_mask, forward, network_input, variant_features, Cdunet, EnhancementRequest, MaskSource,
    DEFAULT_WIDTH_DEG, MAGNITUDE_FLOOR,
};
pub use weights::{
    init_weights, load_weights, param_count, save_weights, CdunetWeights, WEIGHTS_MAGIC, WEIGHTS_VERSION,
};

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::autodiff::{Tape, Tensor, Var};

    fn leaf(tape: &mut Tape<f64>, shape: &[usize], rng: &mut ChaCha8Rng, scale: f64) -> Var {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
        tape.constant(Tensor::new(shape.to_vec(), data).unwrap())
    }

    fn cbam_params(tape: &mut Tape<f64>, c: usize, r: usize, zero: bool, rng: &mut ChaCha8Rng) -> Params {
        let s = if zero { 0.0 } else { 0.5 };
        let mut mk = |shape: &[usize]| {
            if zero {
                tape.constant(Tensor::zeros(shape))
            } else {
                leaf(tape, shape, rng, s)
            }
        };
        let mut m = BTreeMap::new();
        m.insert("g.w1.weight".to_string(), mk(&[c / r, c]));
        m.insert("g.w1.bias".to_string(), mk(&[c / r]));
        m.insert("g.w2.weight".to_string(), mk(&[c, c / r]));
        m.insert("g.w2.bias".to_string(), mk(&[c]));
        m.insert("g.spatial.weight".to_string(), mk(&[1, 2, 7, 7]));
        m.insert("g.spatial.bias".to_string(), mk(&[1]));
        Params::from_vars(m)
    }

    #[test]
    fn zero_gates_are_one_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tape = Tape::new();
        let p = cbam_params(&mut tape, 8, 4, true, &mut rng);
        let y = leaf(&mut tape, &[2, 8, 6, 5], &mut rng, 1.0);
        let g = cbam_channel_gate(&mut tape, y, &p, "g").unwrap();
        assert_eq!(tape.shape(g), &[2, 8, 1, 5]);
        assert!(tape.data(g).iter().all(|&v| v == 0.5));
        let zero = tape.constant(Tensor::zeros(&[2, 8, 6, 5]));
        let cfg = ModelConfig::default();
        let s = cbam_spatial_gate(&mut tape, zero, &p, "g", &cfg).unwrap();
        assert_eq!(tape.shape(s), &[2, 1, 6, 5]);
        assert!(tape.data(s).iter().all(|&v| v == 0.5));
    }

    #[test]
    fn constant_channels_pool_equally() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut tape = Tape::new();
        let p = cbam_params(&mut tape, 4, 2, false, &mut rng);
        let levels = [0.3, -1.2, 2.0, 0.7];
        let data: Vec<f64> = levels.iter().flat_map(|&v| std::iter::repeat(v).take(3 * 2)).collect();
        let y = tape.constant(Tensor::new(vec![1, 4, 3, 2], data).unwrap());
        let g = cbam_channel_gate(&mut tape, y, &p, "g").unwrap();
        // σ(2 · W2 relu(W1 F + b1) + 2 b2) computed by hand.
        let get = |tape: &Tape<f64>, n: &str| tape.data(p.get(n).unwrap()).to_vec();
        let (w1, b1, w2, b2) = (get(&tape, "g.w1.weight"), get(&tape, "g.w1.bias"), get(&tape, "g.w2.weight"), get(&tape, "g.w2.bias"));
        let h: Vec<f64> = (0..2)
            .map(|j| ((0..4).map(|i| w1[j * 4 + i] * levels[i]).sum::<f64>() + b1[j]).max(0.0))
            .collect();
        for c in 0..4 {
            let z = (0..2).map(|j| w2[c * 2 + j] * h[j]).sum::<f64>() + b2[c];
            let want = 1.0 / (1.0 + (-2.0 * z).exp());
            for t in 0..2 {
                assert!((tape.data(g)[c * 2 + t] - want).abs() < 1e-12);
            }
        }
        assert!(tape.data(g).iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn single_channel_mean_equals_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tape = Tape::new();
        let y = leaf(&mut tape, &[1, 1, 5, 4], &mut rng, 1.0);
        let a = tape.reduce(y, &[1], crate::autodiff::Reduce::Mean).unwrap();
        let m = tape.reduce(y, &[1], crate::autodiff::Reduce::Max).unwrap();
        assert_eq!(tape.data(a), tape.data(m));
    }

    #[test]
    fn bottleneck_with_zero_projections_maps_zero_to_zero() {
        let cfg = ModelConfig::default();
        let mut w = init_weights(&cfg, 5).unwrap();
        for name in ["bottleneck.freq.proj.weight", "bottleneck.freq.proj.bias", "bottleneck.time.proj.weight", "bottleneck.time.proj.bias"] {
            w.get_mut(name).unwrap().data_mut().fill(0.0);
        }
        let mut tape = Tape::<f64>::new();
        let p = Params::bind(&mut tape, &w, false);
        let x = tape.constant(Tensor::zeros(&[1, 48, 33, 4]));
        let y = dprnn_bottleneck(&mut tape, x, &p, &cfg).unwrap();
        assert!(tape.data(y).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mask_network_shape_and_range() {
        let cfg = ModelConfig::for_variant(ModelVariant::UnetPlain);
        let w = init_weights(&cfg, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut tape = Tape::<f32>::new();
        let p = Params::bind(&mut tape, &w, false);
        let data = (0..2 * 4 * 257 * 3).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let x = tape.constant(Tensor::new(vec![2, 4, 257, 3], data).unwrap());
        let m = mask_network(&mut tape, x, &p, &cfg).unwrap();
        assert_eq!(tape.shape(m), &[2, 1, 257, 3]);
        assert!(tape.data(m).iter().all(|&v| v > 0.0 && v < 1.0));
        let bad = tape.constant(Tensor::zeros(&[1, 5, 257, 3]));
        assert!(mask_network(&mut tape, bad, &p, &cfg).is_err());
    }

    #[test]
    fn non_finite_input_names_the_layer() {
        let cfg = ModelConfig::for_variant(ModelVariant::UnetPlain);
        let w = init_weights(&cfg, 9).unwrap();
        let mut tape = Tape::<f32>::new();
        let p = Params::bind(&mut tape, &w, false);
        let mut t = Tensor::zeros(&[1, 4, 257, 2]);
        t.data_mut()[7] = f32::NAN;
        let x = tape.constant(t);
        let err = mask_network(&mut tape, x, &p, &cfg).unwrap_err();
        assert!(err.to_string().contains("enc1"), "{err}");
    }
}
