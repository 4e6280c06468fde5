//! Finite-difference audit of every differentiable piece, from single
//! primitives up to the full mask network at toy size.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::gradcheck::random_tensor;
use crate::autodiff::{gradcheck, ConvSpec, GradcheckReport, Reduce, Tensor, TimeCrop, Var};
use crate::loss::{combined_loss_graph, LossConfig, LossTarget};
use crate::model::{
    cbam_channel_gate, cbam_spatial_gate, dprnn_bottleneck, init_weights, mask_network, ModelConfig, ModelVariant,
    Params,
};
use crate::signal::StftConfig;
use crate::Result;

/// Pass mark for the audit.
pub const AUDIT_TOLERANCE: f64 = 1e-4;

/// Coordinates sampled per input tensor.
const COORDS: usize = 24;

/// A configuration small enough to differentiate numerically in full.
pub fn toy_config(variant: ModelVariant) -> ModelConfig {
    ModelConfig {
        variant,
        encoder_channels: [4, 8, 8],
        lstm_hidden: 6,
        freq_hidden: 3,
        cbam_reduction: 2,
        spatial_kernel: 3,
        window_size: 16,
        hop_size: 8,
        ..ModelConfig::default()
    }
}

/// Tensors of `cfg`'s weights whose names start with one of `prefixes`.
fn subset(cfg: &ModelConfig, seed: u64, prefixes: &[&str]) -> Result<(Vec<String>, Vec<Tensor<f64>>)> {
    let w = init_weights(cfg, seed)?;
    let mut names = Vec::new();
    let mut tensors = Vec::new();
    for (name, t) in w.iter() {
        if prefixes.iter().any(|p| name.starts_with(p)) {
            names.push(name.clone());
            tensors.push(t.cast::<f64>());
        }
    }
    // Zero-initialised biases and unit norm scales hide mistakes in their
    // own gradients, so perturb everything.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5);
    for t in tensors.iter_mut() {
        let noise = random_tensor(t.shape(), -0.3, 0.3, &mut rng);
        for (v, n) in t.data_mut().iter_mut().zip(noise.data()) {
            *v += n;
        }
    }
    Ok((names, tensors))
}

fn params_of(names: &[String], vars: &[Var]) -> Params {
    Params::from_vars(names.iter().cloned().zip(vars.iter().copied()).collect::<BTreeMap<_, _>>())
}

fn primitives(seed: u64, out: &mut Vec<GradcheckReport>) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_tensor(&[3, 4], -1.0, 1.0, &mut rng);
    let b = random_tensor(&[3, 4], 0.5, 1.5, &mut rng);
    let col = random_tensor(&[3, 1], -1.0, 1.0, &mut rng);
    let m = random_tensor(&[4, 5], -1.0, 1.0, &mut rng);
    let pos = random_tensor(&[3, 4], 0.3, 2.0, &mut rng);
    let ab = [a.clone(), b.clone()];
    let one = [a.clone()];
    let p1 = [pos];
    out.push(gradcheck("add", &ab, |t, v| t.add(v[0], v[1]), seed, COORDS)?);
    out.push(gradcheck("sub", &ab, |t, v| t.sub(v[0], v[1]), seed, COORDS)?);
    out.push(gradcheck("mul", &ab, |t, v| t.mul(v[0], v[1]), seed, COORDS)?);
    out.push(gradcheck("div", &ab, |t, v| t.div(v[0], v[1]), seed, COORDS)?);
    out.push(gradcheck("matmul", &[a.clone(), m], |t, v| t.matmul(v[0], v[1]), seed, COORDS)?);
    out.push(gradcheck("broadcast_add", &[a.clone(), col.clone()], |t, v| t.broadcast_add(v[0], v[1]), seed, COORDS)?);
    out.push(gradcheck("broadcast_mul", &[a.clone(), col], |t, v| t.broadcast_mul(v[0], v[1]), seed, COORDS)?);
    out.push(gradcheck("sigmoid", &one, |t, v| Ok(t.sigmoid(v[0])), seed, COORDS)?);
    out.push(gradcheck("tanh", &one, |t, v| Ok(t.tanh(v[0])), seed, COORDS)?);
    out.push(gradcheck("relu", &p1, |t, v| Ok(t.relu(v[0])), seed, COORDS)?);
    out.push(gradcheck("exp", &one, |t, v| Ok(t.exp(v[0])), seed, COORDS)?);
    out.push(gradcheck("log", &p1, |t, v| Ok(t.log(v[0])), seed, COORDS)?);
    out.push(gradcheck("sqrt", &p1, |t, v| Ok(t.sqrt(v[0])), seed, COORDS)?);
    out.push(gradcheck("abs", &p1, |t, v| Ok(t.abs(v[0])), seed, COORDS)?);
    out.push(gradcheck("square", &one, |t, v| Ok(t.square(v[0])), seed, COORDS)?);
    out.push(gradcheck("mean", &one, |t, v| t.reduce(v[0], &[1], Reduce::Mean), seed, COORDS)?);
    out.push(gradcheck("max", &one, |t, v| t.reduce(v[0], &[0], Reduce::Max), seed, COORDS)?);
    out.push(gradcheck("concat", &ab, |t, v| t.concat(&[v[0], v[1]], 1), seed, COORDS)?);
    out.push(gradcheck(
        "split",
        &one,
        |t, v| {
            let p = t.split(v[0], 1, &[1, 3])?;
            let sq = t.square(p[1]);
            t.concat(&[sq, p[0]], 1)
        },
        seed,
        COORDS,
    )?);
    out.push(gradcheck("pad", &one, |t, v| t.pad(v[0], 1, 2, 1), seed, COORDS)?);
    out.push(gradcheck("crop", &one, |t, v| t.slice(v[0], 1, 1, 2), seed, COORDS)?);
    out.push(gradcheck("permute", &one, |t, v| t.permute(v[0], &[1, 0]), seed, COORDS)?);
    Ok(())
}

fn layers(seed: u64, out: &mut Vec<GradcheckReport>) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let spec = ConvSpec::new(2, 2);
    let conv_in = [
        random_tensor(&[2, 3, 8, 8], -1.0, 1.0, &mut rng),
        random_tensor(&[4, 3, 5, 3], -0.5, 0.5, &mut rng),
        random_tensor(&[4], -0.5, 0.5, &mut rng),
    ];
    out.push(gradcheck("conv2d", &conv_in, |t, v| t.conv2d(v[0], v[1], v[2], spec), seed, COORDS)?);
    let convt_in = [
        random_tensor(&[2, 3, 4, 6], -1.0, 1.0, &mut rng),
        random_tensor(&[3, 2, 5, 2], -0.5, 0.5, &mut rng),
        random_tensor(&[2], -0.5, 0.5, &mut rng),
    ];
    out.push(gradcheck(
        "conv_transpose2d",
        &convt_in,
        |t, v| t.conv_transpose2d(v[0], v[1], v[2], spec, TimeCrop::Causal),
        seed,
        COORDS,
    )?);
    let lstm_in = [
        random_tensor(&[4, 2, 3], -1.0, 1.0, &mut rng),
        random_tensor(&[20, 3], -0.5, 0.5, &mut rng),
        random_tensor(&[20, 5], -0.5, 0.5, &mut rng),
        random_tensor(&[20], -0.5, 0.5, &mut rng),
    ];
    out.push(gradcheck("lstm", &lstm_in, |t, v| t.lstm(v[0], v[1], v[2], v[3], false), seed, COORDS)?);
    let ln_in = [
        random_tensor(&[2, 3, 4, 5], -1.0, 1.0, &mut rng),
        random_tensor(&[3], 0.5, 1.5, &mut rng),
        random_tensor(&[3], -0.5, 0.5, &mut rng),
    ];
    out.push(gradcheck(
        "layer_norm",
        &ln_in,
        |t, v| t.layer_norm(v[0], v[1], v[2], &[1, 2], 1, 1e-5),
        seed,
        COORDS,
    )?);
    let stft_cfg = StftConfig::hann(16, 8)?;
    let sig = [random_tensor(&[48], -1.0, 1.0, &mut rng)];
    out.push(gradcheck(
        "stft_istft",
        &sig,
        |t, v| {
            let s = t.stft(v[0], &stft_cfg)?;
            let s2 = t.square(s);
            t.istft(s2, &stft_cfg, 48)
        },
        seed,
        COORDS,
    )?);

    let cfg = toy_config(ModelVariant::Cdunet);
    let (names, mut ins) = subset(&cfg, seed, &["skip3.cbam"])?;
    let n = ins.len();
    ins.push(random_tensor(&[2, 8, 5, 4], -1.0, 1.0, &mut rng));
    out.push(gradcheck(
        "cbam_channel_gate",
        &ins,
        |t, v| {
            let p = params_of(&names, &v[..n]);
            cbam_channel_gate(t, v[n], &p, "skip3.cbam")
        },
        seed,
        COORDS,
    )?);
    out.push(gradcheck(
        "cbam_spatial_gate",
        &ins,
        |t, v| {
            let p = params_of(&names, &v[..n]);
            cbam_spatial_gate(t, v[n], &p, "skip3.cbam", &cfg)
        },
        seed,
        COORDS,
    )?);

    let (names, mut ins) = subset(&cfg, seed, &["bottleneck"])?;
    let n = ins.len();
    ins.push(random_tensor(&[1, 8, 3, 4], -1.0, 1.0, &mut rng));
    out.push(gradcheck(
        "dprnn_bottleneck",
        &ins,
        |t, v| {
            let p = params_of(&names, &v[..n]);
            dprnn_bottleneck(t, v[n], &p, &cfg)
        },
        seed,
        COORDS,
    )?);

    let (names, mut ins) = subset(&cfg, seed, &[""])?;
    let n = ins.len();
    ins.push(random_tensor(&[1, 10, cfg.n_freq(), 3], -1.0, 1.0, &mut rng));
    out.push(gradcheck(
        "mask_network",
        &ins,
        |t, v| {
            let p = params_of(&names, &v[..n]);
            mask_network(t, v[n], &p, &cfg)
        },
        seed,
        4,
    )?);

    let len = 1024;
    let reference = random_tensor(&[len], -1.0, 1.0, &mut rng);
    let est = random_tensor(&[len], -1.0, 1.0, &mut rng);
    let target = LossTarget::<f64>::new(reference.data(), &LossConfig::default())?;
    out.push(gradcheck(
        "combined_loss",
        &[est],
        |t, v| combined_loss_graph(t, &target, v[0]),
        seed,
        COORDS,
    )?);
    Ok(())
}

/// Runs the whole audit. Every report should be below [`AUDIT_TOLERANCE`].
pub fn audit_suite(seed: u64) -> Result<Vec<GradcheckReport>> {
    let mut out = Vec::new();
    primitives(seed, &mut out)?;
    layers(seed, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_config_is_consistent() {
        for v in ModelVariant::ALL {
            toy_config(v).validate().unwrap();
        }
    }

    #[test]
    fn suite_passes() {
        for r in audit_suite(1).unwrap() {
            assert!(r.passes(AUDIT_TOLERANCE), "{}: {}", r.name, r.max_rel_error);
        }
    }
}
