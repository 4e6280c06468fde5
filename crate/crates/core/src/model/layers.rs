//! Graph builders for the network blocks. All of them take `[B, C, F, T]`
//! activations and keep the time axis causal.

use std::collections::BTreeMap;

use super::{CdunetWeights, ModelConfig};
use crate::autodiff::{Real, Reduce, Tape, TimeCrop, Var};
use crate::{Error, Result};

/// Weights bound to a tape, looked up by layer name.
#[derive(Debug, Clone, Default)]
pub struct Params {
    vars: BTreeMap<String, Var>,
}

impl Params {
    /// Puts every tensor of `weights` on `tape`, as trainable leaves when
    /// `trainable` is set and as constants otherwise.
    pub fn bind<T: Real>(tape: &mut Tape<T>, weights: &CdunetWeights, trainable: bool) -> Self {
        let vars = weights
            .iter()
            .map(|(name, t)| {
                let v = t.cast::<T>();
                let var = if trainable { tape.param(v) } else { tape.constant(v) };
                (name.clone(), var)
            })
            .collect();
        Self { vars }
    }

    pub fn from_vars(vars: BTreeMap<String, Var>) -> Self {
        Self { vars }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Weights(format!("missing tensor `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}

/// Errors out if `v` holds NaN or infinity, naming `layer`.
pub fn check_finite<T: Real>(tape: &Tape<T>, v: Var, layer: &str) -> Result<Var> {
    if tape.value(v).all_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(layer.to_string()))
    }
}

fn dims4<T: Real>(tape: &Tape<T>, v: Var, what: &str) -> Result<[usize; 4]> {
    <[usize; 4]>::try_from(tape.shape(v))
        .map_err(|_| Error::Dimension(format!("{what} expects [B, C, F, T], got {:?}", tape.shape(v))))
}

/// Per-channel gate `σ(W2 relu(W1 avg) + W2 relu(W1 max))`, shape
/// `[B, C, 1, T]`. Pooling runs over frequency within each frame.
pub fn cbam_channel_gate<T: Real>(tape: &mut Tape<T>, y: Var, p: &Params, prefix: &str) -> Result<Var> {
    dims4(tape, y, "channel gate")?;
    let avg = tape.reduce(y, &[2], Reduce::Mean)?;
    let max = tape.reduce(y, &[2], Reduce::Max)?;
    // [B, C, 2, T] -> [B, T, 2, C] so the shared MLP acts on the last axis.
    let pooled = tape.concat(&[avg, max], 2)?;
    let pooled = tape.permute(pooled, &[0, 3, 2, 1])?;
    let h = tape.linear(pooled, p.get(&format!("{prefix}.w1.weight"))?, Some(p.get(&format!("{prefix}.w1.bias"))?))?;
    let h = tape.relu(h);
    let z = tape.linear(h, p.get(&format!("{prefix}.w2.weight"))?, Some(p.get(&format!("{prefix}.w2.bias"))?))?;
    let z = tape.reduce(z, &[2], Reduce::Mean)?;
    let z = tape.scale(z, 2.0);
    let gate = tape.sigmoid(z);
    tape.permute(gate, &[0, 3, 2, 1])
}

/// Spatial gate `σ(conv([mean_c; max_c]))`, shape `[B, 1, F, T]`.
pub fn cbam_spatial_gate<T: Real>(
    tape: &mut Tape<T>,
    y: Var,
    p: &Params,
    prefix: &str,
    cfg: &ModelConfig,
) -> Result<Var> {
    dims4(tape, y, "spatial gate")?;
    let avg = tape.reduce(y, &[1], Reduce::Mean)?;
    let max = tape.reduce(y, &[1], Reduce::Max)?;
    let maps = tape.concat(&[avg, max], 1)?;
    let z = tape.conv2d(
        maps,
        p.get(&format!("{prefix}.spatial.weight"))?,
        p.get(&format!("{prefix}.spatial.bias"))?,
        cfg.spatial_spec(),
    )?;
    Ok(tape.sigmoid(z))
}

/// Channel gate, then spatial gate, each multiplied in.
pub fn cbam<T: Real>(tape: &mut Tape<T>, y: Var, p: &Params, prefix: &str, cfg: &ModelConfig) -> Result<Var> {
    let g = cbam_channel_gate(tape, y, p, prefix)?;
    let yc = tape.broadcast_mul(y, g)?;
    let s = cbam_spatial_gate(tape, yc, p, prefix, cfg)?;
    let out = tape.broadcast_mul(yc, s)?;
    check_finite(tape, out, prefix)
}

/// Layer norm over (C, F) within each frame, per-channel affine.
fn frame_norm<T: Real>(tape: &mut Tape<T>, x: Var, p: &Params, prefix: &str, eps: f64) -> Result<Var> {
    tape.layer_norm(
        x,
        p.get(&format!("{prefix}.norm.gamma"))?,
        p.get(&format!("{prefix}.norm.beta"))?,
        &[1, 2],
        1,
        eps,
    )
}

/// Strided causal convolution, frame norm, ReLU.
pub fn encoder_block<T: Real>(tape: &mut Tape<T>, x: Var, p: &Params, name: &str, cfg: &ModelConfig) -> Result<Var> {
    let y = tape.conv2d(
        x,
        p.get(&format!("{name}.conv.weight"))?,
        p.get(&format!("{name}.conv.bias"))?,
        cfg.encoder_spec(),
    )?;
    let y = frame_norm(tape, y, p, name, cfg.norm_eps)?;
    let y = tape.relu(y);
    check_finite(tape, y, name)
}

/// Frequency-upsampling transposed convolution; with `norm` it is followed
/// by frame norm and ReLU, otherwise the raw output is returned.
pub fn decoder_block<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    p: &Params,
    name: &str,
    cfg: &ModelConfig,
    norm: bool,
) -> Result<Var> {
    let y = tape.conv_transpose2d(
        x,
        p.get(&format!("{name}.convt.weight"))?,
        p.get(&format!("{name}.convt.bias"))?,
        cfg.decoder_spec(),
        TimeCrop::Causal,
    )?;
    let y = if norm {
        let y = frame_norm(tape, y, p, name, cfg.norm_eps)?;
        tape.relu(y)
    } else {
        y
    };
    check_finite(tape, y, name)
}

/// Residual plus layer norm over channels at every (F, T) position.
fn residual_norm<T: Real>(tape: &mut Tape<T>, x: Var, path: Var, p: &Params, prefix: &str, eps: f64) -> Result<Var> {
    let r = tape.add(x, path)?;
    tape.layer_norm(
        r,
        p.get(&format!("{prefix}.norm.gamma"))?,
        p.get(&format!("{prefix}.norm.beta"))?,
        &[1],
        1,
        eps,
    )
}

/// Two sequence paths with residuals: a bidirectional LSTM across
/// frequency inside each frame, then a forward LSTM across time at each
/// frequency.
pub fn dprnn_bottleneck<T: Real>(tape: &mut Tape<T>, x: Var, p: &Params, cfg: &ModelConfig) -> Result<Var> {
    let [b, c, f, t] = dims4(tape, x, "bottleneck")?;

    // Frequency path: sequences over F, one per (B, T).
    let seq = tape.permute(x, &[2, 0, 3, 1])?;
    let seq = tape.reshape(seq, &[f, b * t, c])?;
    let mut dirs = Vec::with_capacity(2);
    for (dir, reverse) in [("fwd", false), ("bwd", true)] {
        let q = format!("bottleneck.freq.{dir}");
        dirs.push(tape.lstm(
            seq,
            p.get(&format!("{q}.w_ih"))?,
            p.get(&format!("{q}.w_hh"))?,
            p.get(&format!("{q}.bias"))?,
            reverse,
        )?);
    }
    let h = tape.concat(&dirs, 2)?;
    let h = tape.linear(
        h,
        p.get("bottleneck.freq.proj.weight")?,
        Some(p.get("bottleneck.freq.proj.bias")?),
    )?;
    let h = tape.reshape(h, &[f, b, t, c])?;
    let h = tape.permute(h, &[1, 3, 0, 2])?;
    let x = residual_norm(tape, x, h, p, "bottleneck.freq", cfg.norm_eps)?;
    let x = check_finite(tape, x, "bottleneck.freq")?;

    // Time path: sequences over T, one per (B, F).
    let seq = tape.permute(x, &[3, 0, 2, 1])?;
    let seq = tape.reshape(seq, &[t, b * f, c])?;
    let h = tape.lstm(
        seq,
        p.get("bottleneck.time.w_ih")?,
        p.get("bottleneck.time.w_hh")?,
        p.get("bottleneck.time.bias")?,
        false,
    )?;
    let h = tape.linear(
        h,
        p.get("bottleneck.time.proj.weight")?,
        Some(p.get("bottleneck.time.proj.bias")?),
    )?;
    let h = tape.reshape(h, &[t, b, f, c])?;
    let h = tape.permute(h, &[1, 3, 2, 0])?;
    let x = residual_norm(tape, x, h, p, "bottleneck.time", cfg.norm_eps)?;
    check_finite(tape, x, "bottleneck.time")
}

/// Full network: `[B, C_in, F, T]` features to a `[B, 1, F, T]` mask in (0, 1).
pub fn mask_network<T: Real>(tape: &mut Tape<T>, features: Var, p: &Params, cfg: &ModelConfig) -> Result<Var> {
    let [_, cin, f, _] = dims4(tape, features, "network input")?;
    if cin != cfg.variant.input_channels() || f != cfg.n_freq() {
        return Err(Error::Dimension(format!(
            "{} expects {} planes of {} bins, got {cin} of {f}",
            cfg.variant,
            cfg.variant.input_channels(),
            cfg.n_freq()
        )));
    }
    let e1 = encoder_block(tape, features, p, "enc1", cfg)?;
    let e2 = encoder_block(tape, e1, p, "enc2", cfg)?;
    let e3 = encoder_block(tape, e2, p, "enc3", cfg)?;
    let mid = dprnn_bottleneck(tape, e3, p, cfg)?;

    let s3 = cbam(tape, e3, p, "skip3.cbam", cfg)?;
    let d = tape.concat(&[mid, s3], 1)?;
    let d = decoder_block(tape, d, p, "dec3", cfg, true)?;
    let d = cbam(tape, d, p, "dec3.cbam", cfg)?;

    let s2 = cbam(tape, e2, p, "skip2.cbam", cfg)?;
    let d = tape.concat(&[d, s2], 1)?;
    let d = decoder_block(tape, d, p, "dec2", cfg, true)?;
    let d = cbam(tape, d, p, "dec2.cbam", cfg)?;

    let s1 = cbam(tape, e1, p, "skip1.cbam", cfg)?;
    let d = tape.concat(&[d, s1], 1)?;
    let z = decoder_block(tape, d, p, "dec1", cfg, false)?;
    let mask = tape.sigmoid(z);
    check_finite(tape, mask, "mask")
}
