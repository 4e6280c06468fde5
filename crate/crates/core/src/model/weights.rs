//! Named parameter maps, initialisation and the binary weights file.
//!
//! File layout, little-endian: `"CDUW"`, u32 version, u32 tensor count, then
//! per tensor a u16 name length, the UTF-8 name, a u8 rank, u32 dims and f32
//! values in row-major order. A trailing u32 holds the CRC-32 of everything
//! before it.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelVariant};
use crate::autodiff::Tensor;
use crate::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"CDUW";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CdunetWeights {
    pub version: u32,
    tensors: BTreeMap<String, Tensor<f32>>,
}

impl Default for CdunetWeights {
    fn default() -> Self {
        Self {
            version: WEIGHTS_VERSION,
            tensors: BTreeMap::new(),
        }
    }
}

impl CdunetWeights {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<f32>) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<f32>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Weights(format!("missing tensor `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<f32>> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<f32>)> {
        self.tensors.iter()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total element count over all tensors.
    pub fn param_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Fails unless names and shapes match `cfg`'s layer plan exactly.
    pub fn check_against(&self, cfg: &ModelConfig) -> Result<()> {
        let plan = cfg.layer_plan();
        for (name, shape) in &plan {
            let t = self.get(name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Weights(format!(
                    "`{name}` has shape {:?}, the configuration expects {shape:?}",
                    t.shape()
                )));
            }
        }
        if plan.len() != self.tensors.len() {
            let extra: Vec<&String> = self
                .tensors
                .keys()
                .filter(|k| !plan.iter().any(|(n, _)| n == *k))
                .collect();
            return Err(Error::Weights(format!("unexpected tensors {extra:?}")));
        }
        Ok(())
    }

    /// Recovers the configuration from tensor shapes, then checks the whole
    /// plan against it.
    pub fn infer_config(&self) -> Result<ModelConfig> {
        let dim = |name: &str, axis: usize| -> Result<usize> {
            self.get(name)?
                .shape()
                .get(axis)
                .copied()
                .ok_or_else(|| Error::Weights(format!("`{name}` has too few axes")))
        };
        let cin = dim("enc1.conv.weight", 1)?;
        let variant = ModelVariant::from_input_channels(cin)
            .ok_or_else(|| Error::Weights(format!("no model variant takes {cin} input planes")))?;
        let c3 = dim("enc3.conv.weight", 0)?;
        let cfg = ModelConfig {
            variant,
            encoder_channels: [dim("enc1.conv.weight", 0)?, dim("enc2.conv.weight", 0)?, c3],
            kernel: (dim("enc1.conv.weight", 2)?, dim("enc1.conv.weight", 3)?),
            decoder_kernel_f: dim("dec1.convt.weight", 2)?,
            lstm_hidden: dim("bottleneck.time.w_hh", 1)?,
            freq_hidden: dim("bottleneck.freq.fwd.w_hh", 1)?,
            cbam_reduction: c3 / dim("skip3.cbam.w1.weight", 0)?.max(1),
            spatial_kernel: dim("skip3.cbam.spatial.weight", 2)?,
            ..ModelConfig::default()
        };
        cfg.validate().map_err(|e| Error::Weights(format!("inconsistent weights: {e}")))?;
        self.check_against(&cfg)?;
        Ok(cfg)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(16 + 4 * self.param_count());
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            let len = u16::try_from(name.len()).map_err(|_| Error::Weights(format!("name too long: {name}")))?;
            let rank = u8::try_from(t.rank()).map_err(|_| Error::Weights(format!("`{name}` has too many axes")))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(rank);
            for &d in t.shape() {
                let d = u32::try_from(d).map_err(|_| Error::Weights(format!("`{name}` axis too long")))?;
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::Weights("file too short".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        if &body[..4] != WEIGHTS_MAGIC {
            return Err(Error::Weights("bad magic, not a weights file".into()));
        }
        let stored = u32::from_le_bytes(tail.try_into().expect("four bytes"));
        if crc32fast::hash(body) != stored {
            return Err(Error::Weights("checksum mismatch (truncated or corrupt file)".into()));
        }
        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u32()?;
        if version != WEIGHTS_VERSION {
            return Err(Error::Weights(format!(
                "unsupported format version {version} (this build reads {WEIGHTS_VERSION})"
            )));
        }
        let count = r.u32()?;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Weights("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.take(1)?[0] as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Weights("tensor too large".into()))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")))
                .collect();
            if tensors.insert(name.clone(), Tensor::new(shape, data)?).is_some() {
                return Err(Error::Weights(format!("duplicate tensor `{name}`")));
            }
        }
        if r.pos != body.len() {
            return Err(Error::Weights("trailing bytes after the last tensor".into()));
        }
        Ok(Self { version, tensors })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Weights("unexpected end of file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("two bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }
}

pub fn save_weights(weights: &CdunetWeights, path: &Path) -> Result<()> {
    fs::write(path, weights.to_bytes()?)?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<CdunetWeights> {
    CdunetWeights::from_bytes(&fs::read(path)?)
}

/// Sum of element counts over all tensors.
pub fn param_count(weights: &CdunetWeights) -> usize {
    weights.param_count()
}

/// Random initial weights for `cfg`, determined by `seed`.
///
/// Kernels and projections are uniform in `±sqrt(6 / fan_in)` (ReLU gain) or
/// `±1/sqrt(fan_in)` for gates and recurrences; biases start at zero except
/// the LSTM forget gates, which start at one. Norm scales start at one.
pub fn init_weights(cfg: &ModelConfig, seed: u64) -> Result<CdunetWeights> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = CdunetWeights::new();
    for (name, shape) in cfg.layer_plan() {
        let n: usize = shape.iter().product();
        let fan_in: usize = shape[1..].iter().product::<usize>().max(1);
        let data: Vec<f32> = if name.ends_with(".gamma") {
            vec![1.0; n]
        } else if name.ends_with(".beta") {
            vec![0.0; n]
        } else if name.contains("bottleneck") && (name.ends_with("w_ih") || name.ends_with("w_hh")) {
            let bound = 1.0 / (shape[0] as f64 / 4.0).sqrt();
            (0..n).map(|_| rng.gen_range(-bound..bound) as f32).collect()
        } else if name.contains("bottleneck") && name.ends_with(".bias") && !name.contains("proj") {
            let h = n / 4;
            (0..n).map(|k| if (h..2 * h).contains(&k) { 1.0 } else { 0.0 }).collect()
        } else if name.ends_with(".bias") {
            vec![0.0; n]
        } else {
            let fan_in = if name.ends_with("convt.weight") {
                // Each output sees cin · kf / stride taps on average.
                shape[0] * shape[2] / cfg.freq_stride.max(1)
            } else {
                fan_in
            };
            let gain = if name.contains("cbam") || name.contains("proj") { 1.0 } else { 6.0 };
            let bound = (gain / fan_in.max(1) as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-bound..bound) as f32).collect()
        };
        w.insert(name, Tensor::new(shape, data)?);
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_map_counts_zero() {
        assert_eq!(param_count(&CdunetWeights::new()), 0);
    }

    #[test]
    fn single_conv_count() {
        let mut w = CdunetWeights::new();
        w.insert("k", Tensor::zeros(&[10, 16, 5, 3]));
        w.insert("b", Tensor::zeros(&[16]));
        assert_eq!(param_count(&w), 2416);
    }

    #[test]
    fn init_matches_plan_and_is_seeded() {
        let cfg = ModelConfig::default();
        let a = init_weights(&cfg, 3).unwrap();
        a.check_against(&cfg).unwrap();
        assert_eq!(a.param_count(), cfg.param_count());
        assert_eq!(a, init_weights(&cfg, 3).unwrap());
        assert_ne!(a, init_weights(&cfg, 4).unwrap());
        assert_eq!(a.infer_config().unwrap(), cfg);
    }

    #[test]
    fn bytes_round_trip_and_reject_damage() {
        let cfg = ModelConfig::for_variant(ModelVariant::UnetIpd);
        let w = init_weights(&cfg, 1).unwrap();
        let bytes = w.to_bytes().unwrap();
        assert_eq!(CdunetWeights::from_bytes(&bytes).unwrap(), w);
        assert!(CdunetWeights::from_bytes(&bytes[..bytes.len() - 9]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(CdunetWeights::from_bytes(&bad).is_err());
    }

    #[test]
    fn future_version_is_rejected() {
        let mut w = CdunetWeights::new();
        w.version = WEIGHTS_VERSION + 1;
        w.insert("x", Tensor::zeros(&[2]));
        let err = CdunetWeights::from_bytes(&w.to_bytes().unwrap()).unwrap_err();
        assert!(err.to_string().contains("unsupported format version"), "{err}");
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let cfg = ModelConfig::default();
        let mut w = init_weights(&cfg, 0).unwrap();
        w.insert("enc1.conv.bias", Tensor::zeros(&[3]));
        let err = w.check_against(&cfg).unwrap_err();
        assert!(err.to_string().contains("enc1.conv.bias"), "{err}");
    }
}
