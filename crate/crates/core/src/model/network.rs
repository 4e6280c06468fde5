use super::layers::{mask_network, Params};
use super::{CdunetWeights, ModelConfig, ModelVariant};
use crate::autodiff::{Real, Tape, Tensor};
use crate::beamform::{das_beamform, steering_vector, triple_steering};
use crate::features::{
    assemble_center_beam, assemble_features, assemble_ipd, assemble_plain, near_mic_select, FeatureBlock,
};
use crate::room::{ArrayGeometry, MIC_SPACING};
use crate::signal::{istft, stft, ComplexSpectrogram, MultiChannelWaveform, StftConfig, Waveform};
use crate::{Error, Result};

/// Magnitude planes enter the network as `ln(|X| + MAGNITUDE_FLOOR)`.
pub const MAGNITUDE_FLOOR: f64 = 1e-3;

/// Default enhancement half-width in degrees.
pub const DEFAULT_WIDTH_DEG: f64 = 7.0;

/// A stereo mixture and the direction to extract.
#[derive(Debug, Clone)]
pub struct EnhancementRequest {
    pub mixture: MultiChannelWaveform,
    pub target_deg: f64,
    pub width_deg: f64,
    /// Microphone spacing in metres.
    pub mic_spacing: f64,
}

impl EnhancementRequest {
    pub fn new(mixture: MultiChannelWaveform, target_deg: f64, width_deg: f64) -> Result<Self> {
        let req = Self {
            mixture,
            target_deg,
            width_deg,
            mic_spacing: MIC_SPACING,
        };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<()> {
        self.mixture.require_stereo()?;
        if !(0.0..=180.0).contains(&self.target_deg) {
            return Err(Error::Config(format!("target angle {}° outside [0, 180]", self.target_deg)));
        }
        if !(self.width_deg >= 0.0 && self.width_deg.is_finite()) {
            return Err(Error::Config(format!("width {}° must be a non-negative angle", self.width_deg)));
        }
        if !(self.mic_spacing > 0.0) {
            return Err(Error::Config("microphone spacing must be positive".into()));
        }
        Ok(())
    }
}

fn geometry(spacing: f64) -> Result<ArrayGeometry> {
    ArrayGeometry::new([0.0, 0.0, 0.0], spacing, 0.0)
}

/// Input planes of `variant` for one mixture.
pub fn variant_features(
    variant: ModelVariant,
    mics: [&ComplexSpectrogram; 2],
    target_deg: f64,
    width_deg: f64,
    mic_spacing: f64,
) -> Result<FeatureBlock> {
    match variant {
        ModelVariant::Cdunet => {
            let steered = triple_steering(mics, target_deg, width_deg, &geometry(mic_spacing)?)?;
            assemble_features(mics, [&steered[0], &steered[1], &steered[2]], target_deg, width_deg)
        }
        ModelVariant::UnetPlain => assemble_plain(mics),
        ModelVariant::UnetIpd => assemble_ipd(mics),
        ModelVariant::UnetBf => {
            let sv = steering_vector(
                target_deg,
                &geometry(mic_spacing)?,
                mics[0].config(),
                mics[0].sample_rate(),
            )?;
            let beam = das_beamform(mics, &sv)?;
            assemble_center_beam(mics, &beam, target_deg)
        }
    }
}

/// Stacks feature blocks into a `[B, C, F, T]` network input, compressing
/// the magnitude planes.
pub fn network_input<T: Real>(blocks: &[&FeatureBlock], variant: ModelVariant) -> Result<Tensor<T>> {
    let first = blocks.first().ok_or_else(|| Error::Input("no feature blocks".into()))?;
    let [c, f, t] = first.shape();
    if c != variant.input_channels() {
        return Err(Error::Dimension(format!("{variant} takes {} planes, got {c}", variant.input_channels())));
    }
    let plane = f * t;
    let n_mag = variant.magnitude_planes() * plane;
    let mut data = Vec::with_capacity(blocks.len() * c * plane);
    for b in blocks {
        if b.shape() != [c, f, t] {
            return Err(Error::Dimension(format!("feature block {:?} differs from {:?}", b.shape(), [c, f, t])));
        }
        data.extend(b.data().iter().enumerate().map(|(k, &v)| {
            T::lit(if k < n_mag { (v + MAGNITUDE_FLOOR).ln() } else { v })
        }));
    }
    Tensor::new(vec![blocks.len(), c, f, t], data)
}

/// Multiplies every bin of `spec` by the real mask (frequency-major, like
/// the spectrogram).
pub fn apply_mask(spec: &ComplexSpectrogram, mask: &[f64]) -> Result<ComplexSpectrogram> {
    if mask.len() != spec.bins().len() {
        return Err(Error::Dimension(format!(
            "mask has {} values for {} bins",
            mask.len(),
            spec.bins().len()
        )));
    }
    spec.with_bins(spec.bins().iter().zip(mask).map(|(b, &m)| b * m).collect())
}

/// Where the mask comes from during enhancement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskSource {
    Network,
    /// Every bin scaled by this constant, bypassing the network.
    Constant(f64),
}

/// A configured network with its weights.
#[derive(Debug, Clone)]
pub struct Cdunet {
    cfg: ModelConfig,
    weights: CdunetWeights,
    stft: StftConfig,
}

impl Cdunet {
    pub fn new(cfg: ModelConfig, weights: CdunetWeights) -> Result<Self> {
        cfg.validate()?;
        weights.check_against(&cfg)?;
        let stft = cfg.stft()?;
        Ok(Self { cfg, weights, stft })
    }

    /// Configuration taken from the tensor shapes.
    pub fn from_weights(weights: CdunetWeights) -> Result<Self> {
        let cfg = weights.infer_config()?;
        Self::new(cfg, weights)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn weights(&self) -> &CdunetWeights {
        &self.weights
    }

    pub fn stft_config(&self) -> &StftConfig {
        &self.stft
    }

    pub fn features(&self, req: &EnhancementRequest) -> Result<(FeatureBlock, [ComplexSpectrogram; 2])> {
        req.validate()?;
        let x1 = stft(req.mixture.channel(0), &self.stft)?;
        let x2 = stft(req.mixture.channel(1), &self.stft)?;
        let block = variant_features(self.cfg.variant, [&x1, &x2], req.target_deg, req.width_deg, req.mic_spacing)?;
        Ok((block, [x1, x2]))
    }

    /// Mask for one feature block, frequency-major `[F · T]`.
    pub fn mask(&self, block: &FeatureBlock) -> Result<Vec<f64>> {
        let mut tape = Tape::<f32>::new();
        let params = Params::bind(&mut tape, &self.weights, false);
        let x = tape.constant(network_input(&[block], self.cfg.variant)?);
        let m = mask_network(&mut tape, x, &params, &self.cfg)?;
        Ok(tape.data(m).iter().map(|&v| f64::from(v)).collect())
    }

    pub fn enhance(&self, req: &EnhancementRequest) -> Result<Waveform> {
        self.enhance_with(req, MaskSource::Network)
    }

    /// Masks the STFT of the microphone nearer the target and resynthesises.
    pub fn enhance_with(&self, req: &EnhancementRequest, source: MaskSource) -> Result<Waveform> {
        let (block, [x1, x2]) = self.features(req)?;
        let near = if near_mic_select(req.target_deg).index() == 0 { x1 } else { x2 };
        let mask = match source {
            MaskSource::Network => self.mask(&block)?,
            MaskSource::Constant(v) => vec![v; near.bins().len()],
        };
        istft(&apply_mask(&near, &mask)?)
    }
}

/// One-shot enhancement with the configuration inferred from `weights`.
pub fn forward(req: &EnhancementRequest, weights: &CdunetWeights) -> Result<Waveform> {
    Cdunet::from_weights(weights.clone())?.enhance(req)
}
