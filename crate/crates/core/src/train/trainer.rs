use std::collections::BTreeMap;
use std::io::Write;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use crate::autodiff::{Tape, Tensor, Var};
use crate::features::FeatureBlock;
use crate::loss::{combined_loss_graph, si_snri_slices, LossConfig, LossTarget};
use crate::model::{
    init_weights, mask_network, network_input, variant_features, Cdunet, CdunetWeights, EnhancementRequest,
    ModelConfig, Params, DEFAULT_WIDTH_DEG,
};
use crate::room::{DatasetKind, MixtureExample};
use crate::signal::{stft, ComplexSpectrogram, StftConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub dataset_kind: DatasetKind,
    pub model: ModelConfig,
    pub loss: LossConfig,
    /// Length of the random training crops.
    pub crop_seconds: f64,
    pub width_deg: f64,
    /// Held-out evaluation period in steps; 0 evaluates only at the end.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            batch_size: 4,
            adam: AdamConfig::default(),
            seed: 0,
            dataset_kind: DatasetKind::Fixed,
            model: ModelConfig::default(),
            loss: LossConfig::default(),
            crop_seconds: 1.0,
            width_deg: DEFAULT_WIDTH_DEG,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(self.crop_seconds > 0.0) {
            return Err(Error::Config("crop length must be positive".into()));
        }
        if !(self.width_deg >= 0.0) {
            return Err(Error::Config("width must be non-negative".into()));
        }
        self.model.validate()?;
        self.loss.validate()
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub si_snri: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: CdunetWeights,
    pub log: Vec<LogRecord>,
    pub skipped_steps: u64,
    /// Mean held-out SI-SNRi of the final weights, when a held-out set was given.
    pub heldout_si_snri: Option<f64>,
}

/// A crop of one training example.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Crop {
    pub example: usize,
    pub start: usize,
    pub len: usize,
}

/// Everything the loss graph needs for one crop.
struct Prepared {
    features: FeatureBlock,
    near: ComplexSpectrogram,
    target: LossTarget<f32>,
}

fn prepare(example: &MixtureExample, crop: Crop, model: &ModelConfig, stft_cfg: &StftConfig, loss: &LossConfig, width: f64) -> Result<Prepared> {
    let mix = example.mixture.segment(crop.start, crop.len);
    let reference = example.target_reference.segment(crop.start, crop.len);
    let x1 = stft(mix.channel(0), stft_cfg)?;
    let x2 = stft(mix.channel(1), stft_cfg)?;
    let spacing = example.metadata.array.spacing();
    let features = variant_features(model.variant, [&x1, &x2], example.metadata.target.azimuth, width, spacing)?;
    let near = if example.near_mic.index() == 0 { x1 } else { x2 };
    let target = LossTarget::new(reference.samples(), loss)?;
    Ok(Prepared { features, near, target })
}

/// Mean combined loss over a batch, as a graph on `tape`.
fn batch_graph(tape: &mut Tape<f32>, params: &Params, batch: &[Prepared], model: &ModelConfig, stft_cfg: &StftConfig) -> Result<Var> {
    let blocks: Vec<&FeatureBlock> = batch.iter().map(|p| &p.features).collect();
    let x = tape.constant(network_input(&blocks, model.variant)?);
    let mask = mask_network(tape, x, params, model)?;
    let [_, _, f, t] = <[usize; 4]>::try_from(tape.shape(mask)).expect("rank-4 mask");
    let mut total: Option<Var> = None;
    for (b, p) in batch.iter().enumerate() {
        let m = tape.slice(mask, 0, b, 1)?;
        let m = tape.reshape(m, &[1, f, t])?;
        let bins = p.near.bins();
        let mut planes: Vec<f32> = bins.iter().map(|c| c.re as f32).collect();
        planes.extend(bins.iter().map(|c| c.im as f32));
        let y = tape.constant(Tensor::new(vec![2, f, t], planes)?);
        let masked = tape.broadcast_mul(y, m)?;
        let est = tape.istft(masked, stft_cfg, p.target.len())?;
        let l = combined_loss_graph(tape, &p.target, est)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, l)?,
            None => l,
        });
    }
    let total = total.ok_or_else(|| Error::Input("empty batch".into()))?;
    Ok(tape.scale(total, 1.0 / batch.len() as f64))
}

fn prepare_batch(examples: &[MixtureExample], crops: &[Crop], cfg: &TrainConfig, stft_cfg: &StftConfig) -> Result<Vec<Prepared>> {
    crops
        .iter()
        .map(|&c| {
            let ex = examples
                .get(c.example)
                .ok_or_else(|| Error::Input(format!("no example {}", c.example)))?;
            prepare(ex, c, &cfg.model, stft_cfg, &cfg.loss, cfg.width_deg)
        })
        .collect()
}

/// Mean loss of `weights` on the given crops, without updating anything.
pub fn batch_loss(weights: &CdunetWeights, examples: &[MixtureExample], crops: &[Crop], cfg: &TrainConfig) -> Result<f64> {
    let stft_cfg = cfg.model.stft()?;
    let batch = prepare_batch(examples, crops, cfg, &stft_cfg)?;
    let mut tape = Tape::new();
    let params = Params::bind(&mut tape, weights, false);
    let loss = batch_graph(&mut tape, &params, &batch, &cfg.model, &stft_cfg)?;
    Ok(f64::from(tape.data(loss)[0]))
}

/// Loss and gradients of `weights` on the given crops.
pub fn batch_gradients(
    weights: &CdunetWeights,
    examples: &[MixtureExample],
    crops: &[Crop],
    cfg: &TrainConfig,
) -> Result<(f64, BTreeMap<String, Vec<f32>>)> {
    let stft_cfg = cfg.model.stft()?;
    let batch = prepare_batch(examples, crops, cfg, &stft_cfg)?;
    let mut tape = Tape::new();
    let params = Params::bind(&mut tape, weights, true);
    let loss = batch_graph(&mut tape, &params, &batch, &cfg.model, &stft_cfg)?;
    let value = f64::from(tape.data(loss)[0]);
    let mut grads = tape.backward(loss)?;
    let mut out = BTreeMap::new();
    for (name, &v) in params.iter() {
        let g = grads.take(v).unwrap_or_else(|| vec![0.0; tape.value(v).len()]);
        out.insert(name.clone(), g);
    }
    Ok((value, out))
}

fn crop_len(example: &MixtureExample, cfg: &TrainConfig) -> usize {
    let fs = example.mixture.sample_rate() as f64;
    let want = (cfg.crop_seconds * fs).round() as usize;
    want.min(example.mixture.len())
}

/// Draws a crop whose reference is not silent.
fn draw_crop(rng: &mut ChaCha8Rng, examples: &[MixtureExample], cfg: &TrainConfig) -> Crop {
    let mut crop = Crop { example: 0, start: 0, len: 0 };
    for _ in 0..16 {
        let example = rng.gen_range(0..examples.len());
        let ex = &examples[example];
        let len = crop_len(ex, cfg);
        let start = rng.gen_range(0..=ex.mixture.len() - len);
        crop = Crop { example, start, len };
        let r = &ex.target_reference.samples()[start..start + len];
        let mean = r.iter().sum::<f64>() / len as f64;
        if r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() > 0.0 {
            break;
        }
    }
    crop
}

/// Mean SI-SNRi of `weights` over `examples`, each enhanced in full.
pub fn heldout_si_snri(weights: &CdunetWeights, model: &ModelConfig, examples: &[MixtureExample], width: f64) -> Result<f64> {
    let net = Cdunet::new(model.clone(), weights.clone())?;
    let mut sum = 0.0;
    for ex in examples {
        sum += example_si_snri(&net, ex, width)?;
    }
    Ok(sum / examples.len().max(1) as f64)
}

pub(crate) fn example_si_snri(net: &Cdunet, ex: &MixtureExample, width: f64) -> Result<f64> {
    let mut req = EnhancementRequest::new(ex.mixture.clone(), ex.metadata.target.azimuth, width)?;
    req.mic_spacing = ex.metadata.array.spacing();
    let out = net.enhance(&req)?;
    si_snri_slices(
        ex.target_reference.samples(),
        out.samples(),
        ex.mixture.mic(ex.near_mic).samples(),
        crate::loss::LossConfig::default().epsilon,
    )
}

/// Trains from seeded initial weights.
pub fn train(
    cfg: &TrainConfig,
    examples: &[MixtureExample],
    heldout: &[MixtureExample],
    log_sink: Option<&mut dyn Write>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let init = init_weights(&cfg.model, cfg.seed)?;
    train_from(init, cfg, examples, heldout, log_sink)
}

/// Trains starting at `weights`. Two consecutive non-finite losses abort
/// with [`Error::Diverged`]; a single one skips the update.
pub fn train_from(
    mut weights: CdunetWeights,
    cfg: &TrainConfig,
    examples: &[MixtureExample],
    heldout: &[MixtureExample],
    mut log_sink: Option<&mut dyn Write>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    weights.check_against(&cfg.model)?;
    if examples.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e);
    let mut state = AdamState::new();
    let mut log = Vec::new();
    let mut bad_in_a_row = 0;
    for step in 0..cfg.steps {
        let crops: Vec<Crop> = (0..cfg.batch_size).map(|_| draw_crop(&mut rng, examples, cfg)).collect();
        let (loss, grads) = match batch_gradients(&weights, examples, &crops, cfg) {
            Ok(v) => v,
            Err(Error::NonFinite(layer)) => {
                warn!("step {step}: non-finite activations in {layer}");
                (f64::NAN, BTreeMap::new())
            }
            Err(e) => return Err(e),
        };
        if !loss.is_finite() {
            bad_in_a_row += 1;
            state.skipped += 1;
            if bad_in_a_row >= 2 {
                return Err(Error::Diverged(format!("non-finite loss at steps {} and {step}", step - 1)));
            }
        } else {
            bad_in_a_row = 0;
            adam_step(&mut weights, &grads, &mut state, &cfg.adam)?;
        }
        let si_snri = if cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0 && !heldout.is_empty() {
            Some(heldout_si_snri(&weights, &cfg.model, heldout, cfg.width_deg)?)
        } else {
            None
        };
        let rec = LogRecord { step, loss, si_snri };
        if let Some(sink) = log_sink.as_deref_mut() {
            serde_json::to_writer(&mut *sink, &rec).map_err(|e| Error::Data(e.to_string()))?;
            sink.write_all(b"\n")?;
        }
        if step % 50 == 0 || si_snri.is_some() {
            info!("step {step}: loss {loss:.4}{}", si_snri.map(|v| format!(", held-out SI-SNRi {v:.2} dB")).unwrap_or_default());
        }
        log.push(rec);
    }
    let heldout_si_snri = if heldout.is_empty() {
        None
    } else {
        Some(heldout_si_snri(&weights, &cfg.model, heldout, cfg.width_deg)?)
    };
    Ok(TrainOutcome {
        weights,
        log,
        skipped_steps: state.skipped,
        heldout_si_snri,
    })
}
