//! Training objective and evaluation metrics.
//!
//! Every quantity exists twice: a direct `f64` evaluation on sample slices
//! for metrics and tests, and a graph builder on a [`Tape`] for training.
//! The two are written independently and cross-checked in tests.
//!
//! SI-SNR uses a relative guard: both energies get `ε·‖ŝ‖²` added, so the
//! value is exactly scale invariant and a perfect estimate caps at the same
//! level whatever its gain. An estimate orthogonal to the reference lands
//! at `10·log10(ε)` (−80 dB for the default ε).

use serde::{Deserialize, Serialize};

use crate::autodiff::{Real, Reduce, Tape, Tensor, Var};
use crate::signal::{analysis_frames, StftConfig, Waveform};
use crate::{Error, Result};

/// Guard inside square roots of the graph's magnitude computation.
const MAG_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the multi-resolution STFT sum.
    pub alpha_stft: f64,
    /// Weight of the negated SI-SNR.
    pub alpha_sisnr: f64,
    /// (window, hop) pairs.
    pub resolutions: Vec<(usize, usize)>,
    pub epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha_stft: 0.5,
            alpha_sisnr: 0.5,
            resolutions: vec![(512, 256), (1024, 512), (256, 128)],
            epsilon: 1e-8,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_stft >= 0.0 && self.alpha_sisnr >= 0.0) || self.alpha_stft + self.alpha_sisnr == 0.0 {
            return Err(Error::Config("loss weights must be non-negative and not both zero".into()));
        }
        if self.resolutions.is_empty() {
            return Err(Error::Config("at least one STFT resolution is needed".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        for &(w, h) in &self.resolutions {
            StftConfig::hann(w, h)?;
        }
        Ok(())
    }

    /// Shortest signal every resolution can analyse.
    pub fn min_len(&self) -> usize {
        self.resolutions.iter().map(|&(w, _)| w).max().unwrap_or(0)
    }

    /// The loss value at a perfect estimate: `−α₂ · si_snr cap`.
    pub fn floor(&self) -> f64 {
        -self.alpha_sisnr * si_snr_cap(self.epsilon)
    }
}

/// SI-SNR of a perfect estimate.
pub fn si_snr_cap(eps: f64) -> f64 {
    10.0 * ((1.0 + eps) / eps).log10()
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("signals of {a} and {b} samples")));
    }
    Ok(())
}

fn centered(x: &[f64]) -> Vec<f64> {
    let m = x.iter().sum::<f64>() / x.len().max(1) as f64;
    x.iter().map(|v| v - m).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// SI-SNR in dB of `est` against `reference`.
pub fn si_snr_slices(reference: &[f64], est: &[f64], eps: f64) -> Result<f64> {
    check_len(reference.len(), est.len())?;
    let s = centered(reference);
    let e = centered(est);
    let ss = dot(&s, &s);
    if !(ss > 0.0) {
        return Err(Error::Input("reference has zero energy".into()));
    }
    let energy = dot(&e, &e);
    if energy == 0.0 {
        return Ok(10.0 * eps.log10());
    }
    let a = dot(&e, &s) / ss;
    let target: f64 = a * a * ss;
    let err: f64 = e.iter().zip(&s).map(|(x, y)| (x - a * y).powi(2)).sum();
    Ok(10.0 * ((target + eps * energy) / (err + eps * energy)).log10())
}

pub fn si_snr(reference: &Waveform, est: &Waveform) -> Result<f64> {
    si_snr_slices(reference.samples(), est.samples(), LossConfig::default().epsilon)
}

/// `si_snr(s, ŝ) − si_snr(s, mixture)`.
pub fn si_snri(reference: &Waveform, est: &Waveform, mixture_near: &Waveform) -> Result<f64> {
    si_snri_slices(reference.samples(), est.samples(), mixture_near.samples(), LossConfig::default().epsilon)
}

pub fn si_snri_slices(reference: &[f64], est: &[f64], mixture: &[f64], eps: f64) -> Result<f64> {
    Ok(si_snr_slices(reference, est, eps)? - si_snr_slices(reference, mixture, eps)?)
}

fn magnitudes(x: &[f64], cfg: &StftConfig) -> Result<Vec<f64>> {
    if x.len() < cfg.window_size() {
        return Err(Error::Dimension(format!(
            "{} samples is shorter than the {}-sample window",
            x.len(),
            cfg.window_size()
        )));
    }
    let (bins, _) = analysis_frames(x, cfg.window(), cfg.hop_size());
    Ok(bins.iter().map(|c| c.norm()).collect())
}

/// Spectral convergence plus mean absolute log-magnitude difference at one
/// resolution.
pub fn stft_loss_slices(reference: &[f64], est: &[f64], window: usize, hop: usize, eps: f64) -> Result<f64> {
    check_len(reference.len(), est.len())?;
    let cfg = StftConfig::hann(window, hop)?;
    let s = magnitudes(reference, &cfg)?;
    let e = magnitudes(est, &cfg)?;
    let diff: f64 = s.iter().zip(&e).map(|(a, b)| (a - b).powi(2)).sum();
    let norm: f64 = dot(&s, &s);
    let sc = diff.sqrt() / (norm.sqrt() + eps);
    let log: f64 = s
        .iter()
        .zip(&e)
        .map(|(a, b)| ((a + eps).ln() - (b + eps).ln()).abs())
        .sum::<f64>()
        / s.len() as f64;
    Ok(sc + log)
}

pub fn stft_loss_single(reference: &Waveform, est: &Waveform, window: usize, hop: usize) -> Result<f64> {
    stft_loss_slices(reference.samples(), est.samples(), window, hop, LossConfig::default().epsilon)
}

/// `α₁ Σ stft_loss + α₂ (−si_snr)`.
pub fn combined_loss_slices(reference: &[f64], est: &[f64], cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    let mut total = 0.0;
    if cfg.alpha_stft > 0.0 {
        for &(w, h) in &cfg.resolutions {
            total += cfg.alpha_stft * stft_loss_slices(reference, est, w, h, cfg.epsilon)?;
        }
    }
    if cfg.alpha_sisnr > 0.0 {
        total -= cfg.alpha_sisnr * si_snr_slices(reference, est, cfg.epsilon)?;
    }
    Ok(total)
}

pub fn combined_loss(reference: &Waveform, est: &Waveform, cfg: &LossConfig) -> Result<f64> {
    combined_loss_slices(reference.samples(), est.samples(), cfg)
}

struct Resolution<T> {
    stft: StftConfig,
    mag: Tensor<T>,
    log_mag: Tensor<T>,
    inv_norm: f64,
}

/// Reference-side constants of the loss, computed once per example.
pub struct LossTarget<T> {
    centered: Tensor<T>,
    inv_energy: f64,
    resolutions: Vec<Resolution<T>>,
    cfg: LossConfig,
}

impl<T: Real> LossTarget<T> {
    pub fn new(reference: &[f64], cfg: &LossConfig) -> Result<Self> {
        cfg.validate()?;
        let s = centered(reference);
        let ss = dot(&s, &s);
        if !(ss > 0.0) {
            return Err(Error::Input("reference has zero energy".into()));
        }
        let mut resolutions = Vec::new();
        for &(w, h) in &cfg.resolutions {
            let stft = StftConfig::hann(w, h)?;
            let m = magnitudes(reference, &stft)?;
            let shape = [stft.n_freq(), stft.n_frames(reference.len())];
            let logs: Vec<f64> = m.iter().map(|v| (v + cfg.epsilon).ln()).collect();
            resolutions.push(Resolution {
                inv_norm: 1.0 / (dot(&m, &m).sqrt() + cfg.epsilon),
                mag: Tensor::from_f64(&shape, &m)?,
                log_mag: Tensor::from_f64(&shape, &logs)?,
                stft,
            });
        }
        Ok(Self {
            centered: Tensor::from_f64(&[s.len()], &s)?,
            inv_energy: 1.0 / ss,
            resolutions,
            cfg: cfg.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.centered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centered.is_empty()
    }

    pub fn config(&self) -> &LossConfig {
        &self.cfg
    }
}

/// SI-SNR of a `[len]` estimate on the tape, in dB.
pub fn si_snr_graph<T: Real>(tape: &mut Tape<T>, target: &LossTarget<T>, est: Var) -> Result<Var> {
    if tape.shape(est) != [target.len()] {
        return Err(Error::Dimension(format!(
            "estimate {:?} against a {}-sample reference",
            tape.shape(est),
            target.len()
        )));
    }
    let eps = target.cfg.epsilon;
    let s = tape.constant(target.centered.clone());
    let m = tape.reduce(est, &[0], Reduce::Mean)?;
    let neg_m = tape.scale(m, -1.0);
    let e = tape.broadcast_add(est, neg_m)?;
    let es = tape.mul(e, s)?;
    let proj = tape.sum(es);
    let alpha = tape.scale(proj, target.inv_energy);
    let st = tape.broadcast_mul(s, alpha)?;
    let err = tape.sub(e, st)?;
    let e2 = tape.square(e);
    let energy = tape.sum(e2);
    let guard = tape.scale(energy, eps);
    let st2 = tape.square(st);
    let num = tape.sum(st2);
    let num = tape.add(num, guard)?;
    let err2 = tape.square(err);
    let den = tape.sum(err2);
    let den = tape.add(den, guard)?;
    let ratio = tape.div(num, den)?;
    let ln = tape.log(ratio);
    Ok(tape.scale(ln, 10.0 / std::f64::consts::LN_10))
}

/// Sum over resolutions of the single-resolution STFT loss, on the tape.
pub fn mr_stft_graph<T: Real>(tape: &mut Tape<T>, target: &LossTarget<T>, est: Var) -> Result<Var> {
    let eps = target.cfg.epsilon;
    let mut terms = Vec::with_capacity(target.resolutions.len());
    for r in &target.resolutions {
        let spec = tape.stft(est, &r.stft)?;
        let sq = tape.square(spec);
        let power = tape.reduce(sq, &[0], Reduce::Mean)?;
        let power = tape.scale(power, 2.0);
        let power = tape.add_scalar(power, MAG_GUARD);
        let mag = tape.sqrt(power);
        let shape = r.mag.shape().to_vec();
        let mag = tape.reshape(mag, &shape)?;

        let sm = tape.constant(r.mag.clone());
        let d = tape.sub(sm, mag)?;
        let d2 = tape.square(d);
        let d2 = tape.sum(d2);
        let d2 = tape.add_scalar(d2, MAG_GUARD);
        let sc = tape.sqrt(d2);
        let sc = tape.scale(sc, r.inv_norm);

        let lm = tape.add_scalar(mag, eps);
        let lm = tape.log(lm);
        let sl = tape.constant(r.log_mag.clone());
        let ld = tape.sub(sl, lm)?;
        let ld = tape.abs(ld);
        let ld = tape.mean(ld);
        terms.push(tape.add(sc, ld)?);
    }
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = tape.add(total, t)?;
    }
    Ok(total)
}

/// `α₁ Σ stft_loss + α₂ (−si_snr)` on the tape.
pub fn combined_loss_graph<T: Real>(tape: &mut Tape<T>, target: &LossTarget<T>, est: Var) -> Result<Var> {
    let cfg = &target.cfg;
    let mut parts = Vec::new();
    if cfg.alpha_stft > 0.0 {
        let mr = mr_stft_graph(tape, target, est)?;
        parts.push(tape.scale(mr, cfg.alpha_stft));
    }
    if cfg.alpha_sisnr > 0.0 {
        let s = si_snr_graph(tape, target, est)?;
        parts.push(tape.scale(s, -cfg.alpha_sisnr));
    }
    match parts[..] {
        [a] => Ok(a),
        [a, b] => tape.add(a, b),
        _ => unreachable!("validated weights leave one or two terms"),
    }
}
