use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;

use super::{default_max_order, image_source_rir, Rir, SceneSpec};
use crate::features::near_mic_select;
use crate::signal::{Mic, MultiChannelWaveform, Waveform};
use crate::{Error, Result};

/// Default early-reflection window after the direct path.
pub const EARLY_CUTOFF_MS: f64 = 150.0;

/// Default level of the diffuse sensor noise relative to the target.
pub const DEFAULT_NOISE_DB: f64 = -30.0;

/// A two-channel mixture with its training reference.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureExample {
    pub mixture: MultiChannelWaveform,
    /// Early-reverberated target at the near microphone.
    pub target_reference: Waveform,
    pub near_mic: Mic,
    pub metadata: SceneSpec,
}

/// Linear convolution of `x` with `h`, truncated to `out_len` samples.
pub fn convolve(x: &[f64], h: &[f64], out_len: usize) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return vec![0.0; out_len];
    }
    let full = x.len() + h.len() - 1;
    if x.len().min(h.len()) <= 64 {
        let mut y = vec![0.0; out_len];
        for (i, yi) in y.iter_mut().enumerate().take(full) {
            let lo = i.saturating_sub(h.len() - 1);
            let hi = i.min(x.len() - 1);
            *yi = (lo..=hi).map(|j| x[j] * h[i - j]).sum();
        }
        return y;
    }
    let n = full.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let pad = |v: &[f64]| {
        let mut b = vec![Complex64::new(0.0, 0.0); n];
        for (o, &s) in b.iter_mut().zip(v) {
            o.re = s;
        }
        b
    };
    let (mut a, mut b) = (pad(x), pad(h));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    let scale = 1.0 / n as f64;
    let mut y: Vec<f64> = a.iter().take(full.min(out_len)).map(|c| c.re * scale).collect();
    y.resize(out_len, 0.0);
    y
}

/// Index of the strongest tap, taken as the direct-path arrival.
pub fn direct_tap(taps: &[f64]) -> usize {
    taps.iter()
        .enumerate()
        .fold((0, 0.0), |best, (i, v)| if v.abs() > best.1 { (i, v.abs()) } else { best })
        .0
}

/// The response up to `cutoff_ms` after its direct-path arrival; later taps
/// are dropped.
pub fn truncate_early(taps: &[f64], sample_rate: u32, cutoff_ms: f64) -> Vec<f64> {
    let keep = direct_tap(taps) + (cutoff_ms * 1e-3 * sample_rate as f64).round() as usize;
    taps[..keep.min(taps.len())].to_vec()
}

/// Source convolved with the early part of one microphone's response.
pub fn early_reverb_target(speech: &Waveform, rir: &Rir, mic: Mic, cutoff_ms: f64) -> Result<Waveform> {
    if !(cutoff_ms > 0.0) {
        return Err(Error::Config(format!("cutoff {cutoff_ms} ms must be positive")));
    }
    if speech.sample_rate() != rir.sample_rate() {
        return Err(Error::Input(format!(
            "speech at {} Hz but RIR at {} Hz",
            speech.sample_rate(),
            rir.sample_rate()
        )));
    }
    let early = truncate_early(rir.taps(mic), rir.sample_rate(), cutoff_ms);
    Waveform::new(convolve(speech.samples(), &early, speech.len()), speech.sample_rate())
}

/// Both-channel responses for the target and the interferer of a scene.
pub fn scene_rirs(scene: &SceneSpec, sample_rate: u32) -> Result<(Rir, Rir)> {
    let order = default_max_order(&scene.room);
    let t = image_source_rir(&scene.room, &scene.array, &scene.target, order, sample_rate)?;
    let i = image_source_rir(&scene.room, &scene.array, &scene.interferer, order, sample_rate)?;
    Ok((t, i))
}

/// Renders a scene: `y_m = s * h_m + g · i * h'_m + n_m`.
///
/// The interferer gain `g` makes the near-microphone early components meet
/// `scene.snr_db`. An all-zero interferer is left silent; `noise_db = None`
/// disables the sensor noise.
pub fn synthesize_example(
    scene: &SceneSpec,
    target_speech: &Waveform,
    interferer_speech: &Waveform,
    noise_db: Option<f64>,
) -> Result<MixtureExample> {
    let fs = target_speech.sample_rate();
    if interferer_speech.sample_rate() != fs {
        return Err(Error::Input(format!(
            "target at {fs} Hz but interferer at {} Hz",
            interferer_speech.sample_rate()
        )));
    }
    let (rir_t, rir_i) = scene_rirs(scene, fs)?;
    synthesize_with_rirs(scene, target_speech, interferer_speech, noise_db, &rir_t, &rir_i)
}

pub fn synthesize_with_rirs(
    scene: &SceneSpec,
    target_speech: &Waveform,
    interferer_speech: &Waveform,
    noise_db: Option<f64>,
    rir_t: &Rir,
    rir_i: &Rir,
) -> Result<MixtureExample> {
    let fs = target_speech.sample_rate();
    if interferer_speech.sample_rate() != fs || rir_t.sample_rate() != fs || rir_i.sample_rate() != fs {
        return Err(Error::Input("sample rates of speech and responses differ".into()));
    }
    let len = target_speech.len().min(interferer_speech.len());
    let near = near_mic_select(scene.target.azimuth);
    let target = target_speech.segment(0, len);
    let interferer = interferer_speech.segment(0, len);

    let early_t = early_reverb_target(&target, rir_t, near, EARLY_CUTOFF_MS)?;
    let early_i = early_reverb_target(&interferer, rir_i, near, EARLY_CUTOFF_MS)?;
    let (e_t, e_i) = (early_t.energy(), early_i.energy());
    if e_t <= 0.0 {
        return Err(Error::Input("target speech has zero energy".into()));
    }
    let gain = if e_i > 0.0 {
        (e_t / (e_i * 10f64.powf(scene.snr_db / 10.0))).sqrt()
    } else {
        0.0
    };

    let mut noise_rng = ChaCha8Rng::seed_from_u64(scene.seed ^ 0x6E6F_6973_6500_0000);
    let noise = match noise_db {
        Some(db) => {
            let sigma = (e_t / len as f64 * 10f64.powf(db / 10.0)).sqrt();
            Some(Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?)
        }
        None => None,
    };

    let channels = [Mic::First, Mic::Second]
        .into_iter()
        .map(|mic| {
            let s = convolve(target.samples(), rir_t.taps(mic), len);
            let i = convolve(interferer.samples(), rir_i.taps(mic), len);
            let y: Vec<f64> = s
                .iter()
                .zip(&i)
                .map(|(a, b)| {
                    let n = noise.as_ref().map_or(0.0, |d| d.sample(&mut noise_rng));
                    a + gain * b + n
                })
                .collect();
            Waveform::new(y, fs)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(MixtureExample {
        mixture: MultiChannelWaveform::new(channels)?,
        target_reference: early_t,
        near_mic: near,
        metadata: *scene,
    })
}
