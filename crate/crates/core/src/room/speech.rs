//! Synthetic speech-like material: voiced syllables with a gliding pitch and
//! formant-shaped harmonics, occasional fricative noise bursts, and pauses.
//! Each utterance has its own pitch range and formant habits, so two
//! utterances behave like two talkers.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::signal::Waveform;

const TARGET_RMS: f64 = 0.05;

struct Formants {
    centres: [f64; 3],
    widths: [f64; 3],
}

impl Formants {
    fn sample(rng: &mut ChaCha8Rng, shift: f64) -> Self {
        Self {
            centres: [
                rng.gen_range(300.0..850.0) * shift,
                rng.gen_range(900.0..2300.0) * shift,
                rng.gen_range(2300.0..3200.0) * shift,
            ],
            widths: [90.0, 130.0, 200.0],
        }
    }

    fn gain(&self, f: f64) -> f64 {
        let peaks: f64 = self
            .centres
            .iter()
            .zip(self.widths)
            .zip([1.0, 0.6, 0.35])
            .map(|((c, w), g)| g / (1.0 + ((f - c) / w).powi(2)))
            .sum();
        peaks + 0.02
    }
}

/// One utterance of `duration` seconds, normalised to a fixed RMS.
pub fn synth_utterance(seed: u64, duration: f64, sample_rate: u32) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = sample_rate as f64;
    let len = (duration * fs).round() as usize;
    let mut out = vec![0.0; len];

    let f0_base = rng.gen_range(90.0..240.0);
    let formant_shift = rng.gen_range(0.9..1.15);
    let mut pos = (rng.gen_range(0.0..0.15) * fs) as usize;
    while pos < len {
        let syl_len = ((rng.gen_range(0.12..0.30) * fs) as usize).min(len - pos);
        let level = rng.gen_range(0.5..1.0);
        if rng.gen_bool(0.15) {
            fricative(&mut rng, &mut out[pos..pos + syl_len], level * 0.4);
        } else {
            let f0_start = f0_base * rng.gen_range(0.85..1.15);
            let f0_end = f0_start * rng.gen_range(0.85..1.15);
            let formants = Formants::sample(&mut rng, formant_shift);
            voiced(&mut out[pos..pos + syl_len], fs, f0_start, f0_end, &formants, level);
        }
        pos += syl_len + (rng.gen_range(0.03..0.20) * fs) as usize;
    }

    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v *= TARGET_RMS / rms);
    }
    Waveform::new(out, sample_rate).expect("finite synthesis")
}

fn envelope(i: usize, n: usize) -> f64 {
    let x = (i as f64 + 0.5) / n as f64;
    (PI * x).sin().powi(2)
}

fn voiced(buf: &mut [f64], fs: f64, f0_start: f64, f0_end: f64, formants: &Formants, level: f64) {
    let n = buf.len();
    let nyquist = 0.45 * fs;
    let max_harm = (nyquist / f0_start.min(f0_end)) as usize;
    let gains: Vec<f64> = (1..=max_harm)
        .map(|h| formants.gain(h as f64 * 0.5 * (f0_start + f0_end)) / (h as f64).sqrt())
        .collect();
    let mut phase = 0.0;
    for (i, out) in buf.iter_mut().enumerate() {
        let f0 = f0_start + (f0_end - f0_start) * i as f64 / n as f64;
        phase += 2.0 * PI * f0 / fs;
        let mut v = 0.0;
        for (h, g) in gains.iter().enumerate() {
            let f = (h + 1) as f64 * f0;
            if f >= nyquist {
                break;
            }
            v += g * ((h + 1) as f64 * phase).sin();
        }
        *out += level * envelope(i, n) * v;
    }
}

fn fricative(rng: &mut ChaCha8Rng, buf: &mut [f64], level: f64) {
    let n = buf.len();
    let mut prev = 0.0;
    for (i, out) in buf.iter_mut().enumerate() {
        let w: f64 = StandardNormal.sample(rng);
        // First difference tilts the noise towards high frequencies.
        *out += level * envelope(i, n) * (w - prev);
        prev = w;
    }
}

/// `count` utterances with seeds derived from `seed`.
pub fn speech_pool(seed: u64, count: usize, duration: f64, sample_rate: u32) -> Vec<Waveform> {
    (0..count)
        .map(|i| synth_utterance(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64), duration, sample_rate))
        .collect()
}
