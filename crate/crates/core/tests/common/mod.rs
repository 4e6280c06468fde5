#![allow(dead_code)]

use cdunet::model::{Cdunet, EnhancementRequest};
use cdunet::signal::{MultiChannelWaveform, Waveform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FS: u32 = 16_000;

pub fn noise(seed: u64, len: usize, amp: f64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Waveform::new((0..len).map(|_| rng.gen_range(-amp..amp)).collect(), FS).unwrap()
}

pub fn stereo_noise(seed: u64, len: usize) -> MultiChannelWaveform {
    MultiChannelWaveform::stereo(noise(seed, len, 0.5), noise(seed ^ 0x55, len, 0.5)).unwrap()
}

/// Adds independent noise to both channels from sample `t` on.
pub fn perturb_from(mix: &MultiChannelWaveform, t: usize, seed: u64) -> MultiChannelWaveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chans = mix
        .channels()
        .iter()
        .map(|c| {
            let mut s = c.samples().to_vec();
            for v in &mut s[t..] {
                *v += rng.gen_range(-0.3..0.3);
            }
            Waveform::new(s, c.sample_rate()).unwrap()
        })
        .collect();
    MultiChannelWaveform::new(chans).unwrap()
}

/// How many samples before `t` the enhanced output changes when the input
/// is perturbed from `t` on; 0 when nothing before `t` moves.
pub fn observed_lookahead(net: &Cdunet, mix: &MultiChannelWaveform, angle: f64, width: f64, t: usize, seed: u64) -> usize {
    let a = net.enhance(&EnhancementRequest::new(mix.clone(), angle, width).unwrap()).unwrap();
    let b = net
        .enhance(&EnhancementRequest::new(perturb_from(mix, t, seed), angle, width).unwrap())
        .unwrap();
    let first = a
        .samples()
        .iter()
        .zip(b.samples())
        .position(|(x, y)| x != y)
        .unwrap_or(a.len());
    t.saturating_sub(first)
}
