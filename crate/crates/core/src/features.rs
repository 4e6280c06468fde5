//! Network input planes and near-microphone selection.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::signal::{ComplexSpectrogram, Mic};
use crate::{Error, Result};

/// Number of planes in the triple-steering feature block.
pub const CDUNET_CHANNELS: usize = 10;

/// Real-valued planes `[channels × freq × frames]`, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    data: Vec<f64>,
    n_channels: usize,
    n_freq: usize,
    n_frames: usize,
    pub target_deg: f64,
    pub width_deg: f64,
}

impl FeatureBlock {
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_freq(&self) -> usize {
        self.n_freq
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.n_freq * self.n_frames;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.n_channels, self.n_freq, self.n_frames]
    }
}

/// Principal-value phase in (-π, π]; `arg(0) = 0`.
pub fn phase(c: Complex64) -> f64 {
    let a = c.im.atan2(c.re);
    if a <= -PI {
        PI
    } else {
        a
    }
}

fn check_same(specs: &[&ComplexSpectrogram]) -> Result<()> {
    let first = specs
        .first()
        .ok_or_else(|| Error::Dimension("no spectrograms".into()))?;
    for (i, s) in specs.iter().enumerate() {
        if !s.same_shape(first) {
            return Err(Error::Dimension(format!(
                "spectrogram {i} is {}x{}, expected {}x{}",
                s.n_freq(),
                s.n_frames(),
                first.n_freq(),
                first.n_frames()
            )));
        }
    }
    Ok(())
}

/// All magnitude planes first, then all phase planes, then `extra` planes.
fn build(
    complex: &[&ComplexSpectrogram],
    extra: &[Vec<f64>],
    target_deg: f64,
    width_deg: f64,
) -> Result<FeatureBlock> {
    check_same(complex)?;
    let (n_freq, n_frames) = (complex[0].n_freq(), complex[0].n_frames());
    let n = n_freq * n_frames;
    let mut data = Vec::with_capacity((2 * complex.len() + extra.len()) * n);
    for s in complex {
        data.extend(s.bins().iter().map(|c| c.norm()));
    }
    for s in complex {
        data.extend(s.bins().iter().map(|&c| phase(c)));
    }
    for plane in extra {
        if plane.len() != n {
            return Err(Error::Dimension("extra plane has wrong size".into()));
        }
        data.extend_from_slice(plane);
    }
    Ok(FeatureBlock {
        data,
        n_channels: 2 * complex.len() + extra.len(),
        n_freq,
        n_frames,
        target_deg,
        width_deg,
    })
}

/// Ten-plane input: magnitudes of (mic 1, mic 2, lower beam, centre beam,
/// upper beam) followed by their phases in the same order.
pub fn assemble_features(
    mics: [&ComplexSpectrogram; 2],
    steered: [&ComplexSpectrogram; 3],
    target_deg: f64,
    width_deg: f64,
) -> Result<FeatureBlock> {
    build(
        &[mics[0], mics[1], steered[0], steered[1], steered[2]],
        &[],
        target_deg,
        width_deg,
    )
}

/// Raw microphones only: (mag 1, mag 2, phase 1, phase 2).
pub fn assemble_plain(mics: [&ComplexSpectrogram; 2]) -> Result<FeatureBlock> {
    build(&[mics[0], mics[1]], &[], f64::NAN, f64::NAN)
}

/// Raw microphones plus the inter-microphone phase difference plane.
pub fn assemble_ipd(mics: [&ComplexSpectrogram; 2]) -> Result<FeatureBlock> {
    check_same(&mics)?;
    let ipd: Vec<f64> = mics[0]
        .bins()
        .iter()
        .zip(mics[1].bins())
        .map(|(a, b)| phase(a * b.conj()))
        .collect();
    build(&[mics[0], mics[1]], &[ipd], f64::NAN, f64::NAN)
}

/// Raw microphones plus the centre beam: (mag 1, mag 2, mag beam, phase 1,
/// phase 2, phase beam).
pub fn assemble_center_beam(
    mics: [&ComplexSpectrogram; 2],
    center: &ComplexSpectrogram,
    target_deg: f64,
) -> Result<FeatureBlock> {
    build(&[mics[0], mics[1], center], &[], target_deg, f64::NAN)
}

/// The microphone closer to the target: the first below 90°, else the second.
pub fn near_mic_select(target_deg: f64) -> Mic {
    if target_deg < 90.0 {
        Mic::First
    } else {
        Mic::Second
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{stft, StftConfig, Waveform};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(seed: u64) -> ComplexSpectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Waveform::new((0..2048).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16_000).unwrap();
        stft(&w, &StftConfig::default()).unwrap()
    }

    #[test]
    fn ten_channels_in_declared_order() {
        let s: Vec<_> = (0..5).map(spec).collect();
        let f = assemble_features([&s[0], &s[1]], [&s[2], &s[3], &s[4]], 90.0, 7.0).unwrap();
        assert_eq!(f.n_channels(), CDUNET_CHANNELS);
        assert_eq!(f.shape(), [10, 257, s[0].n_frames()]);
        for (c, sp) in s.iter().enumerate() {
            let (mag, ph) = (f.plane(c), f.plane(c + 5));
            for (i, b) in sp.bins().iter().enumerate() {
                let back = Complex64::from_polar(mag[i], ph[i]);
                assert!((back - b).norm() < 1e-6);
                assert!(mag[i] >= 0.0 && ph[i] > -PI && ph[i] <= PI);
            }
        }
    }

    #[test]
    fn zero_spectra_give_zero_planes() {
        let z = spec(0).zeros_like();
        let f = assemble_features([&z, &z], [&z, &z, &z], 45.0, 7.0).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatch_rejected() {
        let a = spec(1);
        let w = Waveform::zeros(4096, 16_000);
        let b = stft(&w, &StftConfig::default()).unwrap();
        assert!(matches!(
            assemble_features([&a, &b], [&a, &a, &a], 90.0, 7.0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn phase_is_principal() {
        assert_eq!(phase(Complex64::new(-1.0, -0.0)), PI);
        assert_eq!(phase(Complex64::new(0.0, 0.0)), 0.0);
    }

    #[test]
    fn near_mic_rule() {
        assert_eq!(near_mic_select(45.0), Mic::First);
        assert_eq!(near_mic_select(89.999), Mic::First);
        assert_eq!(near_mic_select(90.0), Mic::Second);
        assert_eq!(near_mic_select(135.0), Mic::Second);
    }

    #[test]
    fn variant_channel_counts() {
        let (a, b) = (spec(1), spec(2));
        assert_eq!(assemble_plain([&a, &b]).unwrap().n_channels(), 4);
        assert_eq!(assemble_ipd([&a, &b]).unwrap().n_channels(), 5);
        assert_eq!(assemble_center_beam([&a, &b], &a, 90.0).unwrap().n_channels(), 6);
    }
}
