//! Far-field steering, delay-and-sum and generalized sidelobe cancelling for
//! the two-microphone array, plus the three-beam feature generator.

mod gsc;

use std::f64::consts::PI;

use num_complex::Complex64;

pub use gsc::{gsc_apply_weights, gsc_beamform, gsc_weight_trajectory, GscState, GSC_EPS, GSC_MU};

use crate::room::ArrayGeometry;
use crate::signal::{ComplexSpectrogram, StftConfig};
use crate::{Error, Result, SPEED_OF_SOUND};

/// Delay of mic 2 relative to mic 1 for a far-field source at `azimuth_deg`.
pub fn inter_mic_delay(azimuth_deg: f64, spacing: f64) -> f64 {
    spacing * azimuth_deg.to_radians().cos() / SPEED_OF_SOUND
}

/// Per-bin array response `[1, exp(-j 2π f τ)]`, normalised to mic 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    weights: Vec<[Complex64; 2]>,
    azimuth: f64,
    delay: f64,
}

impl SteeringVector {
    pub fn weights(&self) -> &[[Complex64; 2]] {
        &self.weights
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    /// Inter-microphone delay τ in seconds.
    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn n_freq(&self) -> usize {
        self.weights.len()
    }
}

pub fn steering_vector(
    azimuth_deg: f64,
    geometry: &ArrayGeometry,
    cfg: &StftConfig,
    sample_rate: u32,
) -> Result<SteeringVector> {
    if !(0.0..=180.0).contains(&azimuth_deg) {
        return Err(Error::Config(format!("azimuth {azimuth_deg}° outside [0, 180]")));
    }
    let tau = inter_mic_delay(azimuth_deg, geometry.spacing());
    let weights = (0..cfg.n_freq())
        .map(|k| {
            let f = cfg.bin_frequency(k, sample_rate);
            [Complex64::new(1.0, 0.0), Complex64::from_polar(1.0, -2.0 * PI * f * tau)]
        })
        .collect();
    Ok(SteeringVector {
        weights,
        azimuth: azimuth_deg,
        delay: tau,
    })
}

pub(crate) fn check_pair(mics: [&ComplexSpectrogram; 2], sv: &SteeringVector) -> Result<()> {
    if !mics[0].same_shape(mics[1]) {
        return Err(Error::Dimension("microphone spectrograms differ in shape".into()));
    }
    if sv.n_freq() != mics[0].n_freq() {
        return Err(Error::Dimension(format!(
            "steering vector has {} bins, spectrogram has {}",
            sv.n_freq(),
            mics[0].n_freq()
        )));
    }
    Ok(())
}

/// `½ Σ_m conj(a_m) X_m` per bin and frame.
pub fn das_beamform(mics: [&ComplexSpectrogram; 2], sv: &SteeringVector) -> Result<ComplexSpectrogram> {
    check_pair(mics, sv)?;
    let frames = mics[0].n_frames();
    let bins = mics[0]
        .bins()
        .iter()
        .zip(mics[1].bins())
        .enumerate()
        .map(|(i, (x1, x2))| {
            let a = &sv.weights[i / frames];
            0.5 * (a[0].conj() * x1 + a[1].conj() * x2)
        })
        .collect();
    mics[0].with_bins(bins)
}

/// Lower edge, centre and upper edge of the enhancement region.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringSet {
    pub lower: SteeringVector,
    pub center: SteeringVector,
    pub upper: SteeringVector,
}

impl SteeringSet {
    /// Edges at `target ∓ width`, clamped to [0°, 180°].
    pub fn new(
        target_deg: f64,
        width_deg: f64,
        geometry: &ArrayGeometry,
        cfg: &StftConfig,
        sample_rate: u32,
    ) -> Result<Self> {
        if !(0.0..=180.0).contains(&target_deg) {
            return Err(Error::Config(format!("target {target_deg}° outside [0, 180]")));
        }
        if !(width_deg >= 0.0) {
            return Err(Error::Config(format!("width {width_deg}° must be non-negative")));
        }
        let [lo, mid, hi] = Self::azimuths(target_deg, width_deg);
        Ok(Self {
            lower: steering_vector(lo, geometry, cfg, sample_rate)?,
            center: steering_vector(mid, geometry, cfg, sample_rate)?,
            upper: steering_vector(hi, geometry, cfg, sample_rate)?,
        })
    }

    pub fn azimuths(target_deg: f64, width_deg: f64) -> [f64; 3] {
        [
            (target_deg - width_deg).clamp(0.0, 180.0),
            target_deg,
            (target_deg + width_deg).clamp(0.0, 180.0),
        ]
    }
}

/// Delay-and-sum outputs at the lower edge, the target and the upper edge.
pub fn triple_steering(
    mics: [&ComplexSpectrogram; 2],
    target_deg: f64,
    width_deg: f64,
    geometry: &ArrayGeometry,
) -> Result<[ComplexSpectrogram; 3]> {
    let set = SteeringSet::new(
        target_deg,
        width_deg,
        geometry,
        mics[0].config(),
        mics[0].sample_rate(),
    )?;
    Ok([
        das_beamform(mics, &set.lower)?,
        das_beamform(mics, &set.center)?,
        das_beamform(mics, &set.upper)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{stft, Waveform};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn geometry() -> ArrayGeometry {
        ArrayGeometry::default_at([2.0, 2.0, 1.5])
    }

    fn noise_spec(seed: u64) -> ComplexSpectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Waveform::new((0..4096).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16_000).unwrap();
        stft(&w, &StftConfig::default()).unwrap()
    }

    #[test]
    fn broadside_is_all_ones() {
        let sv = steering_vector(90.0, &geometry(), &StftConfig::default(), 16_000).unwrap();
        assert!(sv.delay().abs() < 1e-20);
        for w in sv.weights() {
            assert!((w[0] - 1.0).norm() < 1e-15 && (w[1] - 1.0).norm() < 1e-12);
        }
    }

    #[test]
    fn endfire_delays() {
        let cfg = StftConfig::default();
        let a = steering_vector(0.0, &geometry(), &cfg, 16_000).unwrap();
        let b = steering_vector(180.0, &geometry(), &cfg, 16_000).unwrap();
        // 0.03 / 343 s by hand.
        assert!((a.delay() - 87.46e-6).abs() < 0.01e-6);
        assert!((a.delay() + b.delay()).abs() < 1e-18);
    }

    #[test]
    fn weights_are_unit_modulus() {
        let sv = steering_vector(33.0, &geometry(), &StftConfig::default(), 16_000).unwrap();
        for w in sv.weights() {
            assert_eq!(w[0], Complex64::new(1.0, 0.0));
            assert!((w[1].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_channels_broadside_passthrough() {
        let s = noise_spec(1);
        let sv = steering_vector(90.0, &geometry(), s.config(), 16_000).unwrap();
        let y = das_beamform([&s, &s], &sv).unwrap();
        for (a, b) in y.bins().iter().zip(s.bins()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn out_of_phase_cancels() {
        let s = noise_spec(2);
        let neg = s.with_bins(s.bins().iter().map(|c| -c).collect()).unwrap();
        let sv = steering_vector(90.0, &geometry(), s.config(), 16_000).unwrap();
        let y = das_beamform([&s, &neg], &sv).unwrap();
        assert!(y.bins().iter().all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn das_rejects_mismatch() {
        let s = noise_spec(3);
        let short = stft(&Waveform::zeros(1024, 16_000), &StftConfig::default()).unwrap();
        let sv = steering_vector(90.0, &geometry(), s.config(), 16_000).unwrap();
        assert!(matches!(das_beamform([&s, &short], &sv), Err(Error::Dimension(_))));
    }

    #[test]
    fn triple_steering_azimuths() {
        assert_eq!(SteeringSet::azimuths(90.0, 7.0), [83.0, 90.0, 97.0]);
        assert_eq!(SteeringSet::azimuths(3.0, 7.0), [0.0, 3.0, 10.0]);
        assert_eq!(SteeringSet::azimuths(178.0, 7.0), [171.0, 178.0, 180.0]);
    }

    #[test]
    fn zero_width_gives_identical_beams() {
        let (a, b) = (noise_spec(4), noise_spec(5));
        let [lo, mid, hi] = triple_steering([&a, &b], 40.0, 0.0, &geometry()).unwrap();
        assert_eq!(lo, mid);
        assert_eq!(mid, hi);
    }

    #[test]
    fn width_changes_only_edges() {
        let (a, b) = (noise_spec(6), noise_spec(7));
        let [l1, c1, u1] = triple_steering([&a, &b], 70.0, 7.0, &geometry()).unwrap();
        let [l2, c2, u2] = triple_steering([&a, &b], 70.0, 20.0, &geometry()).unwrap();
        assert_eq!(c1, c2);
        assert_ne!(l1, l2);
        assert_ne!(u1, u2);
    }

    #[test]
    fn phase_slope_is_linear() {
        let cfg = StftConfig::default();
        for az in [0.0, 30.0, 60.0, 120.0] {
            let sv = steering_vector(az, &geometry(), &cfg, 16_000).unwrap();
            let slope = -2.0 * PI * sv.delay() * 16_000.0 / 512.0;
            for (k, w) in sv.weights().iter().enumerate() {
                let want = Complex64::from_polar(1.0, slope * k as f64);
                assert!((w[1] - want).norm() < 1e-9);
            }
        }
    }
}
