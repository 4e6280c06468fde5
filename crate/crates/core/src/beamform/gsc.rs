use num_complex::Complex64;

use super::{check_pair, SteeringVector};
use crate::signal::ComplexSpectrogram;
use crate::{Error, Result};

pub const GSC_MU: f64 = 0.1;
pub const GSC_EPS: f64 = 1e-6;

/// Per-bin one-tap complex NLMS canceller. One instance per audio stream.
#[derive(Debug, Clone)]
pub struct GscState {
    weights: Vec<Complex64>,
    mu: f64,
    eps: f64,
    resets: usize,
}

impl GscState {
    pub fn new(n_freq: usize, mu: f64, eps: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&mu) {
            return Err(Error::Config(format!("NLMS step {mu} outside [0, 1]")));
        }
        if !(eps > 0.0) {
            return Err(Error::Config(format!("NLMS regulariser {eps} must be positive")));
        }
        Ok(Self {
            weights: vec![Complex64::new(0.0, 0.0); n_freq],
            mu,
            eps,
            resets: 0,
        })
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    /// Number of times a bin's filter was reset after going non-finite.
    pub fn resets(&self) -> usize {
        self.resets
    }

    /// Processes one frame: `out = fixed - conj(w) · blocked`, then adapts.
    pub fn process_frame(&mut self, fixed: &[Complex64], blocked: &[Complex64], out: &mut [Complex64]) {
        for k in 0..self.weights.len() {
            let w = self.weights[k];
            let e = fixed[k] - w.conj() * blocked[k];
            out[k] = e;
            let next = w + blocked[k] * e.conj() * (self.mu / (blocked[k].norm_sqr() + self.eps));
            if next.re.is_finite() && next.im.is_finite() {
                self.weights[k] = next;
            } else {
                self.weights[k] = Complex64::new(0.0, 0.0);
                self.resets += 1;
            }
        }
    }
}

/// Fixed (delay-and-sum) and blocked (aligned difference) branches.
fn branches(mics: [&ComplexSpectrogram; 2], sv: &SteeringVector) -> (Vec<Complex64>, Vec<Complex64>) {
    let frames = mics[0].n_frames();
    mics[0]
        .bins()
        .iter()
        .zip(mics[1].bins())
        .enumerate()
        .map(|(i, (x1, x2))| {
            let a = &sv.weights()[i / frames];
            let (y1, y2) = (a[0].conj() * x1, a[1].conj() * x2);
            (0.5 * (y1 + y2), 0.5 * (y1 - y2))
        })
        .unzip()
}

fn frame(buf: &[Complex64], n_freq: usize, frames: usize, t: usize) -> Vec<Complex64> {
    (0..n_freq).map(|k| buf[k * frames + t]).collect()
}

fn run(
    mics: [&ComplexSpectrogram; 2],
    sv: &SteeringVector,
    mu: f64,
    eps: f64,
) -> Result<(ComplexSpectrogram, Vec<Vec<Complex64>>)> {
    check_pair(mics, sv)?;
    let (n_freq, frames) = (mics[0].n_freq(), mics[0].n_frames());
    let (fixed, blocked) = branches(mics, sv);
    let mut state = GscState::new(n_freq, mu, eps)?;
    let mut out = vec![Complex64::new(0.0, 0.0); fixed.len()];
    let mut trajectory = Vec::with_capacity(frames);
    let mut buf = vec![Complex64::new(0.0, 0.0); n_freq];
    for t in 0..frames {
        trajectory.push(state.weights().to_vec());
        state.process_frame(
            &frame(&fixed, n_freq, frames, t),
            &frame(&blocked, n_freq, frames, t),
            &mut buf,
        );
        for k in 0..n_freq {
            out[k * frames + t] = buf[k];
        }
    }
    Ok((mics[0].with_bins(out)?, trajectory))
}

/// Generalized sidelobe canceller steered by `sv`. Causal: frame `t` only
/// uses weights adapted on frames before `t`.
pub fn gsc_beamform(
    mics: [&ComplexSpectrogram; 2],
    sv: &SteeringVector,
    mu: f64,
    eps: f64,
) -> Result<ComplexSpectrogram> {
    Ok(run(mics, sv, mu, eps)?.0)
}

/// Filter weights in effect at each frame of [`gsc_beamform`].
pub fn gsc_weight_trajectory(
    mics: [&ComplexSpectrogram; 2],
    sv: &SteeringVector,
    mu: f64,
    eps: f64,
) -> Result<Vec<Vec<Complex64>>> {
    Ok(run(mics, sv, mu, eps)?.1)
}

/// Applies a recorded weight trajectory without adapting. Linear in the
/// input, so per-source contributions can be measured separately.
pub fn gsc_apply_weights(
    mics: [&ComplexSpectrogram; 2],
    sv: &SteeringVector,
    weights: &[Vec<Complex64>],
) -> Result<ComplexSpectrogram> {
    check_pair(mics, sv)?;
    let (n_freq, frames) = (mics[0].n_freq(), mics[0].n_frames());
    if weights.len() != frames || weights.iter().any(|w| w.len() != n_freq) {
        return Err(Error::Dimension("weight trajectory does not match the input".into()));
    }
    let (fixed, blocked) = branches(mics, sv);
    let out = (0..fixed.len())
        .map(|i| fixed[i] - weights[i % frames][i / frames].conj() * blocked[i])
        .collect();
    mics[0].with_bins(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamform::{das_beamform, steering_vector};
    use crate::room::ArrayGeometry;
    use crate::signal::{stft, StftConfig, Waveform};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(seed: u64) -> ComplexSpectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Waveform::new((0..4096).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16_000).unwrap();
        stft(&w, &StftConfig::default()).unwrap()
    }

    fn sv(az: f64) -> SteeringVector {
        steering_vector(az, &ArrayGeometry::default_at([2.0, 2.0, 1.5]), &StftConfig::default(), 16_000).unwrap()
    }

    #[test]
    fn zero_step_is_das_bit_for_bit() {
        let (a, b) = (noise(1), noise(2));
        let s = sv(60.0);
        assert_eq!(gsc_beamform([&a, &b], &s, 0.0, GSC_EPS).unwrap(), das_beamform([&a, &b], &s).unwrap());
    }

    #[test]
    fn coherent_target_passes_unchanged() {
        let a = noise(3);
        let s = sv(90.0);
        let g = gsc_beamform([&a, &a], &s, GSC_MU, GSC_EPS).unwrap();
        let d = das_beamform([&a, &a], &s).unwrap();
        assert_eq!(g, d);
    }

    #[test]
    fn rejects_bad_step() {
        assert!(GscState::new(4, 1.5, 1e-6).is_err());
        assert!(GscState::new(4, -0.1, 1e-6).is_err());
    }

    #[test]
    fn non_finite_state_resets() {
        let mut st = GscState::new(1, 0.5, 1e-6).unwrap();
        let mut out = [Complex64::new(0.0, 0.0)];
        st.process_frame(&[Complex64::new(f64::INFINITY, 0.0)], &[Complex64::new(1.0, 0.0)], &mut out);
        assert_eq!(st.resets(), 1);
        assert_eq!(st.weights()[0], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn replayed_weights_reproduce_output() {
        let (a, b) = (noise(4), noise(5));
        let s = sv(45.0);
        let w = gsc_weight_trajectory([&a, &b], &s, GSC_MU, GSC_EPS).unwrap();
        let direct = gsc_beamform([&a, &b], &s, GSC_MU, GSC_EPS).unwrap();
        let replay = gsc_apply_weights([&a, &b], &s, &w).unwrap();
        for (x, y) in direct.bins().iter().zip(replay.bins()) {
            assert!((x - y).norm() < 1e-12);
        }
    }
}
