use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::{Complex, Complex64};
use num_traits::Float;
use rustfft::{FftNum, FftPlanner};

use super::Waveform;
use crate::{Error, Result};

/// Periodic Hann window: `w[n] = 0.5 - 0.5 cos(2πn/N)`.
///
/// Sums to exactly one at every sample position when overlapped at half the
/// window length.
pub fn make_hann(window_size: usize) -> Result<Vec<f64>> {
    if window_size < 2 || window_size % 2 != 0 {
        return Err(Error::Config(format!(
            "Hann window size must be even and at least 2, got {window_size}"
        )));
    }
    let n = window_size as f64;
    Ok((0..window_size)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos())
        .collect())
}

/// Analysis window and framing. Construction checks the constant-overlap-add
/// property, so every valid config reconstructs perfectly.
#[derive(Debug, Clone, PartialEq)]
pub struct StftConfig {
    window: Arc<[f64]>,
    hop_size: usize,
    cola_gain: f64,
}

impl StftConfig {
    pub fn new(window: Vec<f64>, hop_size: usize) -> Result<Self> {
        let n = window.len();
        if n < 2 || n % 2 != 0 {
            return Err(Error::Config(format!(
                "window size must be even and at least 2, got {n}"
            )));
        }
        if hop_size == 0 || hop_size > n {
            return Err(Error::Config(format!(
                "hop size {hop_size} must lie in [1, {n}]"
            )));
        }
        if window.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("window has non-finite coefficients".into()));
        }
        let sums: Vec<f64> = (0..hop_size)
            .map(|p| window.iter().skip(p).step_by(hop_size).sum())
            .collect();
        let mean = sums.iter().sum::<f64>() / hop_size as f64;
        if mean <= 0.0 {
            return Err(Error::Config("window overlap-add sum is not positive".into()));
        }
        let worst = sums
            .iter()
            .map(|s| (s - mean).abs() / mean)
            .fold(0.0, f64::max);
        if worst > 1e-6 {
            return Err(Error::Config(format!(
                "window is not constant-overlap-add at hop {hop_size} (relative deviation {worst:.3e})"
            )));
        }
        Ok(Self {
            window: window.into(),
            hop_size,
            cola_gain: mean,
        })
    }

    /// Periodic Hann analysis at the given size and hop.
    pub fn hann(window_size: usize, hop_size: usize) -> Result<Self> {
        Self::new(make_hann(window_size)?, hop_size)
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn window_size(&self) -> usize {
        self.window.len()
    }

    pub fn hop_size(&self) -> usize {
        self.hop_size
    }

    pub fn n_freq(&self) -> usize {
        self.window.len() / 2 + 1
    }

    /// Overlap-add sum of the window, the reconstruction normaliser.
    pub fn cola_gain(&self) -> f64 {
        self.cola_gain
    }

    pub fn n_frames(&self, signal_len: usize) -> usize {
        frame_count(signal_len, self.window.len(), self.hop_size)
    }

    /// Centre frequency of bin `k` in Hz.
    pub fn bin_frequency(&self, k: usize, sample_rate: u32) -> f64 {
        k as f64 * sample_rate as f64 / self.window.len() as f64
    }
}

impl Default for StftConfig {
    fn default() -> Self {
        Self::hann(512, 256).expect("512/256 Hann is COLA")
    }
}

/// One-sided STFT, stored frequency-major: `bins[f * n_frames + t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    bins: Vec<Complex64>,
    n_frames: usize,
    config: StftConfig,
    sample_rate: u32,
    signal_len: usize,
}

impl ComplexSpectrogram {
    pub fn new(
        bins: Vec<Complex64>,
        n_frames: usize,
        config: StftConfig,
        sample_rate: u32,
        signal_len: usize,
    ) -> Result<Self> {
        let n_freq = config.n_freq();
        if bins.len() != n_freq * n_frames {
            return Err(Error::Dimension(format!(
                "expected {n_freq}x{n_frames} bins, got {}",
                bins.len()
            )));
        }
        if config.n_frames(signal_len) != n_frames {
            return Err(Error::Dimension(format!(
                "{n_frames} frames do not match a signal of {signal_len} samples"
            )));
        }
        Ok(Self {
            bins,
            n_frames,
            config,
            sample_rate,
            signal_len,
        })
    }

    /// Same geometry as `self` with new contents.
    pub fn with_bins(&self, bins: Vec<Complex64>) -> Result<Self> {
        Self::new(
            bins,
            self.n_frames,
            self.config.clone(),
            self.sample_rate,
            self.signal_len,
        )
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            bins: vec![Complex64::new(0.0, 0.0); self.bins.len()],
            ..self.clone()
        }
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn bins_mut(&mut self) -> &mut [Complex64] {
        &mut self.bins
    }

    pub fn get(&self, f: usize, t: usize) -> Complex64 {
        self.bins[f * self.n_frames + t]
    }

    pub fn n_freq(&self) -> usize {
        self.config.n_freq()
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_frames == other.n_frames
            && self.n_freq() == other.n_freq()
            && self.signal_len == other.signal_len
    }
}

/// Forward transform. The signal is left-padded with `window - hop` zeros
/// and frames advance by `hop`; the tail frame is zero-padded so that every
/// sample is covered by a full set of overlapping windows.
pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    if w.len() < cfg.window_size() {
        return Err(Error::Dimension(format!(
            "signal of {} samples is shorter than the {}-sample window",
            w.len(),
            cfg.window_size()
        )));
    }
    let (bins, n_frames) = analysis_frames(w.samples(), cfg.window(), cfg.hop_size());
    ComplexSpectrogram::new(bins, n_frames, cfg.clone(), w.sample_rate(), w.len())
}

/// Overlap-add inverse of [`stft`]; output length equals the analysed length.
pub fn istft(spec: &ComplexSpectrogram) -> Result<Waveform> {
    let cfg = spec.config();
    // Configs are validated on construction; re-check in case the window was
    // altered through a non-validating path.
    StftConfig::new(cfg.window().to_vec(), cfg.hop_size())?;
    let samples = synthesis(
        spec.bins(),
        spec.n_frames(),
        cfg.window_size(),
        cfg.hop_size(),
        cfg.cola_gain(),
        spec.signal_len(),
    );
    Waveform::new(samples, spec.sample_rate())
}

pub(crate) fn frame_count(len: usize, window: usize, hop: usize) -> usize {
    (len + window - hop - 1) / hop + 1
}

fn pad_left(window: usize, hop: usize) -> usize {
    window - hop
}

fn from_f64<T: Float>(v: f64) -> T {
    T::from(v).expect("float conversion")
}

/// Windowed one-sided DFT of every frame, frequency-major.
pub(crate) fn analysis_frames<T: FftNum + Float>(
    x: &[T],
    window: &[f64],
    hop: usize,
) -> (Vec<Complex<T>>, usize) {
    let n = window.len();
    let n_freq = n / 2 + 1;
    let pad = pad_left(n, hop);
    let n_frames = frame_count(x.len(), n, hop);
    let fft = FftPlanner::<T>::new().plan_fft_forward(n);
    let win: Vec<T> = window.iter().map(|&w| from_f64(w)).collect();
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
    let mut out = vec![Complex::new(T::zero(), T::zero()); n_freq * n_frames];
    for t in 0..n_frames {
        for (m, b) in buf.iter_mut().enumerate() {
            let p = t * hop + m;
            let v = if p >= pad && p - pad < x.len() {
                x[p - pad] * win[m]
            } else {
                T::zero()
            };
            *b = Complex::new(v, T::zero());
        }
        fft.process(&mut buf);
        for k in 0..n_freq {
            out[k * n_frames + t] = buf[k];
        }
    }
    (out, n_frames)
}

/// Adjoint of [`analysis_frames`] with respect to the real input signal,
/// treating each bin as an independent (re, im) pair.
pub(crate) fn analysis_adjoint<T: FftNum + Float>(
    grad: &[Complex<T>],
    n_frames: usize,
    window: &[f64],
    hop: usize,
    len: usize,
) -> Vec<T> {
    let n = window.len();
    let n_freq = n / 2 + 1;
    let pad = pad_left(n, hop);
    let ifft = FftPlanner::<T>::new().plan_fft_inverse(n);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
    let mut gx = vec![T::zero(); len];
    for t in 0..n_frames {
        for b in buf.iter_mut() {
            *b = Complex::new(T::zero(), T::zero());
        }
        for k in 0..n_freq {
            buf[k] = grad[k * n_frames + t];
        }
        ifft.process(&mut buf);
        for (m, b) in buf.iter().enumerate() {
            let p = t * hop + m;
            if p >= pad && p - pad < len {
                gx[p - pad] = gx[p - pad] + b.re * from_f64(window[m]);
            }
        }
    }
    gx
}

/// Inverse DFT of each frame followed by overlap-add and cropping back to
/// `len` samples.
pub(crate) fn synthesis<T: FftNum + Float>(
    bins: &[Complex<T>],
    n_frames: usize,
    n: usize,
    hop: usize,
    cola_gain: f64,
    len: usize,
) -> Vec<T> {
    let n_freq = n / 2 + 1;
    let pad = pad_left(n, hop);
    let ifft = FftPlanner::<T>::new().plan_fft_inverse(n);
    let scale: T = from_f64(1.0 / (n as f64 * cola_gain));
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
    let mut y = vec![T::zero(); len];
    for t in 0..n_frames {
        for k in 0..n_freq {
            buf[k] = bins[k * n_frames + t];
        }
        for k in 1..n - n_freq + 1 {
            buf[n - k] = buf[k].conj();
        }
        ifft.process(&mut buf);
        for (m, b) in buf.iter().enumerate() {
            let p = t * hop + m;
            if p >= pad && p - pad < len {
                y[p - pad] = y[p - pad] + b.re * scale;
            }
        }
    }
    y
}

/// Adjoint of [`synthesis`] with respect to the (re, im) parts of every bin.
/// The imaginary parts of the DC and Nyquist bins do not reach the output,
/// so their gradient is zero.
pub(crate) fn synthesis_adjoint<T: FftNum + Float>(
    grad: &[T],
    n_frames: usize,
    n: usize,
    hop: usize,
    cola_gain: f64,
) -> Vec<Complex<T>> {
    let n_freq = n / 2 + 1;
    let pad = pad_left(n, hop);
    let len = grad.len();
    let fft = FftPlanner::<T>::new().plan_fft_forward(n);
    let base = 1.0 / (n as f64 * cola_gain);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
    let mut out = vec![Complex::new(T::zero(), T::zero()); n_freq * n_frames];
    for t in 0..n_frames {
        for (m, b) in buf.iter_mut().enumerate() {
            let p = t * hop + m;
            let g = if p >= pad && p - pad < len {
                grad[p - pad]
            } else {
                T::zero()
            };
            *b = Complex::new(g, T::zero());
        }
        fft.process(&mut buf);
        for k in 0..n_freq {
            let edge = k == 0 || k == n / 2;
            let c: T = from_f64(if edge { base } else { 2.0 * base });
            let v = buf[k];
            out[k * n_frames + t] = if edge {
                Complex::new(v.re * c, T::zero())
            } else {
                Complex::new(v.re * c, v.im * c)
            };
        }
    }
    out
}
