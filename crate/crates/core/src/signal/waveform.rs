use crate::{Error, Result};

/// Mono audio with a sample rate. Samples are finite; nominal range is [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Input(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        assert!(sample_rate > 0);
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Sum of squared samples.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Copy of `len` samples starting at `start`, zero-filled past the end.
    pub fn segment(&self, start: usize, len: usize) -> Self {
        let mut out = vec![0.0; len];
        if start < self.samples.len() {
            let n = len.min(self.samples.len() - start);
            out[..n].copy_from_slice(&self.samples[start..start + n]);
        }
        Self {
            samples: out,
            sample_rate: self.sample_rate,
        }
    }
}

/// One of the two microphones of the array. `First` sits on the 0° side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mic {
    First,
    Second,
}

impl Mic {
    /// Zero-based channel index.
    pub fn index(self) -> usize {
        match self {
            Mic::First => 0,
            Mic::Second => 1,
        }
    }

    /// One-based channel number as used in file formats and messages.
    pub fn number(self) -> usize {
        self.index() + 1
    }
}

/// Equal-length, equal-rate channels. Channel 0 is the first microphone.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelWaveform {
    channels: Vec<Waveform>,
}

impl MultiChannelWaveform {
    pub fn new(channels: Vec<Waveform>) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::Input("no channels".into()))?;
        let (len, rate) = (first.len(), first.sample_rate());
        for (i, ch) in channels.iter().enumerate() {
            if ch.len() != len {
                return Err(Error::Dimension(format!(
                    "channel {} has {} samples, expected {len}",
                    i + 1,
                    ch.len()
                )));
            }
            if ch.sample_rate() != rate {
                return Err(Error::Input(format!(
                    "channel {} has rate {} Hz, expected {rate} Hz",
                    i + 1,
                    ch.sample_rate()
                )));
            }
        }
        Ok(Self { channels })
    }

    pub fn stereo(first: Waveform, second: Waveform) -> Result<Self> {
        Self::new(vec![first, second])
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[Waveform] {
        &self.channels
    }

    pub fn channel(&self, index: usize) -> &Waveform {
        &self.channels[index]
    }

    pub fn mic(&self, mic: Mic) -> &Waveform {
        &self.channels[mic.index()]
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.channels[0].sample_rate()
    }

    pub fn into_channels(self) -> Vec<Waveform> {
        self.channels
    }

    pub fn require_stereo(&self) -> Result<()> {
        if self.channels.len() != 2 {
            return Err(Error::Input(format!(
                "expected 2 channels, got {}",
                self.channels.len()
            )));
        }
        Ok(())
    }

    pub fn segment(&self, start: usize, len: usize) -> Self {
        Self {
            channels: self.channels.iter().map(|c| c.segment(start, len)).collect(),
        }
    }
}
