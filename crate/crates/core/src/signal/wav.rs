//! RIFF/WAVE reading and writing. Only 16-bit PCM and 32-bit IEEE float,
//! mono or stereo, are accepted.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{MultiChannelWaveform, Waveform};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavFormat {
    #[default]
    Pcm16,
    Float32,
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<MultiChannelWaveform> {
    let path = path.as_ref();
    let reader = WavReader::open(path)
        .map_err(|e| Error::Wav(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(Error::Wav(format!(
            "{}: {} channels; only mono and stereo are supported",
            path.display(),
            spec.channels
        )));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()?,
        (fmt, bits) => {
            let kind = match fmt {
                SampleFormat::Int => "integer PCM",
                SampleFormat::Float => "IEEE float",
            };
            return Err(Error::Wav(format!(
                "{}: unsupported encoding {bits}-bit {kind}; expected 16-bit PCM or 32-bit float",
                path.display()
            )));
        }
    };
    let n_ch = spec.channels as usize;
    let channels = (0..n_ch)
        .map(|c| {
            Waveform::new(
                interleaved.iter().skip(c).step_by(n_ch).copied().collect(),
                spec.sample_rate,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    MultiChannelWaveform::new(channels)
}

pub fn write_wav(
    path: impl AsRef<Path>,
    audio: &MultiChannelWaveform,
    format: WavFormat,
) -> Result<()> {
    if audio.num_channels() > 2 {
        return Err(Error::Wav(format!(
            "cannot write {} channels; only mono and stereo are supported",
            audio.num_channels()
        )));
    }
    let (bits, sample_format) = match format {
        WavFormat::Pcm16 => (16, SampleFormat::Int),
        WavFormat::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: audio.num_channels() as u16,
        sample_rate: audio.sample_rate(),
        bits_per_sample: bits,
        sample_format,
    };
    let mut writer = WavWriter::create(path.as_ref(), spec)?;
    for i in 0..audio.len() {
        for ch in audio.channels() {
            let v = ch.samples()[i];
            match format {
                WavFormat::Pcm16 => {
                    let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    writer.write_sample(q)?;
                }
                WavFormat::Float32 => writer.write_sample(v as f32)?,
            }
        }
    }
    writer.finalize()?;
    Ok(())
}

pub fn write_mono(path: impl AsRef<Path>, audio: &Waveform, format: WavFormat) -> Result<()> {
    write_wav(path, &MultiChannelWaveform::new(vec![audio.clone()])?, format)
}
