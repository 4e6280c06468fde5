//! Waveforms, STFT analysis/synthesis and WAV I/O.

mod stft;
mod waveform;
pub mod wav;

pub use stft::{istft, make_hann, stft, ComplexSpectrogram, StftConfig};
pub(crate) use stft::{
    analysis_adjoint, analysis_frames, synthesis, synthesis_adjoint,
};
pub use waveform::{Mic, MultiChannelWaveform, Waveform};
