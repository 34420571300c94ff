pub mod audio_io;
pub mod blend;
pub mod bsseval;
#[cfg(feature = "cli")]
pub mod cli;
pub mod error;
mod fsutil;
pub mod losses;
mod par;
pub mod pipeline;
pub mod source;
pub mod stft;
pub mod toy_models;
pub mod wiener;

pub use audio_io::{read_wav, write_wav, Encoding, Waveform};
pub use error::{Error, Result};
pub use source::{Source, SourceSet, SourceSpectrogramSet, SourceWaveformSet};
pub use stft::{istft, magnitude, stft, Spectrogram, StftConfig};
