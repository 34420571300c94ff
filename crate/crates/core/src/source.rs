use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audio_io::Waveform;
use crate::error::{Error, Result};
use crate::stft::Spectrogram;

/// The four target instruments, in their canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Drums,
    Bass,
    Other,
    Vocals,
}

impl Source {
    pub const ALL: [Source; 4] = [Source::Drums, Source::Bass, Source::Other, Source::Vocals];

    pub fn name(self) -> &'static str {
        match self {
            Source::Drums => "drums",
            Source::Bass => "bass",
            Source::Other => "other",
            Source::Vocals => "vocals",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Source::Drums => "Drums",
            Source::Bass => "Bass",
            Source::Other => "Other",
            Source::Vocals => "Vocals",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Source::ALL
            .into_iter()
            .find(|src| src.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown source {s:?}")))
    }
}

/// Ordered per-source estimates sharing one shape.
///
/// Most of the toolkit works with the four canonical sources, but the
/// filtering and loss code accepts any non-empty count.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSet<T> {
    items: Vec<T>,
}

pub type SourceWaveformSet = SourceSet<Waveform>;
pub type SourceSpectrogramSet = SourceSet<Spectrogram>;

impl<T> SourceSet<T> {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.items.iter()
    }

    pub fn get(&self, j: usize) -> &T {
        &self.items[j]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.items
    }

    pub fn into_vec(self) -> Vec<T> {
        self.items
    }
}

impl<T> std::ops::Index<usize> for SourceSet<T> {
    type Output = T;

    fn index(&self, j: usize) -> &T {
        &self.items[j]
    }
}

impl<'a, T> IntoIterator for &'a SourceSet<T> {
    type Item = &'a T;
    type IntoIter = std::slice::Iter<'a, T>;

    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}

impl SourceSet<Waveform> {
    pub fn new(items: Vec<Waveform>) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::shape("source set is empty"))?;
        for w in &items[1..] {
            first.check_compatible(w)?;
        }
        Ok(Self { items })
    }

    pub fn channels(&self) -> usize {
        self.items[0].channels()
    }

    pub fn signal_len(&self) -> usize {
        self.items[0].len()
    }

    pub fn sample_rate(&self) -> u32 {
        self.items[0].sample_rate()
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::shape(format!(
                "{} vs {} sources",
                self.len(),
                other.len()
            )));
        }
        self.items[0].check_compatible(&other.items[0])
    }
}

impl SourceSet<Spectrogram> {
    pub fn new(items: Vec<Spectrogram>) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::shape("source set is empty"))?;
        for s in &items[1..] {
            if s.bins().dim() != first.bins().dim() {
                return Err(Error::shape(format!(
                    "spectrogram shapes {:?} and {:?}",
                    first.bins().dim(),
                    s.bins().dim()
                )));
            }
        }
        Ok(Self { items })
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.items[0].bins().dim()
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() || self.dim() != other.dim() {
            return Err(Error::shape(format!(
                "{} sources of {:?} vs {} sources of {:?}",
                self.len(),
                self.dim(),
                other.len(),
                other.dim()
            )));
        }
        Ok(())
    }
}

/// Per-source nonnegative magnitude tensors (`channels × frames × bins`).
pub type MagnitudeSet = SourceSet<ndarray::Array3<f64>>;

impl SourceSet<ndarray::Array3<f64>> {
    pub fn new(items: Vec<ndarray::Array3<f64>>) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::shape("source set is empty"))?;
        if let Some(m) = items.iter().find(|m| m.dim() != first.dim()) {
            return Err(Error::shape(format!(
                "magnitude shapes {:?} and {:?}",
                first.dim(),
                m.dim()
            )));
        }
        if items
            .iter()
            .flatten()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::InvalidConfig(
                "magnitudes must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { items })
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.items[0].dim()
    }
}
