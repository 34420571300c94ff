//! WAV stems: the exchange format with external separation models.
//!
//! Supports PCM16, PCM24 and IEEE float32 on read, PCM16 and float32 on
//! write. Unknown chunks are skipped.

use std::path::Path;

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

/// Multichannel signal, channel-major (`channels × length`).
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Array2<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Array2<f64>, sample_rate: u32) -> Result<Self> {
        if samples.nrows() == 0 {
            return Err(Error::shape("waveform needs at least one channel"));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if let Some(((channel, index), _)) = samples.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { channel, index });
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn from_channels(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        let n = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::shape("channels have different lengths"));
        }
        let rows = channels.len();
        let flat: Vec<f64> = channels.into_iter().flatten().collect();
        let samples =
            Array2::from_shape_vec((rows, n), flat).map_err(|e| Error::shape(e.to_string()))?;
        Self::new(samples, sample_rate)
    }

    pub fn zeros(channels: usize, length: usize, sample_rate: u32) -> Self {
        Self {
            samples: Array2::zeros((channels.max(1), length)),
            sample_rate: sample_rate.max(1),
        }
    }

    pub fn channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn channel(&self, c: usize) -> ArrayView1<'_, f64> {
        self.samples.row(c)
    }

    pub fn into_samples(self) -> Array2<f64> {
        self.samples
    }

    /// Applies `f` to the sample matrix. Results must stay finite.
    pub fn map_samples(&self, f: impl FnMut(&f64) -> f64) -> Result<Self> {
        Self::new(self.samples.map(f), self.sample_rate)
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    /// Zero-pads or truncates to `length` samples.
    pub fn fit_to_length(&self, length: usize) -> Self {
        let mut out = Array2::zeros((self.channels(), length));
        let n = length.min(self.len());
        out.slice_mut(ndarray::s![.., ..n])
            .assign(&self.samples.slice(ndarray::s![.., ..n]));
        Self {
            samples: out,
            sample_rate: self.sample_rate,
        }
    }

    /// Checks that `other` has the same channel count, length and rate.
    pub fn check_compatible(&self, other: &Waveform) -> Result<()> {
        if self.sample_rate != other.sample_rate {
            return Err(Error::SampleRateMismatch {
                expected: self.sample_rate,
                got: other.sample_rate,
            });
        }
        if self.channels() != other.channels() {
            return Err(Error::shape(format!(
                "{} vs {} channels",
                self.channels(),
                other.channels()
            )));
        }
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Encoding {
    Pcm16,
    #[default]
    Float32,
}

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes)
}

pub fn decode_wav(bytes: &[u8]) -> Result<Waveform> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::MalformedHeader("missing RIFF/WAVE signature".into()));
    }
    let mut pos = 12;
    let mut format: Option<Format> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 || body + size > bytes.len() {
                    return Err(Error::MalformedHeader("short fmt chunk".into()));
                }
                let f = &bytes[body..body + size];
                let mut tag = u16::from_le_bytes([f[0], f[1]]);
                if tag == FORMAT_EXTENSIBLE {
                    if size < 26 {
                        return Err(Error::MalformedHeader("short extensible fmt chunk".into()));
                    }
                    // first two bytes of the subformat GUID carry the real tag
                    tag = u16::from_le_bytes([f[24], f[25]]);
                }
                format = Some(Format {
                    tag,
                    channels: u16::from_le_bytes([f[2], f[3]]),
                    sample_rate: u32::from_le_bytes(f[4..8].try_into().unwrap()),
                    bits: u16::from_le_bytes([f[14], f[15]]),
                });
            }
            b"data" => {
                let fmt = format
                    .as_ref()
                    .ok_or_else(|| Error::MalformedHeader("data chunk before fmt chunk".into()))?;
                let available = bytes.len() - body;
                if size > available {
                    return Err(Error::TruncatedData {
                        declared: size,
                        available,
                    });
                }
                return decode_samples(fmt, &bytes[body..body + size]);
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body + size + (size & 1);
    }
    Err(Error::MalformedHeader("no data chunk".into()))
}

fn decode_samples(fmt: &Format, data: &[u8]) -> Result<Waveform> {
    let unsupported = Error::UnsupportedEncoding {
        format_tag: fmt.tag,
        bits: fmt.bits,
    };
    let decode: fn(&[u8]) -> f64 = match (fmt.tag, fmt.bits) {
        (FORMAT_PCM, 16) => |b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0,
        (FORMAT_PCM, 24) => |b| {
            let v = i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8;
            v as f64 / 8_388_608.0
        },
        (FORMAT_FLOAT, 32) => |b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
        _ => return Err(unsupported),
    };
    let channels = fmt.channels as usize;
    if channels == 0 {
        return Err(Error::MalformedHeader("zero channels".into()));
    }
    let width = fmt.bits as usize / 8;
    let frames = data.len() / (width * channels);
    let mut samples = Array2::zeros((channels, frames));
    for (i, frame) in data.chunks_exact(width * channels).enumerate() {
        for (c, s) in frame.chunks_exact(width).enumerate() {
            samples[[c, i]] = decode(s);
        }
    }
    Waveform::new(samples, fmt.sample_rate)
        .map_err(|_| Error::MalformedHeader("invalid sample rate or sample values".into()))
}

pub fn encode_wav(w: &Waveform, encoding: Encoding) -> Vec<u8> {
    let channels = w.channels();
    let (tag, bits) = match encoding {
        Encoding::Pcm16 => (FORMAT_PCM, 16u16),
        Encoding::Float32 => (FORMAT_FLOAT, 32u16),
    };
    let width = bits as usize / 8;
    let data_len = w.len() * channels * width;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&(channels as u16).to_le_bytes());
    out.extend_from_slice(&w.sample_rate().to_le_bytes());
    out.extend_from_slice(&(w.sample_rate() * (channels * width) as u32).to_le_bytes());
    out.extend_from_slice(&((channels * width) as u16).to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    let samples = w.samples();
    for i in 0..w.len() {
        for c in 0..channels {
            let v = samples[[c, i]];
            match encoding {
                Encoding::Pcm16 => {
                    let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    out.extend_from_slice(&q.to_le_bytes());
                }
                Encoding::Float32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            }
        }
    }
    out
}

/// Writes `w` to `path`. Float32 output round-trips exactly for samples that
/// are representable as `f32`; PCM16 rounds to the nearest step and clamps to
/// `[-1, 1 - 2^-15]`.
pub fn write_wav(w: &Waveform, path: impl AsRef<Path>, encoding: Encoding) -> Result<()> {
    write_atomic(path.as_ref(), &encode_wav(w, encoding))
}
