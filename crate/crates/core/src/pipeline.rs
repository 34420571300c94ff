//! End-to-end flow: mixture → per-model stems → fused stems.
//!
//! Spectrogram-domain models contribute magnitudes that are turned into
//! complex stems by the multichannel Wiener filter and inverted; waveform
//! models contribute stems directly. The per-model outputs are then blended.

use std::path::{Path, PathBuf};

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::audio_io::{read_wav, Waveform};
use crate::blend::{blend, validate_weights, BlendWeights, RawWeights};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::par::map_indexed;
use crate::source::{MagnitudeSet, Source, SourceWaveformSet};
use crate::stft::{istft, magnitude, stft, StftConfig};
use crate::toy_models::{
    band_mask_separate, band_split_waveforms, multi_decoder_forward, BandMaskModel,
    MultiDecoderSpec, ToyParams,
};
use crate::wiener::{mwf, MwfConfig};

pub const DSMAG_MAGIC: &[u8; 6] = b"DSMAG1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    T,
    TF,
}

/// Where a model's output comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSource {
    /// Built-in band-splitting mask model.
    BandMask {
        #[serde(default)]
        band_starts_hz: Option<Vec<f64>>,
        #[serde(default)]
        leakage: f64,
    },
    /// Built-in seeded convolutional network.
    MultiDecoder {
        spec: MultiDecoderSpec,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        bias_scale: f64,
    },
    /// Precomputed outputs: `<source>.wav` per source, or `<source>.dsmag`
    /// magnitudes for spectrogram-domain entries.
    Stems { dir: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub name: String,
    pub domain: Domain,
    pub source: ModelSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPipelineConfig {
    models: Vec<ModelEntry>,
    #[serde(default)]
    stft: StftConfig,
    #[serde(default)]
    mwf: MwfConfig,
    #[serde(default)]
    weights: Option<RawWeights>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub models: Vec<ModelEntry>,
    pub stft: StftConfig,
    pub mwf: MwfConfig,
    pub weights: BlendWeights,
}

impl PipelineConfig {
    pub fn new(
        models: Vec<ModelEntry>,
        stft: StftConfig,
        mwf: MwfConfig,
        weights: BlendWeights,
    ) -> Result<Self> {
        let cfg = Self {
            models,
            stft,
            mwf,
            weights,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        self.mwf.validate()?;
        if self.models.len() != self.weights.model_count() {
            return Err(Error::WeightModelMismatch {
                models: self.models.len(),
                weights: self.weights.model_count(),
            });
        }
        if let Some((m, w)) = self
            .models
            .iter()
            .zip(self.weights.models())
            .find(|(m, w)| &m.name != *w)
        {
            return Err(Error::InvalidConfig(format!(
                "model '{}' does not match weight row '{}'",
                m.name, w
            )));
        }
        Ok(())
    }

    /// Parses a config; relative stem directories resolve against `base_dir`.
    /// Without a `weights` entry the shipped fusion weights are used.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawPipelineConfig = serde_json::from_str(text).map_err(|source| Error::Json {
            context: "pipeline config".into(),
            source,
        })?;
        let weights = match raw.weights {
            Some(w) => validate_weights(w)?,
            None => BlendWeights::default_fusion(),
        };
        let models = raw
            .models
            .into_iter()
            .map(|mut m| {
                if let ModelSource::Stems { dir } = &mut m.source {
                    if dir.is_relative() {
                        *dir = base_dir.join(&*dir);
                    }
                }
                m
            })
            .collect();
        Self::new(models, raw.stft, raw.mwf, weights)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_json(&self) -> String {
        let raw = RawPipelineConfig {
            models: self.models.clone(),
            stft: self.stft,
            mwf: self.mwf,
            weights: Some(self.weights.raw().clone()),
        };
        serde_json::to_string_pretty(&raw).expect("config serializes")
    }

    /// Sources produced by the pipeline, in weight-column order.
    pub fn sources(&self) -> &[Source] {
        self.weights.sources()
    }
}

/// Output of one model before the blend.
enum ModelOutput {
    Stems(SourceWaveformSet),
    Magnitudes(MagnitudeSet),
}

/// Runs every model branch, then blends.
pub fn run(mix: &Waveform, cfg: &PipelineConfig) -> Result<SourceWaveformSet> {
    let per_model = model_stems(mix, cfg)?;
    blend(&per_model, &cfg.weights)
}

/// Per-model stems after the Wiener stage, in model order.
pub fn model_stems(mix: &Waveform, cfg: &PipelineConfig) -> Result<Vec<SourceWaveformSet>> {
    cfg.validate()?;
    map_indexed(cfg.models.len(), |m| branch(mix, &cfg.models[m], cfg))
        .into_iter()
        .collect()
}

fn branch(mix: &Waveform, entry: &ModelEntry, cfg: &PipelineConfig) -> Result<SourceWaveformSet> {
    let sources = cfg.sources();
    let output = produce(mix, entry, cfg)?;
    let set = match (entry.domain, output) {
        (Domain::T, ModelOutput::Stems(s)) => s,
        (Domain::T, ModelOutput::Magnitudes(_)) => {
            return Err(Error::InvalidConfig(format!(
                "waveform-domain model '{}' supplied magnitudes",
                entry.name
            )))
        }
        (Domain::TF, out) => {
            let spec = stft(mix, &cfg.stft)?;
            let mags = match out {
                ModelOutput::Magnitudes(m) => m,
                ModelOutput::Stems(s) => MagnitudeSet::new(
                    s.iter()
                        .map(|w| Ok(magnitude(&stft(w, &cfg.stft)?)))
                        .collect::<Result<Vec<_>>>()?,
                )?,
            };
            let filtered = mwf(&mags, &spec, &cfg.mwf.relative_to(&spec))?;
            SourceWaveformSet::new(
                filtered
                    .iter()
                    .map(|s| istft(s, &cfg.stft, mix.len()))
                    .collect::<Result<Vec<_>>>()?,
            )?
        }
    };
    if set.len() != sources.len() {
        return Err(Error::shape(format!(
            "model '{}' produced {} stems for {} sources",
            entry.name,
            set.len(),
            sources.len()
        )));
    }
    Ok(set)
}

fn produce(mix: &Waveform, entry: &ModelEntry, cfg: &PipelineConfig) -> Result<ModelOutput> {
    match &entry.source {
        ModelSource::BandMask {
            band_starts_hz,
            leakage,
        } => {
            let model = match band_starts_hz {
                Some(starts) => BandMaskModel::new(starts.clone(), *leakage)?,
                None => BandMaskModel::with_leakage(*leakage)?,
            };
            match entry.domain {
                Domain::TF => Ok(ModelOutput::Magnitudes(
                    band_mask_separate(mix, &model, &cfg.stft)?.0,
                )),
                Domain::T => Ok(ModelOutput::Stems(band_split_waveforms(
                    mix, &model, &cfg.stft,
                )?)),
            }
        }
        ModelSource::MultiDecoder {
            spec,
            seed,
            bias_scale,
        } => Ok(ModelOutput::Stems(multi_decoder_forward(
            mix,
            spec,
            ToyParams {
                seed: *seed,
                bias_scale: *bias_scale,
            },
        )?)),
        ModelSource::Stems { dir } => {
            load_stem_dir(dir, cfg.sources(), entry.domain, mix, &cfg.stft)
        }
    }
}

fn load_stem_dir(
    dir: &Path,
    sources: &[Source],
    domain: Domain,
    mix: &Waveform,
    stft_cfg: &StftConfig,
) -> Result<ModelOutput> {
    let dsmag = |s: &Source| dir.join(format!("{}.dsmag", s.name()));
    if domain == Domain::TF && sources.iter().all(|s| dsmag(s).is_file()) {
        let expected = (
            mix.channels(),
            stft_cfg.frame_count(mix.len()),
            stft_cfg.bins(),
        );
        let mags = sources
            .iter()
            .map(|s| fit_magnitudes(read_dsmag(dsmag(s))?, expected))
            .collect::<Result<Vec<_>>>()?;
        return Ok(ModelOutput::Magnitudes(MagnitudeSet::new(mags)?));
    }
    let stems = sources
        .iter()
        .map(|s| load_stem(dir, *s, mix, stft_cfg.hop))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelOutput::Stems(SourceWaveformSet::new(stems)?))
}

/// Reads `<dir>/<source>.wav` and conforms it to the mixture: lengths within
/// `tolerance` samples are zero-padded or truncated.
pub fn load_stem(dir: &Path, source: Source, mix: &Waveform, tolerance: usize) -> Result<Waveform> {
    let path = dir.join(format!("{}.wav", source.name()));
    if !path.is_file() {
        return Err(Error::MissingStem {
            dir: dir.to_path_buf(),
            stem: format!("{}.wav", source.name()),
        });
    }
    let w = read_wav(&path)?;
    if w.sample_rate() != mix.sample_rate() {
        return Err(Error::SampleRateMismatch {
            expected: mix.sample_rate(),
            got: w.sample_rate(),
        });
    }
    if w.channels() != mix.channels() {
        return Err(Error::shape(format!(
            "{} has {} channels, mixture has {}",
            path.display(),
            w.channels(),
            mix.channels()
        )));
    }
    if w.len().abs_diff(mix.len()) > tolerance {
        return Err(Error::LengthMismatch {
            expected: mix.len(),
            got: w.len(),
        });
    }
    Ok(w.fit_to_length(mix.len()))
}

fn fit_magnitudes(
    m: Array3<f64>,
    (channels, frames, bins): (usize, usize, usize),
) -> Result<Array3<f64>> {
    let (c, t, k) = m.dim();
    if c != channels || k != bins || t.abs_diff(frames) > 1 {
        return Err(Error::shape(format!(
            "magnitudes are {c}x{t}x{k}, expected {channels}x{frames}x{bins}"
        )));
    }
    Ok(Array3::from_shape_fn((c, frames, k), |(ci, ti, ki)| {
        if ti < t {
            m[[ci, ti, ki]]
        } else {
            0.0
        }
    }))
}

/// Serializes magnitudes as DSMAG1: the magic, channels, frames and bins as
/// little-endian u32, then float32 values with bins varying fastest.
pub fn encode_dsmag(m: &Array3<f64>) -> Result<Vec<u8>> {
    let (c, t, k) = m.dim();
    let mut out = Vec::with_capacity(18 + 4 * m.len());
    out.extend_from_slice(DSMAG_MAGIC);
    for d in [c, t, k] {
        let d = u32::try_from(d)
            .map_err(|_| Error::MalformedMagnitudes(format!("dimension {d} too large")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in m.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_dsmag(bytes: &[u8]) -> Result<Array3<f64>> {
    if bytes.len() < 18 || &bytes[..6] != DSMAG_MAGIC {
        return Err(Error::MalformedMagnitudes("missing DSMAG1 header".into()));
    }
    let dim =
        |i: usize| u32::from_le_bytes(bytes[6 + 4 * i..10 + 4 * i].try_into().unwrap()) as usize;
    let (c, t, k) = (dim(0), dim(1), dim(2));
    let count = c
        .checked_mul(t)
        .and_then(|n| n.checked_mul(k))
        .ok_or_else(|| Error::MalformedMagnitudes("dimensions overflow".into()))?;
    let body = &bytes[18..];
    if body.len() != count * 4 {
        return Err(Error::MalformedMagnitudes(format!(
            "expected {} value bytes, found {}",
            count * 4,
            body.len()
        )));
    }
    let values: Vec<f64> = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::MalformedMagnitudes(format!(
            "value {} at index {i}",
            values[i]
        )));
    }
    Array3::from_shape_vec((c, t, k), values).map_err(|e| Error::MalformedMagnitudes(e.to_string()))
}

pub fn read_dsmag(path: impl AsRef<Path>) -> Result<Array3<f64>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dsmag(&bytes)
}

pub fn write_dsmag(m: &Array3<f64>, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_dsmag(m)?)
}
