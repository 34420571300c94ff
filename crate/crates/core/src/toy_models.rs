//! Stand-in separation models: a band-splitting mask model for the
//! spectrogram path, and a seeded multi-decoder convolutional net used to
//! check decoder parameter arithmetic.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio_io::Waveform;
use crate::error::{Error, Result};
use crate::source::{MagnitudeSet, SourceWaveformSet};
use crate::stft::{istft, magnitude, stft, Spectrogram, StftConfig};

/// Assigns each frequency bin to one source by band, blending in `leakage`
/// of a uniform mask.
///
/// Source `j` owns `[band_starts_hz[j], next higher start)`; the highest band
/// runs to Nyquist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandMaskModel {
    pub band_starts_hz: Vec<f64>,
    pub leakage: f64,
}

impl Default for BandMaskModel {
    /// drums 250 Hz–2 kHz, bass below 250 Hz, other 2–8 kHz, vocals above 8 kHz.
    fn default() -> Self {
        Self {
            band_starts_hz: vec![250.0, 0.0, 2000.0, 8000.0],
            leakage: 0.0,
        }
    }
}

impl BandMaskModel {
    pub fn new(band_starts_hz: Vec<f64>, leakage: f64) -> Result<Self> {
        let model = Self {
            band_starts_hz,
            leakage,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_leakage(leakage: f64) -> Result<Self> {
        Self::new(Self::default().band_starts_hz, leakage)
    }

    pub fn sources(&self) -> usize {
        self.band_starts_hz.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.band_starts_hz.is_empty() {
            return Err(Error::InvalidConfig(
                "band model needs at least one band".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.leakage) {
            return Err(Error::InvalidConfig(format!(
                "leakage {} outside [0, 1)",
                self.leakage
            )));
        }
        let mut starts = self.band_starts_hz.clone();
        if starts.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidConfig(
                "band starts must be finite and >= 0".into(),
            ));
        }
        starts.sort_by(f64::total_cmp);
        if starts[0] != 0.0 {
            return Err(Error::InvalidConfig(
                "lowest band must start at 0 Hz".into(),
            ));
        }
        if starts.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("band starts must be distinct".into()));
        }
        Ok(())
    }

    /// Source owning frequency `hz`.
    pub fn owner(&self, hz: f64) -> usize {
        let mut best = 0;
        let mut best_start = f64::NEG_INFINITY;
        for (j, &s) in self.band_starts_hz.iter().enumerate() {
            if s <= hz && s > best_start {
                best = j;
                best_start = s;
            }
        }
        best
    }

    /// Mask value per source for frequency `hz`; sums to one.
    pub fn mask(&self, hz: f64) -> Vec<f64> {
        let j_count = self.sources();
        let floor = self.leakage / j_count as f64;
        let owner = self.owner(hz);
        (0..j_count)
            .map(|j| {
                if j == owner {
                    1.0 - self.leakage + floor
                } else {
                    floor
                }
            })
            .collect()
    }

    fn masks_for(&self, mix: &Spectrogram) -> Vec<Vec<f64>> {
        (0..mix.config().bins())
            .map(|k| self.mask(mix.bin_frequency(k)))
            .collect()
    }
}

/// Per-source magnitudes `mask_j · |X|` and the mixture spectrogram.
pub fn band_mask_separate(
    mix: &Waveform,
    model: &BandMaskModel,
    cfg: &StftConfig,
) -> Result<(MagnitudeSet, Spectrogram)> {
    model.validate()?;
    let spec = stft(mix, cfg)?;
    let mag = magnitude(&spec);
    let masks = model.masks_for(&spec);
    let mags = (0..model.sources())
        .map(|j| {
            let mut m = mag.clone();
            for ((_, _, k), v) in m.indexed_iter_mut() {
                *v *= masks[k][j];
            }
            m
        })
        .collect();
    Ok((MagnitudeSet::new(mags)?, spec))
}

/// Waveform-domain variant: the band masks applied to the complex mixture
/// spectrogram and inverted.
pub fn band_split_waveforms(
    mix: &Waveform,
    model: &BandMaskModel,
    cfg: &StftConfig,
) -> Result<SourceWaveformSet> {
    model.validate()?;
    let spec = stft(mix, cfg)?;
    let masks = model.masks_for(&spec);
    let stems = (0..model.sources())
        .map(|j| {
            let mut bins = spec.bins().clone();
            for ((_, _, k), z) in bins.indexed_iter_mut() {
                *z *= masks[k][j];
            }
            istft(&spec.with_bins(bins)?, cfg, mix.len())
        })
        .collect::<Result<Vec<_>>>()?;
    SourceWaveformSet::new(stems)
}

/// Shape of a convolutional encoder with one or several decoders.
///
/// Encoder layer `i` maps `encoder_channels[i - 1]` (the audio channels for
/// `i = 0`) to `encoder_channels[i]` with stride `stride`. Every decoder
/// starts with a pointwise adapter from the encoder bottleneck to
/// `decoder_channels[0]`, walks `decoder_channels` with upsampling
/// convolutions, and ends in a layer producing `audio_channels · sources /
/// num_decoders` channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiDecoderSpec {
    pub audio_channels: usize,
    pub sources: usize,
    pub encoder_channels: Vec<usize>,
    pub decoder_channels: Vec<usize>,
    pub num_decoders: usize,
    pub kernel_size: usize,
    pub stride: usize,
}

impl MultiDecoderSpec {
    /// Six-level encoder of width 48 with a single shared decoder.
    pub fn single_decoder(width: usize) -> Self {
        let enc: Vec<usize> = (0..6).map(|i| width << i).collect();
        Self {
            audio_channels: 2,
            sources: 4,
            decoder_channels: enc.iter().rev().copied().collect(),
            encoder_channels: enc,
            num_decoders: 1,
            kernel_size: 8,
            stride: 4,
        }
    }

    /// Same encoder, one decoder per source with `decoder_width` base width.
    pub fn per_source_decoders(width: usize, decoder_width: usize) -> Self {
        let mut spec = Self::single_decoder(width);
        spec.decoder_channels = (0..6).rev().map(|i| decoder_width << i).collect();
        spec.num_decoders = spec.sources;
        spec
    }

    pub fn layers(&self) -> usize {
        self.encoder_channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: &[usize]| !v.is_empty() && v.iter().all(|&c| c > 0);
        if !positive(&self.encoder_channels) || !positive(&self.decoder_channels) {
            return Err(Error::InvalidConfig(
                "channel widths must be positive".into(),
            ));
        }
        if self.decoder_channels.len() != self.encoder_channels.len() {
            return Err(Error::InvalidConfig(
                "encoder and decoder depth differ".into(),
            ));
        }
        if self.audio_channels == 0
            || self.sources == 0
            || self.kernel_size == 0
            || self.stride == 0
        {
            return Err(Error::InvalidConfig("sizes must be positive".into()));
        }
        if self.num_decoders != 1 && self.num_decoders != self.sources {
            return Err(Error::InvalidConfig(format!(
                "num_decoders must be 1 or {}",
                self.sources
            )));
        }
        Ok(())
    }

    fn decoder_out_channels(&self) -> usize {
        self.audio_channels * self.sources / self.num_decoders
    }

    /// `(c_in, c_out, kernel)` for every encoder layer.
    fn encoder_layers(&self) -> Vec<(usize, usize, usize)> {
        let mut prev = self.audio_channels;
        self.encoder_channels
            .iter()
            .map(|&c| {
                let layer = (prev, c, self.kernel_size);
                prev = c;
                layer
            })
            .collect()
    }

    fn adapter_layer(&self) -> (usize, usize, usize) {
        (
            *self.encoder_channels.last().unwrap(),
            self.decoder_channels[0],
            1,
        )
    }

    fn interior_layers(&self) -> Vec<(usize, usize, usize)> {
        self.decoder_channels
            .windows(2)
            .map(|w| (w[0], w[1], self.kernel_size))
            .collect()
    }

    fn output_layer(&self) -> (usize, usize, usize) {
        (
            *self.decoder_channels.last().unwrap(),
            self.decoder_out_channels(),
            self.kernel_size,
        )
    }
}

/// Parameter counts by section, decoders already multiplied by their count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBreakdown {
    pub encoder: usize,
    pub decoder_adapter: usize,
    pub decoder_interior_weights: usize,
    pub decoder_interior_biases: usize,
    pub decoder_output: usize,
    pub total: usize,
}

fn layer_params((c_in, c_out, k): (usize, usize, usize)) -> (usize, usize) {
    (c_out * c_in * k, c_out)
}

pub fn param_breakdown(spec: &MultiDecoderSpec) -> Result<ParamBreakdown> {
    spec.validate()?;
    let sum = |layers: &[(usize, usize, usize)]| -> (usize, usize) {
        layers.iter().fold((0, 0), |(w, b), &l| {
            let (lw, lb) = layer_params(l);
            (w + lw, b + lb)
        })
    };
    let d = spec.num_decoders;
    let (ew, eb) = sum(&spec.encoder_layers());
    let (aw, ab) = layer_params(spec.adapter_layer());
    let (iw, ib) = sum(&spec.interior_layers());
    let (ow, ob) = layer_params(spec.output_layer());
    let encoder = ew + eb;
    let decoder_adapter = d * (aw + ab);
    let decoder_output = d * (ow + ob);
    let total = encoder + decoder_adapter + d * (iw + ib) + decoder_output;
    Ok(ParamBreakdown {
        encoder,
        decoder_adapter,
        decoder_interior_weights: d * iw,
        decoder_interior_biases: d * ib,
        decoder_output,
        total,
    })
}

/// Total parameters of the convolutional stack: `C_out·C_in·k + C_out` per
/// layer, decoder layers counted once per decoder.
pub fn conv_param_count(spec: &MultiDecoderSpec) -> Result<usize> {
    Ok(param_breakdown(spec)?.total)
}

/// Deterministic initialization for [`multi_decoder_forward`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyParams {
    pub seed: u64,
    /// Biases are drawn from `±bias_scale`; zero gives zero biases.
    pub bias_scale: f64,
}

impl Default for ToyParams {
    fn default() -> Self {
        Self {
            seed: 0,
            bias_scale: 0.01,
        }
    }
}

struct Conv {
    c_in: usize,
    c_out: usize,
    kernel: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl Conv {
    fn random(
        (c_in, c_out, kernel): (usize, usize, usize),
        rng: &mut ChaCha8Rng,
        bias_scale: f64,
    ) -> Self {
        let bound = 1.0 / ((c_in * kernel) as f64).sqrt();
        let weight = (0..c_out * c_in * kernel)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        let bias = (0..c_out)
            .map(|_| {
                if bias_scale > 0.0 {
                    rng.gen_range(-bias_scale..=bias_scale)
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            c_in,
            c_out,
            kernel,
            weight,
            bias,
        }
    }

    /// Strided convolution; output sample `t` is centered on input `t·stride`.
    fn apply(&self, x: &Array2<f64>, stride: usize, relu: bool) -> Array2<f64> {
        let len = x.ncols();
        let out_len = len / stride;
        let offset = self.kernel as isize / 2;
        let mut out = Array2::zeros((self.c_out, out_len));
        for o in 0..self.c_out {
            for t in 0..out_len {
                let mut acc = self.bias[o];
                for c in 0..self.c_in {
                    let w = &self.weight[(o * self.c_in + c) * self.kernel..][..self.kernel];
                    for (k, wk) in w.iter().enumerate() {
                        let idx = (t * stride) as isize + k as isize - offset;
                        if idx >= 0 && (idx as usize) < len {
                            acc += wk * x[[c, idx as usize]];
                        }
                    }
                }
                out[[o, t]] = if relu { acc.max(0.0) } else { acc };
            }
        }
        out
    }
}

fn upsample(x: &Array2<f64>, factor: usize) -> Array2<f64> {
    Array2::from_shape_fn((x.nrows(), x.ncols() * factor), |(c, t)| x[[c, t / factor]])
}

/// Runs the seeded network on `mix` and returns one stem per source, each
/// the length of the input. The input is zero-padded to a multiple of
/// `stride^layers` and the output cropped back.
pub fn multi_decoder_forward(
    mix: &Waveform,
    spec: &MultiDecoderSpec,
    params: ToyParams,
) -> Result<SourceWaveformSet> {
    spec.validate()?;
    if mix.channels() != spec.audio_channels {
        return Err(Error::shape(format!(
            "network expects {} channels, got {}",
            spec.audio_channels,
            mix.channels()
        )));
    }
    let block = spec
        .stride
        .checked_pow(spec.layers() as u32)
        .ok_or(Error::LengthIncompatible(mix.len()))?;
    if mix.is_empty() {
        return Err(Error::LengthIncompatible(0));
    }
    let padded_len = mix.len().div_ceil(block) * block;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let encoder: Vec<Conv> = spec
        .encoder_layers()
        .into_iter()
        .map(|l| Conv::random(l, &mut rng, params.bias_scale))
        .collect();
    let decoders: Vec<Vec<Conv>> = (0..spec.num_decoders)
        .map(|_| {
            std::iter::once(spec.adapter_layer())
                .chain(spec.interior_layers())
                .chain(std::iter::once(spec.output_layer()))
                .map(|l| Conv::random(l, &mut rng, params.bias_scale))
                .collect()
        })
        .collect();

    let mut h = mix.fit_to_length(padded_len).into_samples();
    for conv in &encoder {
        h = conv.apply(&h, spec.stride, true);
    }
    let mut outputs: Vec<Array2<f64>> = Vec::new();
    for dec in &decoders {
        let mut y = dec[0].apply(&h, 1, true);
        let last = dec.len() - 1;
        for (i, conv) in dec[1..].iter().enumerate() {
            y = conv.apply(&upsample(&y, spec.stride), 1, i + 1 != last);
        }
        outputs.push(y);
    }
    let stacked: Array2<f64> = ndarray::concatenate(
        ndarray::Axis(0),
        &outputs.iter().map(|o| o.view()).collect::<Vec<_>>(),
    )
    .map_err(|e| Error::shape(e.to_string()))?;
    let c = spec.audio_channels;
    let stems = (0..spec.sources)
        .map(|j| {
            let rows = stacked
                .slice(ndarray::s![j * c..(j + 1) * c, ..mix.len()])
                .to_owned();
            Waveform::new(rows, mix.sample_rate())
        })
        .collect::<Result<Vec<_>>>()?;
    SourceWaveformSet::new(stems)
}
