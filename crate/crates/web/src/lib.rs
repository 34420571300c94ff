//! Browser bindings: a spectrogram view, a two-source Wiener panning demo,
//! and an SDR-versus-blend-weight curve.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stemfuse::blend::blend_source;
use stemfuse::bsseval::{sdr_frames, EvalConfig};
use stemfuse::source::MagnitudeSet;
use stemfuse::wiener::{mwf, MwfConfig};
use stemfuse::{istft, magnitude, stft, SourceWaveformSet, StftConfig, Waveform};
use wasm_bindgen::prelude::*;

const FLOOR_DB: f64 = -120.0;

fn js(e: stemfuse::Error) -> JsError {
    JsError::new(&format!("error[{}]: {e}", e.code()))
}

/// Log-magnitude spectrogram, frames × bins, row-major.
#[wasm_bindgen]
pub struct Heatmap {
    frames: usize,
    bins: usize,
    data: Vec<f64>,
}

#[wasm_bindgen]
impl Heatmap {
    #[wasm_bindgen(getter)]
    pub fn frames(&self) -> usize {
        self.frames
    }

    #[wasm_bindgen(getter)]
    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Values in dB, floored at -120.
    pub fn data(&self) -> Vec<f64> {
        self.data.clone()
    }
}

/// A mono test signal: a low tone, a vibrato tone, a click train and noise.
#[wasm_bindgen]
pub fn demo_signal(seconds: f64, sample_rate: u32, seed: u32) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    let sr = sample_rate as f64;
    let len = (seconds * sr).round().max(1.0) as usize;
    let click_every = (sr / 4.0) as usize;
    (0..len)
        .map(|i| {
            let t = i as f64 / sr;
            let low = 0.3 * (2.0 * std::f64::consts::PI * 110.0 * t).sin();
            let vib = 0.2
                * (2.0
                    * std::f64::consts::PI
                    * (880.0 * t + 8.0 * (2.0 * std::f64::consts::PI * 5.0 * t).sin()))
                .sin();
            let click = if click_every > 0 && i % click_every < 20 {
                0.5
            } else {
                0.0
            };
            low + vib + click + rng.gen_range(-0.02..0.02)
        })
        .collect()
}

pub fn spectrogram_heatmap(
    signal: &[f64],
    sample_rate: u32,
    fft_size: usize,
    hop: usize,
) -> stemfuse::Result<Heatmap> {
    let cfg = StftConfig::new(fft_size, hop)?;
    let w = Waveform::from_channels(vec![signal.to_vec()], sample_rate)?;
    let mag = magnitude(&stft(&w, &cfg)?);
    let (_, frames, bins) = mag.dim();
    let data = mag
        .iter()
        .map(|m| (20.0 * m.log10()).max(FLOOR_DB))
        .collect();
    Ok(Heatmap { frames, bins, data })
}

#[wasm_bindgen]
pub fn spectrogram_db(
    signal: &[f64],
    sample_rate: u32,
    fft_size: usize,
    hop: usize,
) -> Result<Heatmap, JsError> {
    spectrogram_heatmap(signal, sample_rate, fft_size, hop).map_err(js)
}

/// Outcome of separating two panned noise sources from rough magnitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanningResult {
    /// Share of each estimate's energy in the left channel.
    pub left_share: [f64; 2],
    /// Estimate-to-truth error per source, in dB relative to the source.
    pub error_db: [f64; 2],
}

/// Two white-noise sources with left gains `pan_a` and `pan_b` (right gain
/// `1 - pan`). The magnitude estimates are blurred: each takes `confusion` of
/// the other source's magnitude.
pub fn panning_demo(
    pan_a: f64,
    pan_b: f64,
    confusion: f64,
    iterations: usize,
    seed: u32,
) -> stemfuse::Result<PanningResult> {
    if !(0.0..=1.0).contains(&pan_a)
        || !(0.0..=1.0).contains(&pan_b)
        || !(0.0..=1.0).contains(&confusion)
    {
        return Err(stemfuse::Error::InvalidConfig(
            "pans and confusion must lie in [0, 1]".into(),
        ));
    }
    let rate = 8000;
    let len = 8000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    let mut source = |pan: f64| {
        let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Waveform::from_channels(
            vec![
                x.iter().map(|v| v * pan).collect(),
                x.iter().map(|v| v * (1.0 - pan)).collect(),
            ],
            rate,
        )
    };
    let truth = [source(pan_a)?, source(pan_b)?];
    let mix = Waveform::new(truth[0].samples() + truth[1].samples(), rate)?;
    let cfg = StftConfig::new(512, 128)?;
    let spec = stft(&mix, &cfg)?;
    let true_mags = [
        magnitude(&stft(&truth[0], &cfg)?),
        magnitude(&stft(&truth[1], &cfg)?),
    ];
    let mags = MagnitudeSet::new(vec![
        &true_mags[0] * (1.0 - confusion) + &true_mags[1] * confusion,
        &true_mags[1] * (1.0 - confusion) + &true_mags[0] * confusion,
    ])?;
    let mwf_cfg = MwfConfig {
        iterations,
        ..MwfConfig::default()
    }
    .relative_to(&spec);
    let out = mwf(&mags, &spec, &mwf_cfg)?;
    let mut result = PanningResult {
        left_share: [0.0; 2],
        error_db: [0.0; 2],
    };
    for j in 0..2 {
        let est = istft(&out[j], &cfg, len)?;
        let left: f64 = est.channel(0).iter().map(|v| v * v).sum();
        let total = est.energy();
        result.left_share[j] = if total > 0.0 { left / total } else { 0.5 };
        let err: f64 = est
            .samples()
            .iter()
            .zip(truth[j].samples())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let reference = truth[j].energy();
        result.error_db[j] = if reference > 0.0 && err > 0.0 {
            10.0 * (err / reference).log10()
        } else {
            FLOOR_DB
        };
    }
    Ok(result)
}

/// `[left share a, left share b, error a (dB), error b (dB)]`.
#[wasm_bindgen]
pub fn wiener_panning(
    pan_a: f64,
    pan_b: f64,
    confusion: f64,
    iterations: usize,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    let r = panning_demo(pan_a, pan_b, confusion, iterations, seed).map_err(js)?;
    Ok(vec![
        r.left_share[0],
        r.left_share[1],
        r.error_db[0],
        r.error_db[1],
    ])
}

/// SDR of `w·A + (1 - w)·B` for `w = k / steps`, where A and B are two
/// estimates of a tone sharing an error component of opposite sign plus
/// independent residuals.
pub fn sdr_curve(
    shared: f64,
    residual: f64,
    steps: usize,
    seed: u32,
) -> stemfuse::Result<Vec<f64>> {
    if steps == 0 || steps > 200 {
        return Err(stemfuse::Error::InvalidConfig(
            "steps must be in 1..=200".into(),
        ));
    }
    let rate = 8000;
    let len = 8000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    let mut noise = |amp: f64| -> Vec<f64> {
        if amp > 0.0 {
            (0..len).map(|_| rng.gen_range(-amp..amp)).collect()
        } else {
            vec![0.0; len]
        }
    };
    let tone: Vec<f64> = (0..len)
        .map(|i| (2.0 * std::f64::consts::PI * 220.0 * i as f64 / rate as f64).sin())
        .collect();
    let other: Vec<f64> = noise(0.5);
    let (n, ra, rb) = (noise(shared), noise(residual), noise(residual));
    let wave =
        |x: Vec<f64>| Waveform::new(Array2::from_shape_vec((1, len), x).expect("one row"), rate);
    let a = wave((0..len).map(|i| tone[i] + n[i] + ra[i]).collect())?;
    let b = wave((0..len).map(|i| tone[i] - n[i] + rb[i]).collect())?;
    let refs = SourceWaveformSet::new(vec![wave(tone)?, wave(other.clone())?])?;
    let cfg = EvalConfig {
        filter_len: 8,
        win: 1.0,
        hop: 1.0,
    };
    (0..=steps)
        .map(|k| {
            let w = k as f64 / steps as f64;
            let fused = blend_source(&[&a, &b], &[w, 1.0 - w])?;
            let ests = SourceWaveformSet::new(vec![fused, wave(other.clone())?])?;
            Ok(sdr_frames(&refs, &ests, &cfg)?.sources[0]
                .median
                .unwrap_or(f64::NAN))
        })
        .collect()
}

#[wasm_bindgen]
pub fn blend_sdr_curve(
    shared: f64,
    residual: f64,
    steps: usize,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    sdr_curve(shared, residual, steps, seed).map_err(js)
}
