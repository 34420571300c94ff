//! Training objectives: complex-domain spectrogram MSE, waveform L1, and a
//! cosine-similarity time-domain term.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::source::{SourceSpectrogramSet, SourceWaveformSet};

/// Guards the cosine denominator against silent sources.
pub const COSINE_EPS: f64 = 1e-8;

/// Sum over sources, channels, frames and bins of `|Y - Ŷ|²`.
///
/// The difference is taken on complex coefficients, so phase errors count.
pub fn freq_mse(truth: &SourceSpectrogramSet, est: &SourceSpectrogramSet) -> Result<f64> {
    truth.check_compatible(est)?;
    let mut total = 0.0;
    for (y, y_hat) in truth.iter().zip(est) {
        total += y
            .bins()
            .iter()
            .zip(y_hat.bins())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>();
    }
    Ok(total)
}

/// Wirtinger gradient `∂L/∂Ŷ* = Ŷ - Y`, one tensor per source.
///
/// For a perturbation `d`, `L(Ŷ + εd) - L(Ŷ) ≈ 2·Re⟨grad, εd⟩`.
pub fn freq_mse_grad(
    truth: &SourceSpectrogramSet,
    est: &SourceSpectrogramSet,
) -> Result<SourceSpectrogramSet> {
    truth.check_compatible(est)?;
    let grads = truth
        .iter()
        .zip(est)
        .map(|(y, y_hat)| y_hat.with_bins(y_hat.bins() - y.bins()))
        .collect::<Result<Vec<_>>>()?;
    SourceSpectrogramSet::new(grads)
}

/// `2·Re Σ conj(grad)·d`: the directional derivative of `freq_mse` along `d`.
pub fn directional_derivative(
    grad: &SourceSpectrogramSet,
    dir: &SourceSpectrogramSet,
) -> Result<f64> {
    grad.check_compatible(dir)?;
    let mut acc = 0.0;
    for (g, d) in grad.iter().zip(dir) {
        acc += g
            .bins()
            .iter()
            .zip(d.bins())
            .map(|(g, d): (&Complex64, &Complex64)| (g.conj() * d).re)
            .sum::<f64>();
    }
    Ok(2.0 * acc)
}

/// Σ_j Σ_samples |y_j − ŷ_j|.
pub fn l1_waveform(truth: &SourceWaveformSet, est: &SourceWaveformSet) -> Result<f64> {
    truth.check_compatible(est)?;
    Ok(truth
        .iter()
        .zip(est)
        .map(|(y, y_hat)| {
            y.samples()
                .iter()
                .zip(y_hat.samples())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
        })
        .sum())
}

/// Negative cosine similarity summed over sources, in `[-J, J]`.
pub fn time_domain_loss(truth: &SourceWaveformSet, est: &SourceWaveformSet) -> Result<f64> {
    truth.check_compatible(est)?;
    let mut total = 0.0;
    for (y, y_hat) in truth.iter().zip(est) {
        let (mut dot, mut yy, mut hh) = (0.0, 0.0, 0.0);
        for (a, b) in y.samples().iter().zip(y_hat.samples()) {
            dot += a * b;
            yy += a * a;
            hh += b * b;
        }
        total -= dot / (yy.sqrt() * hh.sqrt() + COSINE_EPS);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the spectrogram term; the time-domain term gets `1 - mix_weight`.
    pub mix_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { mix_weight: 0.5 }
    }
}

pub fn combined_loss(
    truth_spec: &SourceSpectrogramSet,
    est_spec: &SourceSpectrogramSet,
    truth_wave: &SourceWaveformSet,
    est_wave: &SourceWaveformSet,
    cfg: LossConfig,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&cfg.mix_weight) {
        return Err(Error::InvalidConfig(format!(
            "mix_weight {} outside [0, 1]",
            cfg.mix_weight
        )));
    }
    let freq = freq_mse(truth_spec, est_spec)?;
    let time = time_domain_loss(truth_wave, est_wave)?;
    Ok(mix_terms(freq, time, cfg.mix_weight))
}

fn mix_terms(freq: f64, time: f64, w: f64) -> f64 {
    w * freq + (1.0 - w) * time
}
