//! Short-time Fourier transform with centered frames and squared-window
//! overlap-add inversion.

use std::f64::consts::PI;

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio_io::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    #[default]
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
    pub window: WindowKind,
    pub center_pad: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            fft_size: 4096,
            hop: 1024,
            window: WindowKind::Hann,
            center_pad: true,
        }
    }
}

impl StftConfig {
    pub fn new(fft_size: usize, hop: usize) -> Result<Self> {
        let cfg = Self {
            fft_size,
            hop,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Periodic window of length `fft_size`.
    pub fn window(&self) -> Vec<f64> {
        match self.window {
            WindowKind::Hann => hann(self.fft_size),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 2 || !self.fft_size.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "fft_size {} is not a power of two",
                self.fft_size
            )));
        }
        if self.hop == 0 || self.hop > self.fft_size {
            return Err(Error::InvalidConfig(format!(
                "hop {} outside (0, {}]",
                self.hop, self.fft_size
            )));
        }
        let deviation = cola_deviation(&self.window(), self.hop);
        if deviation > 1e-10 {
            return Err(Error::InvalidConfig(format!(
                "window/hop pair violates constant overlap-add (deviation {deviation:.3e})"
            )));
        }
        Ok(())
    }

    /// Number of frames produced for a signal of `length` samples.
    pub fn frame_count(&self, length: usize) -> usize {
        if self.center_pad {
            length / self.hop + 1
        } else if length <= self.fft_size {
            1
        } else {
            (length - self.fft_size).div_ceil(self.hop) + 1
        }
    }

    fn pad(&self) -> usize {
        if self.center_pad {
            self.fft_size / 2
        } else {
            0
        }
    }
}

pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Max relative deviation of the shifted-window sum from its mean.
pub fn cola_deviation(window: &[f64], hop: usize) -> f64 {
    let sums: Vec<f64> = (0..hop)
        .map(|n| window.iter().skip(n).step_by(hop).sum())
        .collect();
    let mean = sums.iter().sum::<f64>() / hop as f64;
    if mean <= 0.0 {
        return f64::INFINITY;
    }
    sums.iter()
        .map(|s| (s - mean).abs() / mean)
        .fold(0.0, f64::max)
}

/// One-sided complex spectrogram, `channels × frames × bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    bins: Array3<Complex64>,
    config: StftConfig,
    sample_rate: u32,
}

impl Spectrogram {
    pub fn new(bins: Array3<Complex64>, config: StftConfig, sample_rate: u32) -> Result<Self> {
        if bins.dim().2 != config.bins() {
            return Err(Error::shape(format!(
                "{} bins for fft_size {}",
                bins.dim().2,
                config.fft_size
            )));
        }
        if bins.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidConfig(
                "spectrogram has non-finite entries".into(),
            ));
        }
        Ok(Self {
            bins,
            config,
            sample_rate,
        })
    }

    pub fn bins(&self) -> &Array3<Complex64> {
        &self.bins
    }

    pub fn into_bins(self) -> Array3<Complex64> {
        self.bins
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channels(&self) -> usize {
        self.bins.dim().0
    }

    pub fn frames(&self) -> usize {
        self.bins.dim().1
    }

    /// Same config and rate, new coefficients.
    pub fn with_bins(&self, bins: Array3<Complex64>) -> Result<Self> {
        Self::new(bins, self.config, self.sample_rate)
    }

    /// Center frequency in Hz of bin `k`.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.config.fft_size as f64
    }
}

pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    if w.is_empty() {
        return Err(Error::EmptySignal);
    }
    let n = cfg.fft_size;
    let window = cfg.window();
    let frames = cfg.frame_count(w.len());
    let pad = cfg.pad();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut out = Array3::zeros((w.channels(), frames, cfg.bins()));
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for c in 0..w.channels() {
        let x = w.channel(c);
        for t in 0..frames {
            let start = (t * cfg.hop) as isize - pad as isize;
            for (i, slot) in buf.iter_mut().enumerate() {
                let idx = start + i as isize;
                let v = if idx >= 0 && (idx as usize) < x.len() {
                    x[idx as usize]
                } else {
                    0.0
                };
                *slot = Complex64::new(v * window[i], 0.0);
            }
            fft.process(&mut buf);
            for (k, z) in buf[..cfg.bins()].iter().enumerate() {
                out[[c, t, k]] = *z;
            }
            // real input: DC and Nyquist are real up to rounding
            out[[c, t, 0]].im = 0.0;
            out[[c, t, n / 2]].im = 0.0;
        }
    }
    Spectrogram::new(out, *cfg, w.sample_rate())
}

/// Longest signal `istft` can rebuild from `frames` frames.
pub fn reconstructable_len(cfg: &StftConfig, frames: usize) -> usize {
    if frames == 0 {
        return 0;
    }
    (frames - 1) * cfg.hop + cfg.fft_size - cfg.pad()
}

pub fn istft(s: &Spectrogram, cfg: &StftConfig, length: usize) -> Result<Waveform> {
    cfg.validate()?;
    if s.config() != cfg {
        return Err(Error::ConfigMismatch);
    }
    let available = reconstructable_len(cfg, s.frames());
    if length > available {
        return Err(Error::LengthExceedsExtent {
            requested: length,
            available,
        });
    }
    let n = cfg.fft_size;
    let window = cfg.window();
    let pad = cfg.pad();
    let extent = (s.frames().saturating_sub(1)) * cfg.hop + n;
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);

    let mut norm = vec![0.0; extent];
    for t in 0..s.frames() {
        for (i, w) in window.iter().enumerate() {
            norm[t * cfg.hop + i] += w * w;
        }
    }

    let mut out = Array2::zeros((s.channels(), length));
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut acc = vec![0.0; extent];
    for c in 0..s.channels() {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for t in 0..s.frames() {
            for (slot, z) in buf.iter_mut().zip(s.bins().slice(ndarray::s![c, t, ..])) {
                *slot = *z;
            }
            buf[0].im = 0.0;
            buf[n / 2].im = 0.0;
            for k in 1..n / 2 {
                buf[n - k] = buf[k].conj();
            }
            ifft.process(&mut buf);
            let off = t * cfg.hop;
            for i in 0..n {
                acc[off + i] += buf[i].re / n as f64 * window[i];
            }
        }
        for i in 0..length {
            let d = norm[i + pad];
            out[[c, i]] = if d > 1e-10 { acc[i + pad] / d } else { 0.0 };
        }
    }
    Waveform::new(out, s.sample_rate())
}

pub fn magnitude(s: &Spectrogram) -> Array3<f64> {
    s.bins().map(|z| z.norm())
}
