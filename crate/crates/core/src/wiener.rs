//! Multichannel Wiener filtering.
//!
//! Per-source magnitude estimates are turned into complex source images by a
//! soft mask on the mixture, then refined by EM passes over a local Gaussian
//! model: a power spectral density `v_j(t, f)` and a spatial covariance
//! `R_j(f)` per source. Mono and stereo inputs are supported.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::map_indexed;
use crate::source::{MagnitudeSet, SourceSpectrogramSet};
use crate::stft::Spectrogram;

pub const MAX_CHANNELS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MwfConfig {
    pub iterations: usize,
    pub eps: f64,
    pub mask_power: f64,
}

impl Default for MwfConfig {
    fn default() -> Self {
        Self {
            iterations: 1,
            eps: 1e-10,
            mask_power: 2.0,
        }
    }
}

impl MwfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "eps {} must be positive",
                self.eps
            )));
        }
        if !(self.mask_power > 0.0 && self.mask_power.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "mask_power {} must be positive",
                self.mask_power
            )));
        }
        Ok(())
    }

    /// Copy with `eps` scaled by the mean power of `mix`, so the regularizer
    /// tracks the input level. Silent mixtures keep the absolute value.
    pub fn relative_to(&self, mix: &Spectrogram) -> Self {
        let n = mix.bins().len().max(1) as f64;
        let power = mix.bins().iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        let eps = if power > 0.0 {
            self.eps * power
        } else {
            self.eps
        };
        Self { eps, ..*self }
    }
}

/// Small Hermitian matrix, only the leading `channels × channels` block used.
pub type Cov = [[Complex64; MAX_CHANNELS]; MAX_CHANNELS];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Source PSDs and spatial covariances fitted to a set of source images.
#[derive(Debug, Clone)]
pub struct SpatialModel {
    channels: usize,
    /// `v_j(t, f)`, one `frames × bins` array per source.
    pub psd: Vec<Array2<f64>>,
    /// `R_j(f)`, indexed `[source][bin]`.
    pub covariance: Vec<Vec<Cov>>,
}

impl SpatialModel {
    pub fn fit(est: &SourceSpectrogramSet, eps: f64) -> Self {
        let (channels, frames, bins) = est.dim();
        let psd: Vec<Array2<f64>> = est
            .iter()
            .map(|s| {
                let b = s.bins();
                Array2::from_shape_fn((frames, bins), |(t, f)| {
                    (0..channels).map(|c| b[[c, t, f]].norm_sqr()).sum::<f64>() / channels as f64
                })
            })
            .collect();
        let covariance = est
            .iter()
            .zip(&psd)
            .map(|(s, v)| {
                (0..bins)
                    .map(|f| spatial_covariance(s.bins(), v, f, channels, eps))
                    .collect()
            })
            .collect();
        Self {
            channels,
            psd,
            covariance,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Smallest eigenvalue of `R_j(f)`.
    pub fn min_eigenvalue(&self, j: usize, f: usize) -> f64 {
        let r = &self.covariance[j][f];
        if self.channels == 1 {
            return r[0][0].re;
        }
        let (a, d) = (r[0][0].re, r[1][1].re);
        let half_gap = (((a - d) / 2.0).powi(2) + r[0][1].norm_sqr()).sqrt();
        (a + d) / 2.0 - half_gap
    }
}

fn spatial_covariance(
    y: &Array3<Complex64>,
    v: &Array2<f64>,
    f: usize,
    channels: usize,
    eps: f64,
) -> Cov {
    let frames = v.nrows();
    let mut acc = [[ZERO; MAX_CHANNELS]; MAX_CHANNELS];
    let mut weight = 0.0;
    // fixed summation order over frames
    for t in 0..frames {
        for a in 0..channels {
            for b in 0..channels {
                acc[a][b] += y[[a, t, f]] * y[[b, t, f]].conj();
            }
        }
        weight += v[[t, f]];
    }
    let denom = weight + eps;
    let mut r = [[ZERO; MAX_CHANNELS]; MAX_CHANNELS];
    for a in 0..channels {
        for b in 0..channels {
            r[a][b] = (acc[a][b] + acc[b][a].conj()) / (2.0 * denom);
        }
    }
    r
}

fn check_channels(channels: usize) -> Result<()> {
    if channels > MAX_CHANNELS {
        return Err(Error::TooManyChannels {
            got: channels,
            max: MAX_CHANNELS,
        });
    }
    Ok(())
}

/// Soft-mask initialization: `ŷ_j = v_j^α / Σ_k v_k^α · x`, per channel.
///
/// Bins where every source magnitude is zero get a zero mask.
pub fn initial_estimates(
    mags: &MagnitudeSet,
    mix: &Spectrogram,
    mask_power: f64,
) -> Result<SourceSpectrogramSet> {
    if mags.dim() != mix.bins().dim() {
        return Err(Error::shape(format!(
            "magnitudes {:?} vs mixture {:?}",
            mags.dim(),
            mix.bins().dim()
        )));
    }
    if mask_power.is_nan() || mask_power <= 0.0 {
        return Err(Error::InvalidConfig("mask_power must be positive".into()));
    }
    let powered: Vec<Array3<f64>> = mags
        .iter()
        .map(|m| m.mapv(|v| v.powf(mask_power)))
        .collect();
    let mut total = Array3::<f64>::zeros(mix.bins().dim());
    for p in &powered {
        total += p;
    }
    let estimates = powered
        .iter()
        .map(|p| {
            let mut bins = mix.bins().clone();
            ndarray::Zip::from(&mut bins)
                .and(p)
                .and(&total)
                .for_each(|x, &num, &den| {
                    let mask = if den > 0.0 { num / den } else { 0.0 };
                    *x *= mask;
                });
            mix.with_bins(bins)
        })
        .collect::<Result<Vec<_>>>()?;
    SourceSpectrogramSet::new(estimates)
}

/// Runs `cfg.iterations` EM passes starting from `est`.
pub fn em_iterate(
    est: &SourceSpectrogramSet,
    mix: &Spectrogram,
    cfg: &MwfConfig,
) -> Result<SourceSpectrogramSet> {
    cfg.validate()?;
    if est.dim() != mix.bins().dim() {
        return Err(Error::shape(format!(
            "estimates {:?} vs mixture {:?}",
            est.dim(),
            mix.bins().dim()
        )));
    }
    check_channels(mix.channels())?;
    let mut current = est.clone();
    for _ in 0..cfg.iterations {
        current = em_step(&current, mix, cfg.eps)?;
    }
    Ok(current)
}

fn em_step(
    est: &SourceSpectrogramSet,
    mix: &Spectrogram,
    eps: f64,
) -> Result<SourceSpectrogramSet> {
    let (channels, frames, bins) = est.dim();
    let model = SpatialModel::fit(est, eps);
    let x = mix.bins();
    let sources = est.len();

    // each bin filtered independently; column layout [source][channel][frame]
    let columns = map_indexed(bins, |f| -> Result<Vec<Complex64>> {
        let mut col = vec![ZERO; sources * channels * frames];
        for t in 0..frames {
            let mut mix_cov = [[ZERO; MAX_CHANNELS]; MAX_CHANNELS];
            for j in 0..sources {
                let v = model.psd[j][[t, f]];
                let r = &model.covariance[j][f];
                for a in 0..channels {
                    for b in 0..channels {
                        mix_cov[a][b] += r[a][b] * v;
                    }
                }
            }
            for (a, row) in mix_cov.iter_mut().enumerate().take(channels) {
                row[a] += eps;
            }
            let inv = invert(&mix_cov, channels)
                .ok_or(Error::SingularMixCovariance { frame: t, bin: f })?;
            // inv · x, shared by every source
            let mut ix = [ZERO; MAX_CHANNELS];
            for (a, slot) in ix.iter_mut().enumerate().take(channels) {
                for b in 0..channels {
                    *slot += inv[a][b] * x[[b, t, f]];
                }
            }
            for j in 0..sources {
                let v = model.psd[j][[t, f]];
                let r = &model.covariance[j][f];
                for a in 0..channels {
                    let mut acc = ZERO;
                    for b in 0..channels {
                        acc += r[a][b] * ix[b];
                    }
                    col[(j * channels + a) * frames + t] = acc * v;
                }
            }
        }
        Ok(col)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let outputs = (0..sources)
        .map(|j| {
            let bins_out = Array3::from_shape_fn((channels, frames, bins), |(c, t, f)| {
                columns[f][(j * channels + c) * frames + t]
            });
            mix.with_bins(bins_out)
        })
        .collect::<Result<Vec<_>>>()?;
    SourceSpectrogramSet::new(outputs)
}

/// Closed-form inverse of a 1×1 or 2×2 Hermitian positive-definite matrix.
fn invert(m: &Cov, channels: usize) -> Option<Cov> {
    let mut out = [[ZERO; MAX_CHANNELS]; MAX_CHANNELS];
    if channels == 1 {
        let d = m[0][0].re;
        if !d.is_finite() || d <= 0.0 {
            return None;
        }
        out[0][0] = Complex64::new(1.0 / d, 0.0);
        return Some(out);
    }
    let det = (m[0][0] * m[1][1] - m[0][1] * m[1][0]).re;
    if !det.is_finite() || det <= 0.0 {
        return None;
    }
    out[0][0] = m[1][1] / det;
    out[1][1] = m[0][0] / det;
    out[0][1] = -m[0][1] / det;
    out[1][0] = -m[1][0] / det;
    Some(out)
}

/// Soft-mask initialization followed by `cfg.iterations` EM passes.
pub fn mwf(
    mags: &MagnitudeSet,
    mix: &Spectrogram,
    cfg: &MwfConfig,
) -> Result<SourceSpectrogramSet> {
    cfg.validate()?;
    check_channels(mix.channels())?;
    let init = initial_estimates(mags, mix, cfg.mask_power)?;
    em_iterate(&init, mix, cfg)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::stft::StftConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg4() -> StftConfig {
        StftConfig::new(4, 2).unwrap()
    }

    fn spec(data: Array3<Complex64>) -> Spectrogram {
        Spectrogram::new(data, cfg4(), 8000).unwrap()
    }

    fn random_spec(rng: &mut ChaCha8Rng, channels: usize, frames: usize) -> Spectrogram {
        spec(Array3::from_shape_fn((channels, frames, 3), |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        }))
    }

    fn mags(items: Vec<Array3<f64>>) -> MagnitudeSet {
        MagnitudeSet::new(items).unwrap()
    }

    #[test]
    fn single_source_mask_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let x = random_spec(&mut rng, 2, 4);
        let m = Array3::from_shape_fn((2, 4, 3), |_| rng.gen_range(0.1..2.0));
        let out = initial_estimates(&mags(vec![m]), &x, 1.7).unwrap();
        assert_eq!(out[0].bins(), x.bins());
    }

    #[test]
    fn equal_magnitudes_split_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = random_spec(&mut rng, 1, 4);
        let m = Array3::from_elem((1, 4, 3), 0.7);
        let out = initial_estimates(&mags(vec![m.clone(), m]), &x, 3.3).unwrap();
        for (a, b) in out[0].bins().iter().zip(x.bins()) {
            assert_eq!(*a, b / 2.0);
        }
    }

    #[test]
    fn hand_computed_mask() {
        let x = spec(Array3::from_elem((1, 1, 3), Complex64::new(2.0, 0.0)));
        let out = initial_estimates(
            &mags(vec![
                Array3::from_elem((1, 1, 3), 3.0),
                Array3::from_elem((1, 1, 3), 1.0),
            ]),
            &x,
            2.0,
        )
        .unwrap();
        assert!((out[0].bins()[[0, 0, 0]].re - 1.8).abs() < 1e-15);
        assert!((out[1].bins()[[0, 0, 0]].re - 0.2).abs() < 1e-15);
    }

    #[test]
    fn silent_bins_get_zero_mask() {
        let x = spec(Array3::from_elem((1, 1, 3), Complex64::new(1.0, 1.0)));
        let zero = Array3::zeros((1, 1, 3));
        let out = initial_estimates(&mags(vec![zero.clone(), zero]), &x, 2.0).unwrap();
        assert!(out.iter().all(|s| s.bins().iter().all(|z| z.norm() == 0.0)));
    }

    #[test]
    fn shape_and_channel_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = random_spec(&mut rng, 1, 4);
        let wrong = mags(vec![Array3::zeros((1, 5, 3))]);
        assert!(matches!(
            initial_estimates(&wrong, &x, 2.0),
            Err(Error::ShapeMismatch(_))
        ));
        let x3 = random_spec(&mut rng, 3, 4);
        let m3 = mags(vec![Array3::ones((3, 4, 3))]);
        assert!(matches!(
            mwf(&m3, &x3, &MwfConfig::default()),
            Err(Error::TooManyChannels { got: 3, .. })
        ));
    }

    #[test]
    fn zero_iterations_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x = random_spec(&mut rng, 2, 4);
        let est = SourceSpectrogramSet::new(vec![
            random_spec(&mut rng, 2, 4),
            random_spec(&mut rng, 2, 4),
        ])
        .unwrap();
        let cfg = MwfConfig {
            iterations: 0,
            ..MwfConfig::default()
        };
        assert_eq!(em_iterate(&est, &x, &cfg).unwrap(), est);
    }

    #[test]
    fn single_source_em_returns_mixture() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for channels in [1, 2] {
            let x = random_spec(&mut rng, channels, 8);
            let est = SourceSpectrogramSet::new(vec![random_spec(&mut rng, channels, 8)]).unwrap();
            let out = em_iterate(&est, &x, &MwfConfig::default()).unwrap();
            for (a, b) in out[0].bins().iter().zip(x.bins()) {
                assert!((a - b).norm() <= 1e-8 * b.norm().max(1.0), "{a} vs {b}");
            }
        }
    }

    /// Mono EM step written out with scalars only.
    fn mono_em_oracle(
        est: &[Vec<Vec<Complex64>>],
        x: &[Vec<Complex64>],
        eps: f64,
    ) -> Vec<Vec<Vec<Complex64>>> {
        let sources = est.len();
        let frames = x.len();
        let bins = x[0].len();
        let v: Vec<Vec<Vec<f64>>> = est
            .iter()
            .map(|s| {
                s.iter()
                    .map(|row| row.iter().map(|z| z.re * z.re + z.im * z.im).collect())
                    .collect()
            })
            .collect();
        let mut r = vec![vec![0.0; bins]; sources];
        for j in 0..sources {
            for f in 0..bins {
                let mut num = 0.0;
                let mut den = 0.0;
                for t in 0..frames {
                    num += v[j][t][f];
                    den += v[j][t][f];
                }
                r[j][f] = num / (den + eps);
            }
        }
        let mut out = vec![vec![vec![Complex64::new(0.0, 0.0); bins]; frames]; sources];
        for t in 0..frames {
            for f in 0..bins {
                let mut c = eps;
                for j in 0..sources {
                    c += v[j][t][f] * r[j][f];
                }
                for j in 0..sources {
                    out[j][t][f] = x[t][f] * (v[j][t][f] * r[j][f] / c);
                }
            }
        }
        out
    }

    #[test]
    fn mono_step_matches_scalar_oracle() {
        let x_vals = [
            [
                Complex64::new(1.0, 0.5),
                Complex64::new(-0.3, 0.2),
                Complex64::new(0.8, -0.1),
            ],
            [
                Complex64::new(0.2, -0.7),
                Complex64::new(0.5, 0.5),
                Complex64::new(-1.0, 0.0),
            ],
        ];
        let a = [[0.9, 0.1, 0.4], [0.3, 0.6, 0.5]];
        let est_vals: Vec<Vec<Vec<Complex64>>> = vec![
            (0..2)
                .map(|t| (0..3).map(|f| x_vals[t][f] * a[t][f]).collect())
                .collect(),
            (0..2)
                .map(|t| (0..3).map(|f| x_vals[t][f] * (1.0 - a[t][f])).collect())
                .collect(),
        ];
        let x = spec(Array3::from_shape_fn((1, 2, 3), |(_, t, f)| x_vals[t][f]));
        let est = SourceSpectrogramSet::new(
            est_vals
                .iter()
                .map(|s| spec(Array3::from_shape_fn((1, 2, 3), |(_, t, f)| s[t][f])))
                .collect(),
        )
        .unwrap();
        let cfg = MwfConfig {
            iterations: 1,
            eps: 1e-6,
            mask_power: 2.0,
        };
        let out = em_iterate(&est, &x, &cfg).unwrap();
        let expected = mono_em_oracle(
            &est_vals,
            &x_vals.iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
            1e-6,
        );
        for j in 0..2 {
            for t in 0..2 {
                for f in 0..3 {
                    assert!((out[j].bins()[[0, t, f]] - expected[j][t][f]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn covariances_are_hermitian_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let est = SourceSpectrogramSet::new((0..4).map(|_| random_spec(&mut rng, 2, 6)).collect())
            .unwrap();
        let model = SpatialModel::fit(&est, 1e-10);
        for j in 0..4 {
            for f in 0..3 {
                let r = model.covariance[j][f];
                assert_eq!(r[0][1], r[1][0].conj());
                assert_eq!(r[0][0].im, 0.0);
                assert!(model.min_eigenvalue(j, f) >= -1e-10);
            }
        }
    }

    #[test]
    fn hard_panned_sources_stay_in_their_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let frames = 16;
        let left = Array3::from_shape_fn((2, frames, 3), |(c, _, _)| {
            if c == 0 {
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            } else {
                ZERO
            }
        });
        let right = Array3::from_shape_fn((2, frames, 3), |(c, _, _)| {
            if c == 1 {
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            } else {
                ZERO
            }
        });
        let x = spec(&left + &right);
        let m = mags(vec![left.mapv(|z| z.norm()), right.mapv(|z| z.norm())]);
        let out = mwf(&m, &x, &MwfConfig::default()).unwrap();
        for (j, own) in [(0, 0), (1, 1)] {
            let b = out[j].bins();
            let in_own: f64 = b
                .index_axis(ndarray::Axis(0), own)
                .iter()
                .map(|z| z.norm_sqr())
                .sum();
            let total: f64 = b.iter().map(|z| z.norm_sqr()).sum();
            assert!(in_own / total >= 0.95);
        }
    }

    #[test]
    fn singular_mix_covariance_reported() {
        // identical channels give an exactly rank-one covariance; eps vanishes in rounding
        let x = spec(Array3::from_elem((2, 2, 3), Complex64::new(1.0, 0.0)));
        let est = SourceSpectrogramSet::new(vec![x.clone()]).unwrap();
        let cfg = MwfConfig {
            iterations: 1,
            eps: 1e-300,
            mask_power: 2.0,
        };
        assert!(matches!(
            em_iterate(&est, &x, &cfg),
            Err(Error::SingularMixCovariance { .. })
        ));
    }

    #[test]
    fn relative_eps_scales_with_power() {
        let x = spec(Array3::from_elem((1, 2, 3), Complex64::new(3.0, 4.0)));
        let cfg = MwfConfig::default().relative_to(&x);
        assert!((cfg.eps - 25e-10).abs() < 1e-22);
    }
}
