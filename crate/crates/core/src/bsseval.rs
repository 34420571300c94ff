//! Signal-to-distortion ratio by least-squares projection onto delayed
//! copies of the references, evaluated on consecutive windows.
//!
//! For each window and channel the estimate `ŝ` is split into
//! `s_target + e_interf + e_artif`: `s_target` is its projection onto the
//! span of `filter_len` delayed copies of the true source, `s_target +
//! e_interf` the projection onto the delayed copies of every source, and
//! `e_artif` the remainder. SDR is `‖s_target‖² / ‖e_interf + e_artif‖²` in
//! dB, with energies pooled over channels.
//!
//! Gram matrices come from FFT cross-correlations with an exact correction
//! for the window edges, so they equal the dense `ΦᵀΦ` of the truncated
//! delay matrix.

use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio_io::Waveform;
use crate::blend::{Scorer, SourceMetric};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::par::map_indexed;
use crate::source::{Source, SourceWaveformSet};

/// Perfect frames report this value instead of +∞ (and its negation for −∞).
pub const SDR_CAP: f64 = 300.0;
/// Windows whose reference energy is below this are left out of medians.
pub const SILENCE_ENERGY: f64 = 1e-12;
/// Tikhonov term, relative to the mean Gram diagonal.
pub const REGULARIZATION: f64 = 1e-10;
const REFINEMENT_STEPS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Length of the distortion filter, in taps.
    pub filter_len: usize,
    /// Window length in seconds.
    pub win: f64,
    /// Window hop in seconds.
    pub hop: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            filter_len: 512,
            win: 1.0,
            hop: 1.0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.filter_len == 0 {
            return Err(Error::InvalidConfig("filter_len must be at least 1".into()));
        }
        if !(self.win > 0.0 && self.hop > 0.0) {
            return Err(Error::InvalidConfig("win and hop must be positive".into()));
        }
        Ok(())
    }

    /// `(start, len)` of every evaluation window for a signal of `length` samples.
    pub fn windows(&self, length: usize, sample_rate: u32) -> Vec<(usize, usize)> {
        let win = ((self.win * sample_rate as f64).round() as usize).max(1);
        let hop = ((self.hop * sample_rate as f64).round() as usize).max(1);
        if length <= win {
            return vec![(0, length)];
        }
        let count = (length - win) / hop + 1;
        (0..count).map(|i| (i * hop, win)).collect()
    }
}

fn cap(sdr: f64) -> f64 {
    sdr.clamp(-SDR_CAP, SDR_CAP)
}

/// SDR in dB from pooled target and distortion energies.
pub fn sdr_from_energies(target: f64, distortion: f64) -> f64 {
    if distortion <= 0.0 {
        SDR_CAP
    } else if target <= 0.0 {
        -SDR_CAP
    } else {
        cap(10.0 * (target / distortion).log10())
    }
}

struct Correlator {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Correlator {
    fn new(len: usize, filter_len: usize) -> Self {
        let size = (len + filter_len).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        }
    }

    fn spectrum(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.size];
        for (slot, &v) in buf.iter_mut().zip(x) {
            slot.re = v;
        }
        self.forward.process(&mut buf);
        buf
    }

    fn inverse_real(&self, mut buf: Vec<Complex64>, take: usize) -> Vec<f64> {
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.size as f64;
        buf[..take].iter().map(|z| z.re * scale).collect()
    }

    /// `Σ_t a(t) b(t - d)` for `d` in `0..lags`.
    fn xcorr(&self, a: &[Complex64], b: &[Complex64], lags: usize) -> Vec<f64> {
        let prod = a.iter().zip(b).map(|(x, y)| x * y.conj()).collect();
        self.inverse_real(prod, lags)
    }
}

struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    fn factor(a: &[f64], n: usize) -> Result<Self> {
        let mut lower = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let dot: f64 = lower[i * n..i * n + j]
                    .iter()
                    .zip(&lower[j * n..j * n + j])
                    .map(|(x, y)| x * y)
                    .sum();
                let v = a[i * n + j] - dot;
                if i == j {
                    if !v.is_finite() || v <= 0.0 {
                        return Err(Error::RankDeficient);
                    }
                    lower[i * n + i] = v.sqrt();
                } else {
                    lower[i * n + j] = v / lower[j * n + j];
                }
            }
        }
        Ok(Self { n, lower })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..n {
            let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
            y[i] = (y[i] - s) / l[i * n + i];
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| l[k * n + i] * y[k]).sum();
            y[i] = (y[i] - s) / l[i * n + i];
        }
        y
    }
}

/// Symmetric positive semidefinite system solved through a Tikhonov-shifted
/// factorization plus refinement against the unshifted matrix.
struct Normal {
    n: usize,
    gram: Vec<f64>,
    chol: Cholesky,
}

impl Normal {
    fn new(gram: Vec<f64>, n: usize) -> Result<Self> {
        let trace: f64 = (0..n).map(|i| gram[i * n + i]).sum();
        if trace.is_nan() || trace <= 0.0 {
            return Err(Error::RankDeficient);
        }
        let shift = REGULARIZATION * trace / n as f64;
        let mut shifted = gram.clone();
        for i in 0..n {
            shifted[i * n + i] += shift;
        }
        let chol = Cholesky::factor(&shifted, n)?;
        Ok(Self { n, gram, chol })
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = self.chol.solve(rhs);
        for _ in 0..REFINEMENT_STEPS {
            let residual: Vec<f64> = (0..n)
                .map(|i| {
                    let row = &self.gram[i * n..(i + 1) * n];
                    rhs[i] - row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            for (xi, d) in x.iter_mut().zip(self.chol.solve(&residual)) {
                *xi += d;
            }
        }
        x
    }
}

/// One-channel decomposition of an estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub target: Vec<f64>,
    pub interference: Vec<f64>,
    pub artifacts: Vec<f64>,
}

impl Decomposition {
    pub fn target_energy(&self) -> f64 {
        self.target.iter().map(|v| v * v).sum()
    }

    pub fn distortion_energy(&self) -> f64 {
        self.interference
            .iter()
            .zip(&self.artifacts)
            .map(|(a, b)| (a + b) * (a + b))
            .sum()
    }

    /// `e_interf + e_artif`.
    pub fn distortion(&self) -> Vec<f64> {
        self.interference
            .iter()
            .zip(&self.artifacts)
            .map(|(a, b)| a + b)
            .collect()
    }
}

/// Projection machinery for one channel of one window: the references'
/// spectra and the factored Gram matrices.
pub struct Projector {
    refs: Vec<Vec<f64>>,
    filter_len: usize,
    correlator: Correlator,
    spectra: Vec<Vec<Complex64>>,
    all: Normal,
    targets: Vec<Option<Normal>>,
}

impl Projector {
    pub fn new(refs: Vec<Vec<f64>>, filter_len: usize) -> Result<Self> {
        let len = refs.first().map_or(0, Vec::len);
        if refs.iter().any(|r| r.len() != len) {
            return Err(Error::shape("references differ in length"));
        }
        if filter_len == 0 {
            return Err(Error::InvalidConfig("filter_len must be at least 1".into()));
        }
        let correlator = Correlator::new(len, filter_len);
        let spectra: Vec<_> = refs.iter().map(|r| correlator.spectrum(r)).collect();
        let gram = build_gram(&refs, &spectra, &correlator, filter_len);
        let n = refs.len() * filter_len;
        let targets = refs
            .iter()
            .enumerate()
            .map(|(j, r)| {
                if r.iter().all(|&v| v == 0.0) {
                    return Ok(None);
                }
                let block: Vec<f64> = (0..filter_len)
                    .flat_map(|a| {
                        let row = (j * filter_len + a) * n + j * filter_len;
                        gram[row..row + filter_len].to_vec()
                    })
                    .collect();
                Normal::new(block, filter_len).map(Some)
            })
            .collect::<Result<Vec<_>>>()?;
        let all = Normal::new(gram, n)?;
        Ok(Self {
            refs,
            filter_len,
            correlator,
            spectra,
            all,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.refs[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn rhs(&self, est_spectrum: &[Complex64], sources: std::ops::Range<usize>) -> Vec<f64> {
        sources
            .flat_map(|k| {
                self.correlator
                    .xcorr(est_spectrum, &self.spectra[k], self.filter_len)
            })
            .collect()
    }

    /// `Σ_k Σ_b coef[k][b] · s_k(t - b)` for the sources in `first..`.
    fn synthesize(&self, coef: &[f64], first: usize) -> Vec<f64> {
        let size = self.correlator.size;
        let mut acc = vec![Complex64::new(0.0, 0.0); size];
        for (chunk, k) in coef.chunks(self.filter_len).zip(first..) {
            let h = self.correlator.spectrum(chunk);
            for ((a, x), y) in acc.iter_mut().zip(&h).zip(&self.spectra[k]) {
                *a += x * y;
            }
        }
        self.correlator.inverse_real(acc, self.len())
    }

    pub fn decompose(&self, source: usize, estimate: &[f64]) -> Result<Decomposition> {
        let len = self.len();
        if estimate.len() != len {
            return Err(Error::LengthMismatch {
                expected: len,
                got: estimate.len(),
            });
        }
        if estimate == self.refs[source].as_slice() {
            return Ok(Decomposition {
                target: estimate.to_vec(),
                interference: vec![0.0; len],
                artifacts: vec![0.0; len],
            });
        }
        let spectrum = self.correlator.spectrum(estimate);
        let target = match &self.targets[source] {
            Some(normal) => {
                let coef = normal.solve(&self.rhs(&spectrum, source..source + 1));
                self.synthesize(&coef, source)
            }
            None => vec![0.0; len],
        };
        let coef = self.all.solve(&self.rhs(&spectrum, 0..self.refs.len()));
        let projected = self.synthesize(&coef, 0);
        Ok(Decomposition {
            interference: projected.iter().zip(&target).map(|(p, t)| p - t).collect(),
            artifacts: estimate
                .iter()
                .zip(&projected)
                .map(|(e, p)| e - p)
                .collect(),
            target,
        })
    }
}

/// Gram matrix of the truncated delay matrix, row-major `(J·L)²`.
fn build_gram(
    refs: &[Vec<f64>],
    spectra: &[Vec<Complex64>],
    correlator: &Correlator,
    filter_len: usize,
) -> Vec<f64> {
    let j_count = refs.len();
    let l = filter_len;
    let n = j_count * l;
    let len = refs[0].len();
    let tail = |s: &[f64], a: usize| -> f64 {
        if a < len {
            s[len - 1 - a]
        } else {
            0.0
        }
    };
    let mut gram = vec![0.0; n * n];
    for i in 0..j_count {
        for k in 0..j_count {
            // xc_ik(d) = Σ_t s_i(t) s_k(t - d)
            let xc_ik = correlator.xcorr(&spectra[i], &spectra[k], l);
            let xc_ki = correlator.xcorr(&spectra[k], &spectra[i], l);
            let at = |a: usize, b: usize| (i * l + a) * n + k * l + b;
            for b in 0..l {
                gram[at(0, b)] = xc_ik[b];
            }
            for a in 1..l {
                gram[at(a, 0)] = xc_ki[a];
            }
            // dropping the last sample of both shifted copies
            for a in 0..l - 1 {
                for b in 0..l - 1 {
                    gram[at(a + 1, b + 1)] = gram[at(a, b)] - tail(&refs[i], a) * tail(&refs[k], b);
                }
            }
        }
    }
    // exact symmetry
    for r in 0..n {
        for c in r + 1..n {
            let v = 0.5 * (gram[r * n + c] + gram[c * n + r]);
            gram[r * n + c] = v;
            gram[c * n + r] = v;
        }
    }
    gram
}

/// Multichannel decomposition of `estimate` as an estimate of `source`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveDecomposition {
    pub target: Waveform,
    pub interference: Waveform,
    pub artifacts: Waveform,
}

pub fn project_subspace(
    references: &SourceWaveformSet,
    source: usize,
    estimate: &Waveform,
    filter_len: usize,
) -> Result<WaveDecomposition> {
    if source >= references.len() {
        return Err(Error::shape(format!("no source {source}")));
    }
    references[source].check_compatible(estimate)?;
    if references[source].samples().iter().all(|&v| v == 0.0) {
        return Err(Error::SilentReference(source));
    }
    let mut parts = (Vec::new(), Vec::new(), Vec::new());
    for c in 0..estimate.channels() {
        let refs = references.iter().map(|r| r.channel(c).to_vec()).collect();
        let d =
            Projector::new(refs, filter_len)?.decompose(source, &estimate.channel(c).to_vec())?;
        parts.0.push(d.target);
        parts.1.push(d.interference);
        parts.2.push(d.artifacts);
    }
    let rate = estimate.sample_rate();
    Ok(WaveDecomposition {
        target: Waveform::from_channels(parts.0, rate)?,
        interference: Waveform::from_channels(parts.1, rate)?,
        artifacts: Waveform::from_channels(parts.2, rate)?,
    })
}

/// Per-frame projectors for one window of all channels.
struct Frame {
    start: usize,
    len: usize,
    /// `None` where every reference channel is silent.
    channels: Vec<Option<Projector>>,
    /// Per-source reference energy over the window.
    ref_energy: Vec<f64>,
}

impl Frame {
    fn build(
        references: &SourceWaveformSet,
        start: usize,
        len: usize,
        filter_len: usize,
    ) -> Result<Self> {
        let slice =
            |w: &Waveform, c: usize| w.channel(c).slice(ndarray::s![start..start + len]).to_vec();
        let ref_energy = references
            .iter()
            .map(|r| {
                r.samples()
                    .slice(ndarray::s![.., start..start + len])
                    .iter()
                    .map(|v| v * v)
                    .sum()
            })
            .collect();
        let channels = (0..references.channels())
            .map(|c| {
                let refs: Vec<Vec<f64>> = references.iter().map(|r| slice(r, c)).collect();
                if refs.iter().flatten().all(|&v| v == 0.0) {
                    Ok(None)
                } else {
                    Projector::new(refs, filter_len).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            start,
            len,
            channels,
            ref_energy,
        })
    }

    fn is_silent(&self, source: usize) -> bool {
        self.ref_energy[source] < SILENCE_ENERGY
    }

    /// Per-channel `(target, distortion)` signals of `estimate` for `source`.
    fn split(&self, source: usize, estimate: &Waveform) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        (0..estimate.channels())
            .map(|c| {
                let est = estimate
                    .channel(c)
                    .slice(ndarray::s![self.start..self.start + self.len])
                    .to_vec();
                match &self.channels[c] {
                    Some(p) => {
                        let d = p.decompose(source, &est)?;
                        let distortion = d.distortion();
                        Ok((d.target, distortion))
                    }
                    None => Ok((vec![0.0; est.len()], est)),
                }
            })
            .collect()
    }

    fn sdr(&self, source: usize, estimate: &Waveform) -> Result<Option<f64>> {
        if self.is_silent(source) {
            return Ok(None);
        }
        let (mut target, mut distortion) = (0.0, 0.0);
        for (t, d) in self.split(source, estimate)? {
            target += t.iter().map(|v| v * v).sum::<f64>();
            distortion += d.iter().map(|v| v * v).sum::<f64>();
        }
        Ok(Some(sdr_from_energies(target, distortion)))
    }
}

fn check_pair(references: &SourceWaveformSet, estimates: &SourceWaveformSet) -> Result<()> {
    references.check_compatible(estimates)?;
    if references.signal_len() == 0 {
        return Err(Error::EmptySignal);
    }
    Ok(())
}

fn source_label(j: usize) -> String {
    Source::ALL
        .get(j)
        .map_or_else(|| format!("source{j}"), |s| s.name().to_string())
}

/// Framewise SDR of every source.
pub fn sdr_frames(
    references: &SourceWaveformSet,
    estimates: &SourceWaveformSet,
    cfg: &EvalConfig,
) -> Result<SdrReport> {
    cfg.validate()?;
    check_pair(references, estimates)?;
    let windows = cfg.windows(references.signal_len(), references.sample_rate());
    // frames are self-contained; results come back in frame order
    let per_frame = map_indexed(windows.len(), |i| -> Result<Vec<Option<f64>>> {
        let (start, len) = windows[i];
        let frame = Frame::build(references, start, len, cfg.filter_len)?;
        (0..references.len())
            .map(|j| frame.sdr(j, &estimates[j]))
            .collect()
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let sources = (0..references.len())
        .map(|j| SourceScores::new(source_label(j), per_frame.iter().map(|f| f[j]).collect()))
        .collect();
    Ok(SdrReport::new(sources, *cfg))
}

/// Median of the finite values, averaging the middle pair for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

fn mean_of(medians: &[Option<f64>]) -> Option<f64> {
    let vals: Option<Vec<f64>> = medians.iter().copied().collect();
    let vals = vals?;
    if vals.is_empty() {
        return None;
    }
    Some(vals.iter().sum::<f64>() / vals.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceScores {
    pub source: String,
    /// Framewise SDR in dB; `null` marks frames with a silent reference.
    pub frames: Vec<Option<f64>>,
    pub median: Option<f64>,
}

impl SourceScores {
    pub fn new(source: String, frames: Vec<Option<f64>>) -> Self {
        let included: Vec<f64> = frames.iter().flatten().copied().collect();
        Self {
            source,
            median: median(&included),
            frames,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdrReport {
    pub sources: Vec<SourceScores>,
    /// Mean of the per-source medians.
    pub overall_avg: Option<f64>,
    pub config: EvalConfig,
}

impl SdrReport {
    pub fn new(sources: Vec<SourceScores>, config: EvalConfig) -> Self {
        let medians: Vec<Option<f64>> = sources.iter().map(|s| s.median).collect();
        Self {
            overall_avg: mean_of(&medians),
            sources,
            config,
        }
    }

    pub fn summary(&self) -> SdrSummary {
        SdrSummary::new(
            self.sources.iter().map(|s| s.source.clone()).collect(),
            self.sources.iter().map(|s| s.median).collect(),
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json();
        text.push('\n');
        write_atomic(path.as_ref(), text.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            context: path.display().to_string(),
            source,
        })
    }
}

/// Per-source medians and their mean: one row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdrSummary {
    pub sources: Vec<String>,
    pub medians: Vec<Option<f64>>,
    pub avg: Option<f64>,
}

impl SdrSummary {
    pub fn new(sources: Vec<String>, medians: Vec<Option<f64>>) -> Self {
        Self {
            avg: mean_of(&medians),
            sources,
            medians,
        }
    }

    /// Header `Drums,Bass,Other,Vocals,Avg` and one row of values.
    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:.3}"));
        let header: Vec<String> = self
            .sources
            .iter()
            .map(|s| {
                s.parse::<Source>()
                    .map_or_else(|_| s.clone(), |src| src.title().to_string())
            })
            .chain(std::iter::once("Avg".to_string()))
            .collect();
        let row: Vec<String> = self
            .medians
            .iter()
            .copied()
            .chain(std::iter::once(self.avg))
            .map(fmt)
            .collect();
        format!("{}\n{}\n", header.join(","), row.join(","))
    }
}

/// Median over tracks of each source's median, and the mean of those.
pub fn aggregate(reports: &[SdrSummary]) -> Result<SdrSummary> {
    let first = reports.first().ok_or(Error::EmptyInput)?;
    if reports.iter().any(|r| r.sources != first.sources) {
        return Err(Error::shape("reports cover different sources"));
    }
    let medians = (0..first.sources.len())
        .map(|j| {
            let per_track: Vec<f64> = reports.iter().filter_map(|r| r.medians[j]).collect();
            median(&per_track)
        })
        .collect();
    Ok(SdrSummary::new(first.sources.clone(), medians))
}

/// SDR metric for weight search: median framewise SDR of the blended stem.
///
/// The projection is linear, so each model's stem is decomposed once per
/// frame and a weight column `w` scores as `wᵀAw / wᵀBw`, where `A` and `B`
/// hold inner products of the per-model targets and distortions.
impl SourceMetric for EvalConfig {
    fn prepare<'a>(
        &'a self,
        references: &'a SourceWaveformSet,
        source: usize,
        stems: &[&'a Waveform],
    ) -> Result<Scorer<'a>> {
        self.validate()?;
        for s in stems {
            references[source].check_compatible(s)?;
        }
        let models = stems.len();
        let windows = self.windows(references.signal_len(), references.sample_rate());
        let grams = map_indexed(windows.len(), |i| -> Result<Option<(Vec<f64>, Vec<f64>)>> {
            let (start, len) = windows[i];
            let frame = Frame::build(references, start, len, self.filter_len)?;
            if frame.is_silent(source) {
                return Ok(None);
            }
            let splits = stems
                .iter()
                .map(|s| frame.split(source, s))
                .collect::<Result<Vec<_>>>()?;
            let mut target = vec![0.0; models * models];
            let mut distortion = vec![0.0; models * models];
            for m in 0..models {
                for n in 0..models {
                    for (cm, cn) in splits[m].iter().zip(&splits[n]) {
                        target[m * models + n] += dot(&cm.0, &cn.0);
                        distortion[m * models + n] += dot(&cm.1, &cn.1);
                    }
                }
            }
            Ok(Some((target, distortion)))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

        Ok(Box::new(move |w: &[f64]| {
            let quad = |g: &[f64]| -> f64 {
                let mut acc = 0.0;
                for m in 0..models {
                    for n in 0..models {
                        acc += w[m] * g[m * models + n] * w[n];
                    }
                }
                acc
            };
            let frames: Vec<f64> = grams
                .iter()
                .flatten()
                .map(|(a, b)| sdr_from_energies(quad(a), quad(b)))
                .collect();
            Ok(median(&frames).unwrap_or(f64::NEG_INFINITY))
        }))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
