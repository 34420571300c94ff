//! Late fusion: per-source convex combinations of several models' stems,
//! and an exhaustive simplex-grid search for the combination weights.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::audio_io::Waveform;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::par::map_indexed;
use crate::source::{Source, SourceWaveformSet};

pub const COLUMN_SUM_TOLERANCE: f64 = 1e-6;

const DEFAULT_WEIGHTS_JSON: &str = include_str!("../data/default_weights.json");

/// On-disk layout of a weights file. Rows are models, columns are sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawWeights {
    pub models: Vec<String>,
    pub sources: Vec<Source>,
    pub weights: Vec<Vec<f64>>,
}

/// A validated model × source weight matrix whose columns lie on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendWeights {
    raw: RawWeights,
}

impl BlendWeights {
    /// The shipped fusion weights for the (x-umx, u-net, demucs) trio.
    pub fn default_fusion() -> Self {
        let raw: RawWeights =
            serde_json::from_str(DEFAULT_WEIGHTS_JSON).expect("embedded weights parse");
        validate_weights(raw).expect("embedded weights are valid")
    }

    /// Every source taken entirely from a single model.
    pub fn single_model(name: impl Into<String>, sources: Vec<Source>) -> Self {
        let n = sources.len();
        Self {
            raw: RawWeights {
                models: vec![name.into()],
                sources,
                weights: vec![vec![1.0; n]],
            },
        }
    }

    pub fn models(&self) -> &[String] {
        &self.raw.models
    }

    pub fn sources(&self) -> &[Source] {
        &self.raw.sources
    }

    pub fn model_count(&self) -> usize {
        self.raw.models.len()
    }

    pub fn weight(&self, model: usize, source: usize) -> f64 {
        self.raw.weights[model][source]
    }

    pub fn column(&self, source: usize) -> Vec<f64> {
        self.raw.weights.iter().map(|row| row[source]).collect()
    }

    pub fn raw(&self) -> &RawWeights {
        &self.raw
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.raw).expect("weights serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawWeights = serde_json::from_str(text).map_err(|source| Error::Json {
            context: "weights".into(),
            source,
        })?;
        validate_weights(raw)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: RawWeights = serde_json::from_str(&text).map_err(|source| Error::Json {
            context: path.display().to_string(),
            source,
        })?;
        validate_weights(raw)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json();
        text.push('\n');
        write_atomic(path.as_ref(), text.as_bytes())
    }
}

/// Accepts a weight matrix iff every entry is finite and nonnegative and every
/// source column sums to one. Nothing is renormalized.
pub fn validate_weights(raw: RawWeights) -> Result<BlendWeights> {
    if raw.models.is_empty() || raw.sources.is_empty() {
        return Err(Error::InvalidConfig(
            "weights need at least one model and one source".into(),
        ));
    }
    if raw.weights.len() != raw.models.len() {
        return Err(Error::ModelCountMismatch {
            models: raw.models.len(),
            weights: raw.weights.len(),
        });
    }
    if let Some(row) = raw.weights.iter().find(|r| r.len() != raw.sources.len()) {
        return Err(Error::shape(format!(
            "weight row has {} entries for {} sources",
            row.len(),
            raw.sources.len()
        )));
    }
    for (m, row) in raw.weights.iter().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::InvalidConfig(format!("non-finite weight {w}")));
            }
            if w < 0.0 {
                return Err(Error::NegativeWeight {
                    model: m,
                    source_name: raw.sources[j].to_string(),
                    value: w,
                });
            }
        }
    }
    for (j, src) in raw.sources.iter().enumerate() {
        let sum: f64 = raw.weights.iter().map(|r| r[j]).sum();
        if (sum - 1.0).abs() > COLUMN_SUM_TOLERANCE {
            return Err(Error::ColumnSumViolation {
                source_name: src.to_string(),
                sum,
            });
        }
    }
    Ok(BlendWeights { raw })
}

fn check_stems(per_model: &[SourceWaveformSet]) -> Result<()> {
    let first = per_model
        .first()
        .ok_or_else(|| Error::InvalidConfig("no model outputs to blend".into()))?;
    for stems in &per_model[1..] {
        first.check_compatible(stems)?;
    }
    Ok(())
}

/// Convex combination `Σ_m w[m] · stems[m]` for one source.
pub fn blend_source(stems: &[&Waveform], column: &[f64]) -> Result<Waveform> {
    let first = stems[0];
    let mut acc = Array2::<f64>::zeros(first.samples().raw_dim());
    for (w, &s) in column.iter().zip(stems) {
        acc.scaled_add(*w, s.samples());
    }
    Waveform::new(acc, first.sample_rate())
}

pub fn blend(per_model_stems: &[SourceWaveformSet], w: &BlendWeights) -> Result<SourceWaveformSet> {
    check_stems(per_model_stems)?;
    if per_model_stems.len() != w.model_count() {
        return Err(Error::ModelCountMismatch {
            models: per_model_stems.len(),
            weights: w.model_count(),
        });
    }
    let sources = per_model_stems[0].len();
    if sources != w.sources().len() {
        return Err(Error::shape(format!(
            "{} stems per model but weights cover {} sources",
            sources,
            w.sources().len()
        )));
    }
    let fused = (0..sources)
        .map(|j| {
            let stems: Vec<&Waveform> = per_model_stems.iter().map(|m| &m[j]).collect();
            blend_source(&stems, &w.column(j))
        })
        .collect::<Result<Vec<_>>>()?;
    SourceWaveformSet::new(fused)
}

/// Score of one weight column; higher is better.
pub type Scorer<'a> = Box<dyn Fn(&[f64]) -> Result<f64> + Sync + 'a>;

/// Scores convex combinations of several models' stems for one source.
pub trait SourceMetric {
    /// Precomputes what depends only on the references and the per-model
    /// stems of `source`, and returns a scorer taking a weight column
    /// (one entry per model). Higher scores are better.
    fn prepare<'a>(
        &'a self,
        references: &'a SourceWaveformSet,
        source: usize,
        stems: &[&'a Waveform],
    ) -> Result<Scorer<'a>>;
}

/// All nonnegative integer vectors of length `parts` summing to `total`, in
/// ascending lexicographic order.
pub fn simplex_grid(parts: usize, total: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, parts: usize, remaining: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() + 1 == parts {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=remaining {
            prefix.push(k);
            rec(prefix, parts, remaining - k, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts > 0 {
        rec(&mut Vec::with_capacity(parts), parts, total, &mut out);
    }
    out
}

/// Number of grid steps in `[0, 1]`; `step` must divide one evenly.
pub fn grid_divisions(step: f64) -> Result<usize> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "grid step {step} outside (0, 1]"
        )));
    }
    let n = (1.0 / step).round();
    if (n * step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "grid step {step} does not divide 1"
        )));
    }
    Ok(n as usize)
}

/// Exhaustive per-source search over simplex-grid weight columns.
///
/// Each source is optimized independently. Among equal scores the
/// lexicographically smallest column wins, independent of evaluation order.
pub fn search_weights<M: SourceMetric + ?Sized>(
    per_model_stems: &[SourceWaveformSet],
    model_names: &[String],
    references: &SourceWaveformSet,
    grid_step: f64,
    metric: &M,
) -> Result<BlendWeights> {
    check_stems(per_model_stems)?;
    if model_names.len() != per_model_stems.len() {
        return Err(Error::ModelCountMismatch {
            models: per_model_stems.len(),
            weights: model_names.len(),
        });
    }
    per_model_stems[0].check_compatible(references)?;
    let divisions = grid_divisions(grid_step)?;
    let models = per_model_stems.len();
    let grid = simplex_grid(models, divisions);
    let sources = references.len();

    let mut columns = Vec::with_capacity(sources);
    for j in 0..sources {
        let stems: Vec<&Waveform> = per_model_stems.iter().map(|m| &m[j]).collect();
        let score = metric.prepare(references, j, &stems)?;
        let scores = map_indexed(grid.len(), |g| score(&to_weights(&grid[g], divisions)))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let mut best = 0;
        for (g, s) in scores.iter().enumerate() {
            // NaN never wins; strict comparison keeps the earliest (smallest) column
            if *s > scores[best] || scores[best].is_nan() && !s.is_nan() {
                best = g;
            }
        }
        columns.push(to_weights(&grid[best], divisions));
    }

    let labels: Vec<Source> = (0..sources)
        .map(|j| Source::ALL.get(j).copied().unwrap_or(Source::Other))
        .collect();
    validate_weights(RawWeights {
        models: model_names.to_vec(),
        sources: labels,
        weights: (0..models)
            .map(|m| columns.iter().map(|c| c[m]).collect())
            .collect(),
    })
}

fn to_weights(counts: &[usize], divisions: usize) -> Vec<f64> {
    counts
        .iter()
        .map(|&k| k as f64 / divisions as f64)
        .collect()
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn raw(weights: Vec<Vec<f64>>) -> RawWeights {
        RawWeights {
            models: (0..weights.len()).map(|m| format!("m{m}")).collect(),
            sources: Source::ALL[..weights[0].len()].to_vec(),
            weights,
        }
    }

    fn random_set(rng: &mut ChaCha8Rng, sources: usize, len: usize) -> SourceWaveformSet {
        SourceWaveformSet::new(
            (0..sources)
                .map(|_| {
                    Waveform::from_channels(
                        (0..2)
                            .map(|_| (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())
                            .collect(),
                        8000,
                    )
                    .unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    fn constant_set(values: [f64; 4]) -> SourceWaveformSet {
        SourceWaveformSet::new(
            values
                .iter()
                .map(|&v| Waveform::from_channels(vec![vec![v; 16]], 8000).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn default_fusion_weights() {
        let w = BlendWeights::default_fusion();
        assert_eq!(w.models(), ["x-umx", "u-net", "demucs"]);
        assert_eq!(w.sources(), Source::ALL);
        assert_eq!(w.column(0), vec![0.2, 0.2, 0.6]);
        assert_eq!(w.column(1), vec![0.1, 0.17, 0.73]);
        assert_eq!(w.column(2), vec![0.0, 0.5, 0.5]);
        assert_eq!(w.column(3), vec![0.2, 0.4, 0.4]);
        for j in 0..4 {
            assert!((w.column(j).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn validation_rules() {
        assert!(validate_weights(raw(vec![vec![1.0; 4], vec![0.0; 4], vec![0.0; 4]])).is_ok());
        match validate_weights(raw(vec![vec![0.5; 4], vec![0.5; 4], vec![0.5; 4]])) {
            Err(Error::ColumnSumViolation { source_name, sum }) => {
                assert_eq!(source_name, "drums");
                assert!((sum - 1.5).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            validate_weights(raw(vec![vec![1.5, 1.0], vec![-0.5, 0.0]])),
            Err(Error::NegativeWeight { model: 1, .. })
        ));
        let mut r = raw(vec![vec![1.0; 4]]);
        r.models.push("extra".into());
        assert!(matches!(
            validate_weights(r),
            Err(Error::ModelCountMismatch { .. })
        ));
    }

    #[test]
    fn json_round_trip_and_schema() {
        let w = BlendWeights::default_fusion();
        let value: serde_json::Value = serde_json::from_str(&w.to_json()).unwrap();
        assert_eq!(value["sources"][3], "vocals");
        assert_eq!(value["weights"][2][1], 0.73);
        assert_eq!(BlendWeights::from_json(&w.to_json()).unwrap(), w);
    }

    #[test]
    fn identical_models_are_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let stems = random_set(&mut rng, 4, 100);
        let fused = blend(
            &[stems.clone(), stems.clone(), stems.clone()],
            &BlendWeights::default_fusion(),
        )
        .unwrap();
        for (a, b) in fused.iter().zip(&stems) {
            for (x, y) in a.samples().iter().zip(b.samples()) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn drums_column_arithmetic() {
        let a = constant_set([1.0; 4]);
        let b = constant_set([1.0; 4]);
        let c = constant_set([0.0; 4]);
        let fused = blend(&[a, b, c], &BlendWeights::default_fusion()).unwrap();
        for v in fused[0].samples() {
            assert!((v - 0.4).abs() < 1e-15);
        }
    }

    #[test]
    fn blend_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let models: Vec<_> = (0..3).map(|_| random_set(&mut rng, 4, 50)).collect();
        let mut weights = vec![vec![0.0; 4]; 3];
        for j in 0..4 {
            let r: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
            let s: f64 = r.iter().sum();
            for m in 0..3 {
                weights[m][j] = r[m] / s;
            }
        }
        let w = validate_weights(raw(weights.clone())).unwrap();
        let fused = blend(&models, &w).unwrap();
        for j in 0..4 {
            for c in 0..2 {
                for i in 0..50 {
                    let mut expect = 0.0;
                    for m in 0..3 {
                        expect += weights[m][j] * models[m][j].samples()[[c, i]];
                    }
                    assert!((fused[j].samples()[[c, i]] - expect).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn blend_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let a = random_set(&mut rng, 4, 20);
        let short = random_set(&mut rng, 4, 21);
        let w = BlendWeights::default_fusion();
        assert!(matches!(
            blend(&[a.clone(), a.clone()], &w),
            Err(Error::ModelCountMismatch {
                models: 2,
                weights: 3
            })
        ));
        assert!(matches!(
            blend(&[a.clone(), short, a.clone()], &w),
            Err(Error::LengthMismatch { .. })
        ));
        let resampled = SourceWaveformSet::new(
            a.iter()
                .map(|s| Waveform::new(s.samples().clone(), 16000).unwrap())
                .collect(),
        )
        .unwrap();
        assert!(matches!(
            blend(&[a.clone(), resampled, a], &w),
            Err(Error::SampleRateMismatch { .. })
        ));
    }

    #[test]
    fn grid_enumeration() {
        assert_eq!(simplex_grid(1, 4), vec![vec![4]]);
        assert_eq!(simplex_grid(2, 2), vec![vec![0, 2], vec![1, 1], vec![2, 0]]);
        // C(n + m - 1, m - 1) points
        assert_eq!(simplex_grid(3, 100).len(), 5151);
        assert_eq!(grid_divisions(0.01).unwrap(), 100);
        assert_eq!(grid_divisions(0.05).unwrap(), 20);
        assert!(grid_divisions(0.3).is_err());
        assert!(grid_divisions(0.0).is_err());
    }

    /// Negative squared error; higher is better.
    struct NegMse;

    impl SourceMetric for NegMse {
        fn prepare<'a>(
            &'a self,
            references: &'a SourceWaveformSet,
            source: usize,
            stems: &[&'a Waveform],
        ) -> Result<Scorer<'a>> {
            let stems = stems.to_vec();
            Ok(Box::new(move |column: &[f64]| {
                let fused = blend_source(&stems, column)?;
                Ok(-references[source]
                    .samples()
                    .iter()
                    .zip(fused.samples())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>())
            }))
        }
    }

    /// Every candidate scores the same.
    struct Flat;

    impl SourceMetric for Flat {
        fn prepare<'a>(
            &'a self,
            _: &'a SourceWaveformSet,
            _: usize,
            _: &[&'a Waveform],
        ) -> Result<Scorer<'a>> {
            Ok(Box::new(|_: &[f64]| Ok(1.0)))
        }
    }

    #[test]
    fn search_single_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let r = random_set(&mut rng, 4, 30);
        let w = search_weights(
            std::slice::from_ref(&r),
            &["only".to_string()],
            &r,
            0.25,
            &NegMse,
        )
        .unwrap();
        assert_eq!(w.raw().weights, vec![vec![1.0; 4]]);
    }

    #[test]
    fn search_prefers_exact_model_and_cancellation() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let refs = random_set(&mut rng, 4, 64);
        let noise = random_set(&mut rng, 4, 64);
        let names = vec!["a".to_string(), "b".to_string()];
        let w =
            search_weights(&[refs.clone(), noise.clone()], &names, &refs, 0.1, &NegMse).unwrap();
        assert_eq!(w.column(2), vec![1.0, 0.0]);

        let plus = SourceWaveformSet::new(
            refs.iter()
                .zip(&noise)
                .map(|(r, n)| Waveform::new(r.samples() + n.samples(), 8000).unwrap())
                .collect(),
        )
        .unwrap();
        let minus = SourceWaveformSet::new(
            refs.iter()
                .zip(&noise)
                .map(|(r, n)| Waveform::new(r.samples() - n.samples(), 8000).unwrap())
                .collect(),
        )
        .unwrap();
        let w = search_weights(&[plus, minus], &names, &refs, 0.5, &NegMse).unwrap();
        for j in 0..4 {
            assert_eq!(w.column(j), vec![0.5, 0.5]);
        }
    }

    #[test]
    fn ties_pick_lexicographically_smallest() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let r = random_set(&mut rng, 4, 10);
        let names: Vec<String> = (0..3).map(|m| format!("m{m}")).collect();
        let w = search_weights(&[r.clone(), r.clone(), r.clone()], &names, &r, 0.5, &Flat).unwrap();
        assert_eq!(w.column(0), vec![0.0, 0.0, 1.0]);
    }

    proptest! {
        #[test]
        fn blend_is_linear(scale in -3.0f64..3.0, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let models: Vec<_> = (0..3).map(|_| random_set(&mut rng, 4, 12)).collect();
            let scaled: Vec<_> = models.iter().map(|m| SourceWaveformSet::new(
                m.iter().map(|w| Waveform::new(w.samples() * scale, 8000).unwrap()).collect()).unwrap()).collect();
            let w = BlendWeights::default_fusion();
            let a = blend(&scaled, &w).unwrap();
            let b = blend(&models, &w).unwrap();
            for (x, y) in a.iter().zip(&b) {
                for (p, q) in x.samples().iter().zip(y.samples()) {
                    prop_assert!((p - scale * q).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn search_output_is_valid(seed in 0u64..200, step_idx in 0usize..3) {
            let step = [0.5, 0.25, 0.2][step_idx];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let refs = random_set(&mut rng, 4, 8);
            let models: Vec<_> = (0..3).map(|_| random_set(&mut rng, 4, 8)).collect();
            let names: Vec<String> = (0..3).map(|m| format!("m{m}")).collect();
            let w = search_weights(&models, &names, &refs, step, &NegMse).unwrap();
            prop_assert!(validate_weights(w.raw().clone()).is_ok());
        }
    }
}
