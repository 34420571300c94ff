//! Independent reference implementations and fixtures shared by the
//! integration and acceptance tests. Nothing here calls the library's
//! numerical routines; only the data types are shared.

#![allow(dead_code)]

use std::f64::consts::PI;

use ndarray::Array3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stemfuse::{SourceWaveformSet, Waveform};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn noise(rng: &mut ChaCha8Rng, channels: usize, len: usize, rate: u32, amp: f64) -> Waveform {
    Waveform::from_channels(
        (0..channels)
            .map(|_| (0..len).map(|_| rng.gen_range(-amp..amp)).collect())
            .collect(),
        rate,
    )
    .unwrap()
}

/// Four sources occupying different registers: a kick-like burst train,
/// a low sine, mid-band noise and a high sine, with per-channel panning.
pub fn synthetic_sources(
    rng: &mut ChaCha8Rng,
    channels: usize,
    len: usize,
    rate: u32,
) -> SourceWaveformSet {
    let sr = rate as f64;
    let pan: Vec<f64> = (0..4).map(|_| rng.gen_range(0.2..0.8)).collect();
    let gain = |j: usize, c: usize| {
        if channels == 1 {
            1.0
        } else if c == 0 {
            pan[j]
        } else {
            1.0 - pan[j]
        }
    };
    let period = (sr * 0.5) as usize;
    let drums: Vec<f64> = (0..len)
        .map(|i| {
            let t = (i % period) as f64 / sr;
            (2.0 * PI * 600.0 * t).sin() * (-t * 30.0).exp() * 0.5
        })
        .collect();
    let bass: Vec<f64> = (0..len)
        .map(|i| 0.4 * (2.0 * PI * 110.0 * i as f64 / sr).sin())
        .collect();
    let other: Vec<f64> = {
        let raw: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // crude band emphasis: difference of neighbours
        (0..len)
            .map(|i| 0.1 * (raw[i] - if i > 0 { raw[i - 1] } else { 0.0 }))
            .collect()
    };
    let vocals: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64 / sr;
            0.3 * (2.0 * PI * (880.0 + 40.0 * (2.0 * PI * 5.0 * t).sin()) * t).sin()
        })
        .collect();
    let mono = [drums, bass, other, vocals];
    SourceWaveformSet::new(
        mono.iter()
            .enumerate()
            .map(|(j, x)| {
                Waveform::from_channels(
                    (0..channels)
                        .map(|c| x.iter().map(|v| v * gain(j, c)).collect())
                        .collect(),
                    rate,
                )
                .unwrap()
            })
            .collect(),
    )
    .unwrap()
}

pub fn mixture(sources: &SourceWaveformSet) -> Waveform {
    let mut acc = sources[0].samples().clone();
    for s in sources.iter().skip(1) {
        acc += s.samples();
    }
    Waveform::new(acc, sources.sample_rate()).unwrap()
}

/// Two models whose errors share a component of opposite sign plus small
/// independent residuals: model A = s + n + a, model B = s − n + b.
pub fn complementary_models(
    refs: &SourceWaveformSet,
    rng: &mut ChaCha8Rng,
    shared: f64,
    residual: f64,
) -> (SourceWaveformSet, SourceWaveformSet) {
    let (c, len, rate) = (refs.channels(), refs.signal_len(), refs.sample_rate());
    let mut a = Vec::new();
    let mut b = Vec::new();
    for s in refs {
        let n = noise(rng, c, len, rate, shared);
        let ra = noise(rng, c, len, rate, residual);
        let rb = noise(rng, c, len, rate, residual);
        a.push(Waveform::new(s.samples() + n.samples() + ra.samples(), rate).unwrap());
        b.push(Waveform::new(s.samples() - n.samples() + rb.samples(), rate).unwrap());
    }
    (
        SourceWaveformSet::new(a).unwrap(),
        SourceWaveformSet::new(b).unwrap(),
    )
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                let pivot_row = a[col].clone();
                for (x, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * p;
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Least-squares projection of `y` onto the columns of `cols` via dense
/// normal equations.
pub fn project(cols: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let n = cols.len();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let gram: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| dot(&cols[i], &cols[j])).collect())
        .collect();
    let rhs: Vec<f64> = cols.iter().map(|c| dot(c, y)).collect();
    let coef = gauss_solve(gram, rhs);
    (0..y.len())
        .map(|t| (0..n).map(|i| coef[i] * cols[i][t]).sum())
        .collect()
}

/// `s` delayed by `d` samples, zero-filled, same length.
pub fn delayed(s: &[f64], d: usize) -> Vec<f64> {
    (0..s.len())
        .map(|t| if t >= d { s[t - d] } else { 0.0 })
        .collect()
}

/// Target, interference and artifact signals of one channel by explicit
/// projection onto delayed copies of the references.
pub fn dense_decompose(
    refs: &[Vec<f64>],
    source: usize,
    est: &[f64],
    filter_len: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let all: Vec<Vec<f64>> = refs
        .iter()
        .flat_map(|r| (0..filter_len).map(move |d| delayed(r, d)))
        .collect();
    let target = dense_target(refs, source, est, filter_len);
    let projected = project(&all, est);
    let interference = projected.iter().zip(&target).map(|(p, t)| p - t).collect();
    let artifacts = est.iter().zip(&projected).map(|(e, p)| e - p).collect();
    (target, interference, artifacts)
}

pub fn dense_target(refs: &[Vec<f64>], source: usize, est: &[f64], filter_len: usize) -> Vec<f64> {
    let own: Vec<Vec<f64>> = (0..filter_len).map(|d| delayed(&refs[source], d)).collect();
    project(&own, est)
}

/// SDR of one window, pooling energies over channels.
pub fn dense_sdr(
    refs: &SourceWaveformSet,
    ests: &SourceWaveformSet,
    source: usize,
    filter_len: usize,
) -> f64 {
    let (mut tgt, mut dist) = (0.0, 0.0);
    for c in 0..refs.channels() {
        let r: Vec<Vec<f64>> = refs.iter().map(|w| w.channel(c).to_vec()).collect();
        let est = ests[source].channel(c).to_vec();
        let t = dense_target(&r, source, &est, filter_len);
        tgt += t.iter().map(|v| v * v).sum::<f64>();
        dist += est
            .iter()
            .zip(&t)
            .map(|(e, t)| (e - t).powi(2))
            .sum::<f64>();
    }
    10.0 * (tgt / dist).log10()
}

type C = (f64, f64);

fn cmul(a: C, b: C) -> C {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}
fn cadd(a: C, b: C) -> C {
    (a.0 + b.0, a.1 + b.1)
}
fn cconj(a: C) -> C {
    (a.0, -a.1)
}
fn cscale(a: C, s: f64) -> C {
    (a.0 * s, a.1 * s)
}
fn cdiv(a: C, b: C) -> C {
    let d = b.0 * b.0 + b.1 * b.1;
    cscale(cmul(a, cconj(b)), 1.0 / d)
}

/// One EM pass written with scalar arithmetic on (re, im) pairs, for up to
/// two channels. `est[j][c][t][f]`, `mix[c][t][f]`.
pub fn em_oracle(
    est: &[Array3<Complex64>],
    mix: &Array3<Complex64>,
    eps: f64,
) -> Vec<Array3<Complex64>> {
    let (channels, frames, bins) = mix.dim();
    let pair = |z: Complex64| (z.re, z.im);
    let j_count = est.len();
    let mut v = vec![vec![vec![0.0; bins]; frames]; j_count];
    for j in 0..j_count {
        for t in 0..frames {
            for f in 0..bins {
                let mut p = 0.0;
                for c in 0..channels {
                    p += est[j][[c, t, f]].norm_sqr();
                }
                v[j][t][f] = p / channels as f64;
            }
        }
    }
    // r[j][f][a][b]
    let mut r = vec![vec![[[(0.0, 0.0); 2]; 2]; bins]; j_count];
    for j in 0..j_count {
        for f in 0..bins {
            let den = eps + v[j].iter().map(|row| row[f]).sum::<f64>();
            for a in 0..channels {
                for b in 0..channels {
                    let mut acc = (0.0, 0.0);
                    for t in 0..frames {
                        acc = cadd(
                            acc,
                            cmul(pair(est[j][[a, t, f]]), cconj(pair(est[j][[b, t, f]]))),
                        );
                    }
                    r[j][f][a][b] = cscale(acc, 1.0 / den);
                }
            }
        }
    }
    let mut out: Vec<Array3<Complex64>> = (0..j_count).map(|_| Array3::zeros(mix.dim())).collect();
    for t in 0..frames {
        for f in 0..bins {
            let mut m = [[(0.0, 0.0); 2]; 2];
            for j in 0..j_count {
                for a in 0..channels {
                    for b in 0..channels {
                        m[a][b] = cadd(m[a][b], cscale(r[j][f][a][b], v[j][t][f]));
                    }
                }
            }
            for (a, row) in m.iter_mut().enumerate().take(channels) {
                row[a].0 += eps;
            }
            let x: Vec<C> = (0..channels).map(|c| pair(mix[[c, t, f]])).collect();
            // solve m · z = x by Cramer's rule
            let z: Vec<C> = if channels == 1 {
                vec![cdiv(x[0], m[0][0])]
            } else {
                let det = cadd(cmul(m[0][0], m[1][1]), cscale(cmul(m[0][1], m[1][0]), -1.0));
                vec![
                    cdiv(
                        cadd(cmul(x[0], m[1][1]), cscale(cmul(m[0][1], x[1]), -1.0)),
                        det,
                    ),
                    cdiv(
                        cadd(cmul(m[0][0], x[1]), cscale(cmul(m[1][0], x[0]), -1.0)),
                        det,
                    ),
                ]
            };
            for j in 0..j_count {
                for a in 0..channels {
                    let mut acc = (0.0, 0.0);
                    for b in 0..channels {
                        acc = cadd(acc, cmul(r[j][f][a][b], z[b]));
                    }
                    let y = cscale(acc, v[j][t][f]);
                    out[j][[a, t, f]] = Complex64::new(y.0, y.1);
                }
            }
        }
    }
    out
}

pub fn max_abs_diff<'a>(
    a: impl IntoIterator<Item = &'a f64>,
    b: impl IntoIterator<Item = &'a f64>,
) -> f64 {
    a.into_iter()
        .zip(b)
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
