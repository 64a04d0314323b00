// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense numeric kernels: row-major `f32` matrices, stable softmax,
//! RMS normalization and a seeded random stream.
//!
//! Storage is `f32`; reductions (dot products, softmax partition sums,
//! mean squares) accumulate in `f64`. Probability vectors are kept in `f64`
//! so that divergence sums over a full vocabulary stay stable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Name of the generator behind [`RngStream`]. Weight files written with
/// format version 1 were initialized with this generator.
pub const RNG_ALGORITHM: &str = "chacha8 (rand_chacha 0.3, seed_from_u64)";

/// Default epsilon for [`rms_norm`].
pub const RMS_EPS: f32 = 1e-6;

/// Row-major dense matrix of `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "matrix contains non-finite entries".into(),
            ));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from a generator called in row-major order.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                values.push(f(r, c));
            }
        }
        Self { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.values[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn scale(&mut self, factor: f32) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }
}

/// Standard matrix product `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch {
            op: "matmul",
            left_rows: a.rows,
            left_cols: a.cols,
            right_rows: b.rows,
            right_cols: b.cols,
        });
    }
    let mut out = Vec::with_capacity(a.rows * b.cols);
    let mut acc = vec![0f64; b.cols];
    for r in 0..a.rows {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for (k, &a_rk) in a.row(r).iter().enumerate() {
            let a_rk = f64::from(a_rk);
            for (slot, &b_kc) in acc.iter_mut().zip(b.row(k)) {
                *slot += a_rk * f64::from(b_kc);
            }
        }
        out.extend(acc.iter().map(|&v| v as f32));
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "matmul overflowed to a non-finite value".into(),
        ));
    }
    Ok(Matrix {
        rows: a.rows,
        cols: b.cols,
        values: out,
    })
}

/// Row vector times matrix: `x · m`.
pub fn vecmat(x: &[f32], m: &Matrix) -> Result<Vec<f32>> {
    if x.len() != m.rows {
        return Err(Error::DimensionMismatch {
            op: "vecmat",
            left_rows: 1,
            left_cols: x.len(),
            right_rows: m.rows,
            right_cols: m.cols,
        });
    }
    let mut acc = vec![0f64; m.cols];
    for (k, &x_k) in x.iter().enumerate() {
        let x_k = f64::from(x_k);
        for (slot, &m_kc) in acc.iter_mut().zip(m.row(k)) {
            *slot += x_k * f64::from(m_kc);
        }
    }
    Ok(acc.into_iter().map(|v| v as f32).collect())
}

/// Matrix times column vector: `m · x`.
pub fn matvec(m: &Matrix, x: &[f32]) -> Result<Vec<f32>> {
    if x.len() != m.cols {
        return Err(Error::DimensionMismatch {
            op: "matvec",
            left_rows: m.rows,
            left_cols: m.cols,
            right_rows: x.len(),
            right_cols: 1,
        });
    }
    Ok((0..m.rows).map(|r| dot(m.row(r), x) as f32).collect())
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// A probability distribution over a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbDist {
    probs: Vec<f64>,
}

impl ProbDist {
    /// Tolerance on the total mass.
    pub const SUM_TOLERANCE: f64 = 1e-6;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidInput("empty distribution".into()));
        }
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidInput(format!("invalid probability {bad}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.probs[i]
    }

    /// Index of the most probable entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// The `k` most probable entries, descending by probability, ties by index.
    pub fn top_k(&self, k: usize) -> Vec<(usize, f64)> {
        let mut idx: Vec<usize> = (0..self.probs.len()).collect();
        idx.sort_by(|&a, &b| self.probs[b].total_cmp(&self.probs[a]).then(a.cmp(&b)));
        idx.truncate(k);
        idx.into_iter().map(|i| (i, self.probs[i])).collect()
    }

    /// Total-variation distance `½ Σ |p_i − q_i|`.
    pub fn total_variation(&self, other: &ProbDist) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                op: "total_variation",
                left: self.len(),
                right: other.len(),
            });
        }
        Ok(0.5
            * self
                .probs
                .iter()
                .zip(&other.probs)
                .map(|(p, q)| (p - q).abs())
                .sum::<f64>())
    }
}

/// Numerically stable softmax (max subtracted before exponentiation).
pub fn softmax<T: Copy + Into<f64>>(logits: &[T]) -> Result<ProbDist> {
    if logits.is_empty() {
        return Err(Error::InvalidInput("softmax of an empty vector".into()));
    }
    let xs: Vec<f64> = logits.iter().map(|&v| v.into()).collect();
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "softmax input contains non-finite logits".into(),
        ));
    }
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(ProbDist {
        probs: exps.into_iter().map(|e| e / total).collect(),
    })
}

/// `out[i] = gain[i] · x[i] / sqrt(mean(x²) + eps)`.
///
/// An all-zero input yields an all-zero output even when `eps == 0`.
pub fn rms_norm(x: &[f32], gain: &[f32], eps: f32) -> Result<Vec<f32>> {
    if x.len() != gain.len() {
        return Err(Error::LengthMismatch {
            op: "rms_norm",
            left: x.len(),
            right: gain.len(),
        });
    }
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::InvalidInput(format!(
            "rms_norm eps must be >= 0, got {eps}"
        )));
    }
    if x.is_empty() {
        return Ok(Vec::new());
    }
    let mean_sq = x.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>() / x.len() as f64;
    let denom = (mean_sq + f64::from(eps)).sqrt();
    if denom == 0.0 {
        return Ok(vec![0.0; x.len()]);
    }
    Ok(x.iter()
        .zip(gain)
        .map(|(&v, &g)| (f64::from(g) * f64::from(v) / denom) as f32)
        .collect())
}

/// Seeded deterministic random stream (ChaCha8, see [`RNG_ALGORITHM`]).
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// An independent sub-stream of `seed`, selected by the ChaCha stream id.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `n` draws from `[0, 1)`.
    pub fn uniform(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.rng.gen::<f64>()).collect()
    }

    /// One draw from `[lo, hi)` as `f32`.
    pub fn uniform_range(&mut self, lo: f32, hi: f32) -> f32 {
        lo + (hi - lo) * self.rng.gen::<f32>()
    }

    /// One standard normal draw.
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// `k` distinct indices from `0..n`, in sampling order.
    pub fn choose_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.rng, n, k.min(n)).into_vec()
    }
}

/// Free-function form of [`RngStream::uniform`].
pub fn rng_uniform(stream: &mut RngStream, n: usize) -> Vec<f64> {
    stream.uniform(n)
}
