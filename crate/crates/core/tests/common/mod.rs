//! Shared generators and independent oracles for the integration tests.
//!
//! Oracles here deliberately avoid the crate's own linear algebra: SVDs go
//! through nalgebra and tensor indexing is spelled out with nested loops.

#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tucker_saliency::{DenseMatrix, FeatureTensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform entries in `[-1, 1)`.
pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 3]) -> FeatureTensor {
    let n = shape.iter().product();
    FeatureTensor::new(shape, random_vec(rng, n)).unwrap()
}

pub fn random_shape(rng: &mut ChaCha8Rng, max: [usize; 3]) -> [usize; 3] {
    [
        rng.gen_range(1..=max[0]),
        rng.gen_range(1..=max[1]),
        rng.gen_range(1..=max[2]),
    ]
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::new(rows, cols, random_vec(rng, rows * cols)).unwrap()
}

/// `F[c, h, w] = a[c] · m[h * W + w]`.
pub fn rank1_tensor(a: &[f64], m: &[f64], height: usize, width: usize) -> FeatureTensor {
    FeatureTensor::from_fn([a.len(), height, width], |c, h, w| a[c] * m[h * width + w])
}

/// Channel weights bounded away from zero and a spatial map with real spread.
pub fn random_rank1(rng: &mut ChaCha8Rng, shape: [usize; 3]) -> (FeatureTensor, Vec<f64>) {
    let [c, h, w] = shape;
    let a: Vec<f64> = (0..c)
        .map(|_| {
            let s = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            s * rng.gen_range(0.2..1.5)
        })
        .collect();
    let mut m = random_vec(rng, h * w);
    m[0] = 2.0;
    if m.len() > 1 {
        m[1] = -0.5;
    }
    (rank1_tensor(&a, &m, h, w), m)
}

/// `(x - min) / (max - min)` of `|x|`, written out independently.
pub fn minmax_abs(x: &[f64]) -> Vec<f64> {
    let a: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    minmax(&a)
}

pub fn minmax(x: &[f64]) -> Vec<f64> {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-12 {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

/// Mode-1 unfolding written entry by entry: row `c`, column `h * W + w`.
pub fn mode1_unfold_na(t: &FeatureTensor) -> DMatrix<f64> {
    let [c, h, w] = t.shape();
    DMatrix::from_fn(c, h * w, |i, j| t.get(i, j / w, j % w))
}

/// Singular values in descending order, padded with zeros to `len`.
pub fn singular_values_na(m: DMatrix<f64>, len: usize) -> Vec<f64> {
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s.resize(len, 0.0);
    s
}

/// `‖QᵀQ - I‖_max` computed directly.
pub fn orthonormality_deviation(q: &DenseMatrix) -> f64 {
    let (rows, cols) = q.shape();
    let mut worst = 0.0f64;
    for a in 0..cols {
        for b in 0..cols {
            let dot: f64 = (0..rows).map(|r| q.get(r, a) * q.get(r, b)).sum();
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((dot - target).abs());
        }
    }
    worst
}

/// `core ×₁ A ×₂ B ×₃ C` as a six-deep loop.
pub fn tucker_expand(core: &FeatureTensor, factors: &[DenseMatrix; 3]) -> FeatureTensor {
    let [r1, r2, r3] = core.shape();
    let shape = [factors[0].rows(), factors[1].rows(), factors[2].rows()];
    FeatureTensor::from_fn(shape, |i, j, k| {
        let mut s = 0.0;
        for a in 0..r1 {
            for b in 0..r2 {
                for c in 0..r3 {
                    s += core.get(a, b, c)
                        * factors[0].get(i, a)
                        * factors[1].get(j, b)
                        * factors[2].get(k, c);
                }
            }
        }
        s
    })
}

pub fn relative_error(a: &FeatureTensor, b: &FeatureTensor) -> f64 {
    let num: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let den: f64 = a.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}
