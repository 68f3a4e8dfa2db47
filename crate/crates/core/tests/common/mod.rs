#![allow(dead_code)]

use angular_margin::synthetic::random_unit_vector;
use angular_margin::{ClassWeights, EmbeddingBatch, Matrix};
use rand::Rng;

/// Random unit-norm batch and prototypes.
pub fn random_problem<R: Rng>(rng: &mut R, n: usize, c: usize, d: usize) -> (EmbeddingBatch, ClassWeights) {
    let x: Vec<Vec<f64>> = (0..n).map(|_| random_unit_vector(rng, d)).collect();
    let w: Vec<Vec<f64>> = (0..c).map(|_| random_unit_vector(rng, d)).collect();
    let labels = (0..n).map(|_| rng.random_range(0..c)).collect();
    (
        EmbeddingBatch::new(Matrix::from_rows(&x).unwrap(), labels).unwrap(),
        ClassWeights::new(Matrix::from_rows(&w).unwrap()).unwrap(),
    )
}

/// Cross-entropy written out directly from its definition, `log Σ e^z − z_y`,
/// with the maximum subtracted for range.
pub fn naive_cross_entropy(z: &[f64], y: usize) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = z.iter().map(|v| (v - m).exp()).sum();
    m + s.ln() - z[y]
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
