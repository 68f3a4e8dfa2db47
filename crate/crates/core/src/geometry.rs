//! Spherical primitives: unit vectors, clamped angles, a small row-major
//! matrix, and the numerically stable softmax cross-entropy kernel.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain_err, Result};

/// Dot products are clamped to `[-1 + ε, 1 - ε]` before `acos`.
///
/// `d acos(c) / dc = -1 / sqrt(1 - c²)` is singular at `c = ±1`; with this
/// clamp its magnitude stays below ~2236.
pub const COS_CLAMP_EPS: f64 = 1e-7;

/// Tolerance used when checking that a vector has unit norm.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major data.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return domain_err!(
                "matrix data has {} elements, expected {rows}x{cols}",
                data.len()
            );
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a list of equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return domain_err!("row {i} has length {}, expected {cols}", r.len());
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, so route empty-column matrices through an empty range
        let cols = self.cols.max(1);
        self.data
            .chunks_exact(cols)
            .take(if self.cols == 0 { 0 } else { self.rows })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Normalizes every row to unit length.
    pub fn normalize_rows(&mut self) -> Result<()> {
        for i in 0..self.rows {
            let n = norm(self.row(i));
            if n <= 0.0 || !n.is_finite() {
                return domain_err!("row {i} has norm {n} and cannot be normalized");
            }
            self.row_mut(i).iter_mut().for_each(|x| *x /= n);
        }
        Ok(())
    }

    /// Checks that every row has unit norm within [`UNIT_NORM_TOL`].
    pub fn check_unit_rows(&self, what: &str) -> Result<()> {
        for (i, r) in self.iter_rows().enumerate() {
            let n = norm(r);
            if (n - 1.0).abs() > UNIT_NORM_TOL {
                return domain_err!("{what} row {i} has norm {n}, expected unit norm");
            }
        }
        Ok(())
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// A vector of Euclidean norm one (dimension ≥ 1).
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for UnitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// An angle in `[0, π]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Angle(f64);

impl Angle {
    /// Fails unless `0 <= radians <= π`.
    pub fn new(radians: f64) -> Result<Self> {
        if (0.0..=PI).contains(&radians) {
            Ok(Self(radians))
        } else {
            domain_err!("angle {radians} outside [0, π]")
        }
    }

    #[inline]
    pub fn radians(self) -> f64 {
        self.0
    }
}

/// Returns `v / ‖v‖`.
pub fn normalize(v: &[f64]) -> Result<UnitVector> {
    let n = norm(v);
    if n <= 0.0 || !n.is_finite() {
        return domain_err!("cannot normalize vector with norm {n}");
    }
    Ok(UnitVector(v.iter().map(|x| x / n).collect()))
}

/// Clamps a cosine into `[-1 + ε, 1 - ε]`.
#[inline]
pub fn clamp_cos(c: f64) -> f64 {
    c.clamp(-1.0 + COS_CLAMP_EPS, 1.0 - COS_CLAMP_EPS)
}

/// `acos` of the clamped dot product. Never NaN for finite inputs.
pub fn angle_between(u: &UnitVector, v: &UnitVector) -> Result<Angle> {
    if u.dim() != v.dim() {
        return domain_err!("dimension mismatch: {} vs {}", u.dim(), v.dim());
    }
    Ok(Angle(clamp_cos(dot(&u.0, &v.0)).acos()))
}

/// Unclamped angle between two unit-norm slices, accurate near 0 and π.
///
/// Uses `2·atan2(‖u − v‖, ‖u + v‖)`, so identical inputs give exactly 0.
/// This is for measurement only; gradient paths go through
/// [`angle_between`].
pub fn precise_angle(u: &[f64], v: &[f64]) -> f64 {
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        diff += (a - b) * (a - b);
        sum += (a + b) * (a + b);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

/// Numerically stable `−log softmax(z)[target]` and its gradient
/// `softmax(z) − onehot(target)`.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if target >= logits.len() {
        return domain_err!("target {target} out of range for {} logits", logits.len());
    }
    if let Some(bad) = logits.iter().find(|z| !z.is_finite()) {
        return domain_err!("non-finite logit {bad}");
    }
    // first index of the maximum
    let (arg, max) = logits
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, z)| if z > acc.1 { (i, z) } else { acc });
    let mut grad: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    // sum = 1 + rest; keeping `rest` separate preserves precision when the
    // leading class dominates
    let rest: f64 = grad
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != arg)
        .map(|(_, g)| g)
        .sum();
    let sum = 1.0 + rest;
    let loss = rest.ln_1p() + (max - logits[target]);
    grad.iter_mut().for_each(|g| *g /= sum);
    grad[target] = if target == arg {
        -rest / sum
    } else {
        grad[target] - 1.0
    };
    Ok((loss.max(0.0), grad))
}
