//! The margin-softmax loss family.
//!
//! Every loss here shares one formula. For a sample `x_i` with label `y_i`
//! and unit class prototypes `W_j`:
//!
//! ```text
//! L = -(1/N) Σ_i log( e^{s·f(θ_{y_i})} / (e^{s·f(θ_{y_i})} + Σ_{j≠y_i} e^{s·cos θ_j}) )
//! ```
//!
//! and the kinds differ only in the target logit `f`:
//!
//! | kind        | f(θ)                    |
//! |-------------|-------------------------|
//! | `NormFace`  | `cos θ`                 |
//! | `CosFace`   | `cos θ − m`             |
//! | `ArcFace`   | `cos(θ + m)`            |
//! | `X2Softmax` | `a(θ − h)² + k`         |
//! | `Softmax`   | raw dot product, `s = 1` |
//!
//! The quadratic logit of X2-Softmax keeps the constant and quadratic terms
//! of the Taylor series of `cos`, with a shifted vertex `(h, k)` and a free
//! curvature `a`.
//!
//! Only the target class goes through `f`; non-target classes always use
//! `cos θ_j`. ArcFace's `θ + m` is clamped to `π` inside both `f` and `f'`
//! so the two stay consistent; there is no "easy margin" fallback.
//!
//! Gradients are analytic. For the spherical kinds they are projected onto
//! the tangent space of the unit sphere at each feature / prototype
//! (`g ← g − (g·v)v`); `Softmax` returns plain Euclidean gradients.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, domain_err, Result};
use crate::geometry::{clamp_cos, dot, Angle, Matrix, COS_CLAMP_EPS};

/// Which target logit to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Softmax,
    NormFace,
    CosFace,
    ArcFace,
    X2Softmax,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::Softmax,
        LossKind::NormFace,
        LossKind::CosFace,
        LossKind::ArcFace,
        LossKind::X2Softmax,
    ];

    /// True for every kind that works on unit-normalized vectors.
    pub fn is_spherical(self) -> bool {
        self != LossKind::Softmax
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Softmax => "softmax",
            LossKind::NormFace => "normface",
            LossKind::CosFace => "cosface",
            LossKind::ArcFace => "arcface",
            LossKind::X2Softmax => "x2softmax",
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LossKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .map_or_else(|| config_err!("unknown loss kind '{s}'"), Ok)
    }
}

pub const DEFAULT_SCALE: f64 = 64.0;
pub const DEFAULT_MARGIN: f64 = 0.5;
pub const DEFAULT_A: f64 = -1.0;
pub const DEFAULT_H: f64 = -0.3;
pub const DEFAULT_K: f64 = 1.0;

fn default_s() -> f64 {
    DEFAULT_SCALE
}
fn default_m() -> f64 {
    DEFAULT_MARGIN
}
fn default_a() -> f64 {
    DEFAULT_A
}
fn default_h() -> f64 {
    DEFAULT_H
}
fn default_k() -> f64 {
    DEFAULT_K
}

/// Loss kind plus hyperparameters. Fields irrelevant to `kind` are carried
/// but ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub kind: LossKind,
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default = "default_m")]
    pub m: f64,
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_k")]
    pub k: f64,
}

impl Default for LossConfig {
    /// X2-Softmax with `s = 64, a = −1, h = −0.3, k = 1`.
    fn default() -> Self {
        Self::x2softmax(DEFAULT_SCALE, DEFAULT_A, DEFAULT_H, DEFAULT_K)
    }
}

impl LossConfig {
    fn with_kind(kind: LossKind) -> Self {
        Self {
            kind,
            s: DEFAULT_SCALE,
            m: DEFAULT_MARGIN,
            a: DEFAULT_A,
            h: DEFAULT_H,
            k: DEFAULT_K,
        }
    }

    pub fn softmax() -> Self {
        Self {
            s: 1.0,
            ..Self::with_kind(LossKind::Softmax)
        }
    }

    pub fn normface(s: f64) -> Self {
        Self {
            s,
            ..Self::with_kind(LossKind::NormFace)
        }
    }

    pub fn cosface(s: f64, m: f64) -> Self {
        Self {
            s,
            m,
            ..Self::with_kind(LossKind::CosFace)
        }
    }

    pub fn arcface(s: f64, m: f64) -> Self {
        Self {
            s,
            m,
            ..Self::with_kind(LossKind::ArcFace)
        }
    }

    pub fn x2softmax(s: f64, a: f64, h: f64, k: f64) -> Self {
        Self {
            s,
            a,
            h,
            k,
            ..Self::with_kind(LossKind::X2Softmax)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.s, self.m, self.a, self.h, self.k]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return config_err!("non-finite hyperparameter in {self:?}");
        }
        if self.s <= 0.0 {
            return config_err!("scale s must be > 0, got {}", self.s);
        }
        match self.kind {
            LossKind::CosFace | LossKind::ArcFace if self.m < 0.0 => {
                config_err!("margin m must be >= 0, got {}", self.m)
            }
            LossKind::X2Softmax if self.a >= 0.0 => {
                config_err!("x2softmax requires a < 0, got {}", self.a)
            }
            LossKind::X2Softmax if self.k > 1.0 => {
                config_err!("x2softmax requires k <= 1, got {}", self.k)
            }
            _ => Ok(()),
        }
    }

    /// Scale actually applied to the logits (`Softmax` always uses 1).
    pub fn effective_scale(&self) -> f64 {
        match self.kind {
            LossKind::Softmax => 1.0,
            _ => self.s,
        }
    }

    /// Target logit `f(θ)`.
    pub fn logit(&self, theta: Angle) -> f64 {
        self.logit_at(theta.radians())
    }

    /// `df/dθ`.
    pub fn logit_derivative(&self, theta: Angle) -> f64 {
        self.logit_derivative_at(theta.radians())
    }

    /// [`LossConfig::logit`] on a bare radian value in `[0, π]`.
    pub(crate) fn logit_at(&self, theta: f64) -> f64 {
        match self.kind {
            LossKind::Softmax | LossKind::NormFace => theta.cos(),
            LossKind::CosFace => theta.cos() - self.m,
            LossKind::ArcFace => (theta + self.m).min(PI).cos(),
            LossKind::X2Softmax => self.a * (theta - self.h).powi(2) + self.k,
        }
    }

    pub(crate) fn logit_derivative_at(&self, theta: f64) -> f64 {
        match self.kind {
            LossKind::Softmax | LossKind::NormFace | LossKind::CosFace => -theta.sin(),
            LossKind::ArcFace => -(theta + self.m).min(PI).sin(),
            LossKind::X2Softmax => 2.0 * self.a * (theta - self.h),
        }
    }

    /// Target logit as a function of the (already clamped) cosine, with
    /// `df/dcos θ`.
    fn target_logit_from_cos(&self, c: f64) -> (f64, f64) {
        match self.kind {
            LossKind::Softmax | LossKind::NormFace => (c, 1.0),
            LossKind::CosFace => (c - self.m, 1.0),
            LossKind::ArcFace | LossKind::X2Softmax => {
                let theta = c.acos();
                // dθ/dc = -1/sin θ; c is clamped so sin θ >= ~4.5e-4
                let sin_theta = (1.0 - c * c).sqrt();
                (
                    self.logit_at(theta),
                    -self.logit_derivative_at(theta) / sin_theta,
                )
            }
        }
    }
}

/// Features with labels. Spherical losses require unit-norm rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    features: Matrix,
    labels: Vec<usize>,
    unit: bool,
}

impl EmbeddingBatch {
    /// Rows must have unit norm within `1e-9`.
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        features.check_unit_rows("feature")?;
        Self::build(features, labels, true)
    }

    /// Skips the unit-norm check. Only usable with [`LossKind::Softmax`].
    pub fn raw(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        let unit = features.check_unit_rows("feature").is_ok();
        Self::build(features, labels, unit)
    }

    fn build(features: Matrix, labels: Vec<usize>, unit: bool) -> Result<Self> {
        if features.rows() != labels.len() {
            return domain_err!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            );
        }
        Ok(Self {
            features,
            labels,
            unit,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn into_parts(self) -> (Matrix, Vec<usize>) {
        (self.features, self.labels)
    }
}

/// One prototype row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    weights: Matrix,
    unit: bool,
}

impl ClassWeights {
    pub fn new(weights: Matrix) -> Result<Self> {
        weights.check_unit_rows("class weight")?;
        Ok(Self {
            weights,
            unit: true,
        })
    }

    /// Skips the unit-norm check. Only usable with [`LossKind::Softmax`].
    pub fn raw(weights: Matrix) -> Self {
        let unit = weights.check_unit_rows("class weight").is_ok();
        Self { weights, unit }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.weights
    }

    pub fn num_classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn into_matrix(self) -> Matrix {
        self.weights
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    /// Batch mean.
    pub loss: f64,
    pub grad_features: Matrix,
    pub grad_weights: Matrix,
    /// Clamped angle between each sample and its own class prototype.
    pub target_angles: Vec<Angle>,
}

/// Loss and analytic gradients for a batch.
pub fn forward_backward(
    batch: &EmbeddingBatch,
    weights: &ClassWeights,
    config: &LossConfig,
) -> Result<LossResult> {
    config.validate()?;
    let n = batch.len();
    let c = weights.num_classes();
    let d = batch.dim();
    if weights.dim() != d {
        return domain_err!("feature dim {d} does not match weight dim {}", weights.dim());
    }
    if let Some((i, &y)) = batch.labels().iter().enumerate().find(|(_, &y)| y >= c) {
        return domain_err!("label {y} of sample {i} out of range for {c} classes");
    }
    let spherical = config.kind.is_spherical();
    if spherical && !(batch.unit && weights.unit) {
        return domain_err!("{} requires unit-norm features and class weights", config.kind);
    }

    let s = config.effective_scale();
    let w = weights.matrix();
    let mut grad_features = Matrix::zeros(n, d);
    let mut grad_weights = Matrix::zeros(c, d);
    let mut target_angles = Vec::with_capacity(n);
    let mut total = 0.0;
    let inv_n = if n > 0 { 1.0 / n as f64 } else { 0.0 };

    let mut logits = vec![0.0; c];
    // d logit_j / d (x · w_j)
    let mut dlogit = vec![0.0; c];
    for (i, (x, &y)) in batch.features().iter_rows().zip(batch.labels()).enumerate() {
        for j in 0..c {
            let raw = dot(x, w.row(j));
            let (cos, inside) = if spherical {
                let cl = clamp_cos(raw);
                (cl, cl == raw)
            } else {
                (raw, true)
            };
            let (z, dz) = if j == y {
                config.target_logit_from_cos(cos)
            } else {
                (cos, 1.0)
            };
            logits[j] = s * z;
            dlogit[j] = if inside { s * dz } else { 0.0 };
            if j == y {
                let cos_angle = if spherical {
                    cos
                } else {
                    let denom = (dot(x, x) * dot(w.row(j), w.row(j))).sqrt();
                    clamp_cos(raw / denom)
                };
                target_angles.push(Angle::new(cos_angle.acos())?);
            }
        }

        let (loss, g) = crate::geometry::softmax_cross_entropy(&logits, y)?;
        total += loss;

        let gx = grad_features.row_mut(i);
        for j in 0..c {
            let coef = g[j] * dlogit[j] * inv_n;
            if coef == 0.0 {
                continue;
            }
            for (gk, wk) in gx.iter_mut().zip(w.row(j)) {
                *gk += coef * wk;
            }
            for (gk, xk) in grad_weights.row_mut(j).iter_mut().zip(x) {
                *gk += coef * xk;
            }
        }
        if spherical {
            project_tangent(gx, x);
        }
    }
    if spherical {
        for j in 0..c {
            project_tangent(grad_weights.row_mut(j), w.row(j));
        }
    }

    Ok(LossResult {
        loss: total * inv_n,
        grad_features,
        grad_weights,
        target_angles,
    })
}

/// `g ← g − (g·v)v` for unit `v`.
pub fn project_tangent(g: &mut [f64], v: &[f64]) {
    let gv = dot(g, v);
    for (gk, vk) in g.iter_mut().zip(v) {
        *gk -= gv * vk;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub config: LossConfig,
    pub loss: f64,
}

/// Evaluates the loss for every config on a fixed batch, in input order.
pub fn sweep_hyperparameters(
    grid: &[LossConfig],
    batch: &EmbeddingBatch,
    weights: &ClassWeights,
) -> Result<Vec<SweepRow>> {
    grid.iter()
        .map(|config| {
            forward_backward(batch, weights, config).map(|r| SweepRow {
                config: *config,
                loss: r.loss,
            })
        })
        .collect()
}

/// The 13 reference `(a, h, k)` settings used by `sweep`, at
/// `s = 64`: five values of `a`, five of `h`, three of `k`, each varied
/// around `a = −1, h = −0.3, k = 1`.
pub fn reference_grid() -> Vec<LossConfig> {
    const ROWS: [(f64, f64, f64); 13] = [
        (-0.7, -0.3, 1.0),
        (-0.9, -0.3, 1.0),
        (-1.0, -0.3, 1.0),
        (-1.1, -0.3, 1.0),
        (-1.3, -0.3, 1.0),
        (-1.0, -0.5, 1.0),
        (-1.0, -0.4, 1.0),
        (-1.0, -0.2, 1.0),
        (-1.0, -0.1, 1.0),
        (-1.0, 0.0, 1.0),
        (-1.0, -0.3, 0.9),
        (-1.0, -0.3, 0.8),
        (-1.0, -0.3, 0.7),
    ];
    ROWS.iter()
        .map(|&(a, h, k)| LossConfig::x2softmax(DEFAULT_SCALE, a, h, k))
        .collect()
}

/// Smallest angle reachable through the clamped `acos`.
pub fn min_clamped_angle() -> f64 {
    (1.0 - COS_CLAMP_EPS).acos()
}
