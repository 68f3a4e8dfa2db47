//! Central finite-difference checks of [`forward_backward`] gradients.
//!
//! For the spherical kinds each perturbed row is renormalized before the
//! loss is evaluated, so the difference quotient measures the derivative of
//! `L(v / ‖v‖)`, which at a unit `v` equals the tangent projection of the
//! Euclidean gradient. `Softmax` rows are perturbed without renormalization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::geometry::{norm, Matrix};
use crate::loss::{forward_backward, ClassWeights, EmbeddingBatch, LossConfig, LossKind};
use crate::synthetic::{perturb_by_angle, random_unit_vector};

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOLERANCE: f64 = 1e-5;

/// Target angles of random instances are drawn from `[MIN, π − MIN]`.
pub const TARGET_ANGLE_MARGIN: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct Instance {
    pub batch: EmbeddingBatch,
    pub weights: ClassWeights,
    pub config: LossConfig,
}

/// Draws a small random problem: 1–4 samples, 2–5 classes, dimension 2–5,
/// each sample at a target angle in `[0.1, π − 0.1]` from its prototype.
pub fn random_instance<R: Rng>(kind: LossKind, rng: &mut R) -> Result<Instance> {
    let n = rng.random_range(1..=4);
    let c = rng.random_range(2..=5);
    let d = rng.random_range(2..=5);
    let s = rng.random_range(1.0..64.0);
    let config = match kind {
        LossKind::Softmax => LossConfig::softmax(),
        LossKind::NormFace => LossConfig::normface(s),
        LossKind::CosFace => LossConfig::cosface(s, rng.random_range(0.0..0.5)),
        LossKind::ArcFace => LossConfig::arcface(s, rng.random_range(0.0..0.5)),
        LossKind::X2Softmax => LossConfig::x2softmax(
            s,
            rng.random_range(-1.5..-0.5),
            rng.random_range(-0.5..0.0),
            rng.random_range(0.7..1.0),
        ),
    };

    let protos: Vec<Vec<f64>> = (0..c).map(|_| random_unit_vector(rng, d)).collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    let mut rows = Vec::with_capacity(n);
    for &y in &labels {
        let theta = rng.random_range(TARGET_ANGLE_MARGIN..std::f64::consts::PI - TARGET_ANGLE_MARGIN);
        rows.push(perturb_by_angle(rng, &protos[y], theta));
    }

    let (batch, weights) = if kind.is_spherical() {
        (
            EmbeddingBatch::new(Matrix::from_rows(&rows)?, labels)?,
            ClassWeights::new(Matrix::from_rows(&protos)?)?,
        )
    } else {
        let mut scale = |v: &mut Vec<f64>| {
            let f = rng.random_range(0.5..2.0);
            v.iter_mut().for_each(|x| *x *= f);
        };
        let mut rows = rows;
        let mut protos = protos;
        rows.iter_mut().for_each(&mut scale);
        protos.iter_mut().for_each(&mut scale);
        (
            EmbeddingBatch::raw(Matrix::from_rows(&rows)?, labels)?,
            ClassWeights::raw(Matrix::from_rows(&protos)?),
        )
    };
    Ok(Instance {
        batch,
        weights,
        config,
    })
}

/// Relative errors of the analytic gradients against finite differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradError {
    pub features: f64,
    pub weights: f64,
}

impl GradError {
    pub fn max(&self) -> f64 {
        self.features.max(self.weights)
    }
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn perturbed_loss(
    base: &Matrix,
    row: usize,
    col: usize,
    delta: f64,
    spherical: bool,
    eval: &dyn Fn(Matrix) -> Result<f64>,
) -> Result<f64> {
    let mut m = base.clone();
    m[(row, col)] += delta;
    if spherical {
        let n = norm(m.row(row));
        m.row_mut(row).iter_mut().for_each(|x| *x /= n);
    }
    eval(m)
}

fn numeric_gradient(
    base: &Matrix,
    step: f64,
    spherical: bool,
    eval: &dyn Fn(Matrix) -> Result<f64>,
) -> Result<Matrix> {
    let mut g = Matrix::zeros(base.rows(), base.cols());
    for r in 0..base.rows() {
        for c in 0..base.cols() {
            let plus = perturbed_loss(base, r, c, step, spherical, eval)?;
            let minus = perturbed_loss(base, r, c, -step, spherical, eval)?;
            g[(r, c)] = (plus - minus) / (2.0 * step);
        }
    }
    Ok(g)
}

/// Compares analytic and central-difference gradients on one instance.
pub fn check_gradients(
    batch: &EmbeddingBatch,
    weights: &ClassWeights,
    config: &LossConfig,
    step: f64,
) -> Result<GradError> {
    let spherical = config.kind.is_spherical();
    let analytic = forward_backward(batch, weights, config)?;
    let labels = batch.labels().to_vec();

    let eval_features = |m: Matrix| -> Result<f64> {
        let b = if spherical {
            EmbeddingBatch::new(m, labels.clone())?
        } else {
            EmbeddingBatch::raw(m, labels.clone())?
        };
        Ok(forward_backward(&b, weights, config)?.loss)
    };
    let eval_weights = |m: Matrix| -> Result<f64> {
        let w = if spherical {
            ClassWeights::new(m)?
        } else {
            ClassWeights::raw(m)
        };
        Ok(forward_backward(batch, &w, config)?.loss)
    };

    let num_f = numeric_gradient(batch.features(), step, spherical, &eval_features)?;
    let num_w = numeric_gradient(weights.matrix(), step, spherical, &eval_weights)?;
    Ok(GradError {
        features: relative_error(analytic.grad_features.as_slice(), num_f.as_slice()),
        weights: relative_error(analytic.grad_weights.as_slice(), num_w.as_slice()),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub kind: LossKind,
    pub trials: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub worst_trial: usize,
    pub worst_config: LossConfig,
    pub worst: GradError,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Runs `trials` random instances of `kind` from a seeded generator.
pub fn run_gradcheck(kind: LossKind, trials: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        kind,
        trials,
        seed,
        tolerance: GRAD_TOLERANCE,
        max_rel_error: 0.0,
        worst_trial: 0,
        worst_config: LossConfig::softmax(),
        worst: GradError {
            features: 0.0,
            weights: 0.0,
        },
    };
    for t in 0..trials {
        let inst = random_instance(kind, &mut rng)?;
        let err = check_gradients(&inst.batch, &inst.weights, &inst.config, FD_STEP)?;
        if t == 0 || err.max() > report.max_rel_error {
            report.max_rel_error = err.max();
            report.worst_trial = t;
            report.worst_config = inst.config;
            report.worst = err;
        }
    }
    Ok(report)
}
