mod common;

use angular_margin::geometry::dot;
use angular_margin::gradcheck::{relative_error, run_gradcheck, GRAD_TOLERANCE};
use angular_margin::*;
use common::{max_abs_diff, naive_cross_entropy, random_problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn every_kind_passes_one_hundred_trials() {
    for kind in LossKind::ALL {
        let r = run_gradcheck(kind, 100, 7).unwrap();
        assert!(r.passed(), "{kind}: {:.3e} at trial {}", r.max_rel_error, r.worst_trial);
        assert!(r.max_rel_error < GRAD_TOLERANCE);
    }
}

#[test]
fn cross_entropy_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let c = rng.random_range(2..=12);
        let scale = [1.0, 10.0, 64.0][rng.random_range(0..3)];
        let z: Vec<f64> = (0..c).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let y = rng.random_range(0..c);
        let (loss, grad) = softmax_cross_entropy(&z, y).unwrap();
        assert!((loss - naive_cross_entropy(&z, y)).abs() <= 1e-12 * loss.abs().max(1.0));
        let h = 1e-5;
        let fd: Vec<f64> = (0..c)
            .map(|j| {
                let mut p = z.clone();
                let mut m = z.clone();
                p[j] += h;
                m[j] -= h;
                (softmax_cross_entropy(&p, y).unwrap().0 - softmax_cross_entropy(&m, y).unwrap().0)
                    / (2.0 * h)
            })
            .collect();
        let err = relative_error(&grad, &fd);
        assert!(err < 1e-6, "relative error {err:.3e} for {z:?}");
    }
}

/// Loss from the definition: one cross-entropy per sample over
/// `s·f(θ_y)` and `s·cos θ_j`.
fn reference_loss(batch: &EmbeddingBatch, weights: &ClassWeights, cfg: &LossConfig) -> f64 {
    let w = weights.matrix();
    let mut total = 0.0;
    for (x, &y) in batch.features().iter_rows().zip(batch.labels()) {
        let logits: Vec<f64> = (0..w.rows())
            .map(|j| {
                let c = dot(x, w.row(j)).clamp(-1.0 + 1e-7, 1.0 - 1e-7);
                let t = c.acos();
                let f = if j != y {
                    c
                } else {
                    match cfg.kind {
                        LossKind::CosFace => c - cfg.m,
                        LossKind::ArcFace => (t + cfg.m).min(std::f64::consts::PI).cos(),
                        LossKind::X2Softmax => cfg.a * (t - cfg.h).powi(2) + cfg.k,
                        _ => c,
                    }
                };
                cfg.s * f
            })
            .collect();
        total += naive_cross_entropy(&logits, y);
    }
    total / batch.len() as f64
}

#[test]
fn loss_values_match_the_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let configs = [
        LossConfig::normface(30.0),
        LossConfig::cosface(64.0, 0.35),
        LossConfig::arcface(64.0, 0.5),
        LossConfig::default(),
        LossConfig::x2softmax(16.0, -1.3, -0.1, 0.8),
    ];
    for _ in 0..40 {
        let (batch, weights) = random_problem(&mut rng, 6, 5, 4);
        for cfg in &configs {
            let got = forward_backward(&batch, &weights, cfg).unwrap().loss;
            let want = reference_loss(&batch, &weights, cfg);
            assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "{cfg:?}: {got} vs {want}");
        }
    }
}

#[test]
fn margin_free_kinds_reduce_to_normface() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let n = rng.random_range(1..=8);
        let c = rng.random_range(2..=6);
        let d = rng.random_range(2..=6);
        let s = rng.random_range(1.0..64.0);
        let (batch, weights) = random_problem(&mut rng, n, c, d);
        let base = forward_backward(&batch, &weights, &LossConfig::normface(s)).unwrap();
        for cfg in [LossConfig::cosface(s, 0.0), LossConfig::arcface(s, 0.0)] {
            let r = forward_backward(&batch, &weights, &cfg).unwrap();
            assert!((r.loss - base.loss).abs() < 1e-12);
            assert!(max_abs_diff(r.grad_features.as_slice(), base.grad_features.as_slice()) < 1e-12);
            assert!(max_abs_diff(r.grad_weights.as_slice(), base.grad_weights.as_slice()) < 1e-12);
        }
    }
}

#[test]
fn unit_scale_normface_is_plain_cross_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let (batch, weights) = random_problem(&mut rng, 5, 4, 3);
        let nf = forward_backward(&batch, &weights, &LossConfig::normface(1.0)).unwrap();
        let sm = forward_backward(&batch, &weights, &LossConfig::softmax()).unwrap();
        let w = weights.matrix();
        let classical: f64 = batch
            .features()
            .iter_rows()
            .zip(batch.labels())
            .map(|(x, &y)| {
                let z: Vec<f64> = w.iter_rows().map(|r| dot(x, r)).collect();
                softmax_cross_entropy(&z, y).unwrap().0
            })
            .sum::<f64>()
            / batch.len() as f64;
        assert!((nf.loss - classical).abs() < 1e-12);
        assert!((sm.loss - classical).abs() < 1e-12);
    }
}
