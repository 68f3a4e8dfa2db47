//! One test per acceptance criterion. Each prints a single PASS/FAIL line
//! with the measured numbers; run with `--nocapture` to see them.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use angular_margin::gradcheck::run_gradcheck;
use angular_margin::margin::Hyperparameter;
use angular_margin::synthetic::{generate, SyntheticSpec};
use angular_margin::trainer::{intra_class_angular_std, train, TrainConfig};
use angular_margin::verification::*;
use angular_margin::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, pass: bool, detail: String) {
    println!("criterion {id:>2} [{name}]: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} failed: {detail}");
}

#[test]
fn c01_arcface_margin_is_constant() {
    let t = Instant::now();
    let curve = trace_margin_curve(&LossConfig::arcface(64.0, 0.5), &ThetaGrid::default()).unwrap();
    let worst = curve.points.iter().map(|p| (p.delta_theta - 0.5).abs()).fold(0.0, f64::max);
    let el = t.elapsed();
    report(
        1,
        "arcface constancy",
        !curve.points.is_empty() && worst < 1e-12 && el < Duration::from_secs(1),
        format!("{} points, max |Δθ - m| = {worst:.2e}, {el:?}", curve.points.len()),
    );
}

#[test]
fn c02_monotonicity_triple() {
    let t = Instant::now();
    let cases = [
        ("arcface", LossConfig::arcface(64.0, 0.5), Monotonicity::Constant),
        ("cosface", LossConfig::cosface(64.0, 0.35), Monotonicity::Decreasing),
        ("x2softmax", LossConfig::x2softmax(64.0, -1.0, -0.3, 1.0), Monotonicity::Increasing),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, cfg, want) in cases {
        let r = monotonicity_report(&cfg).unwrap();
        ok &= r.class == want && r.samples >= 512;
        detail.push(format!("{name}={:?}/{}", r.class, r.samples));
    }
    let el = t.elapsed();
    report(2, "monotonicity triple", ok && el < Duration::from_secs(1), format!("{} {el:?}", detail.join(" ")));
}

#[test]
fn c03_x2softmax_round_trip() {
    let t = Instant::now();
    let cfg = LossConfig::default();
    let f = |x: f64| -(x + 0.3).powi(2) + 1.0;
    let (mut eq, mut inv, mut count) = (0.0f64, 0.0f64, 0);
    // the second grid does not share points with the default one
    for grid in [ThetaGrid::default(), ThetaGrid::with_samples(1000).unwrap()] {
        let curve = trace_margin_curve(&cfg, &grid).unwrap();
        count += curve.points.len();
        for p in &curve.points {
            let t1 = p.theta1.radians();
            eq = eq.max((p.theta.radians() - (t1 + f(t1).acos())).abs());
            eq = eq.max((p.delta_theta - (f(t1).acos() - t1)).abs());
            inv = inv.max((margin_at_angle(&cfg, p.theta).unwrap() - p.delta_theta).abs());
        }
    }
    let el = t.elapsed();
    report(
        3,
        "x2softmax round trip",
        count > 0 && eq < 1e-9 && inv < 1e-8 && el < Duration::from_secs(1),
        format!("{count} points, equation error {eq:.2e}, inversion error {inv:.2e}, {el:?}"),
    );
}

#[test]
fn c04_gradient_suite() {
    let t = Instant::now();
    let mut ok = true;
    let mut detail = Vec::new();
    for kind in LossKind::ALL {
        let r = run_gradcheck(kind, 100, 2024).unwrap();
        ok &= r.max_rel_error < 1e-5;
        detail.push(format!("{kind}={:.1e}", r.max_rel_error));
    }
    let el = t.elapsed();
    report(4, "gradient suite", ok && el < Duration::from_secs(10), format!("{} {el:?}", detail.join(" ")));
}

#[test]
fn c05_reduction_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst = 0.0f64;
    let diff = |a: &LossResult, b: &LossResult| {
        let g = |x: &Matrix, y: &Matrix| {
            x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
        };
        (a.loss - b.loss)
            .abs()
            .max(g(&a.grad_features, &b.grad_features))
            .max(g(&a.grad_weights, &b.grad_weights))
    };
    for _ in 0..50 {
        let n = rng.random_range(1..=10);
        let c = rng.random_range(2..=8);
        let d = rng.random_range(2..=8);
        let x: Vec<Vec<f64>> = (0..n).map(|_| angular_margin::synthetic::random_unit_vector(&mut rng, d)).collect();
        let w: Vec<Vec<f64>> = (0..c).map(|_| angular_margin::synthetic::random_unit_vector(&mut rng, d)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let batch = EmbeddingBatch::new(Matrix::from_rows(&x).unwrap(), labels.clone()).unwrap();
        let weights = ClassWeights::new(Matrix::from_rows(&w).unwrap()).unwrap();
        let s = rng.random_range(1.0..64.0);
        let nf = forward_backward(&batch, &weights, &LossConfig::normface(s)).unwrap();
        for cfg in [LossConfig::cosface(s, 0.0), LossConfig::arcface(s, 0.0)] {
            worst = worst.max(diff(&forward_backward(&batch, &weights, &cfg).unwrap(), &nf));
        }
        let unit = forward_backward(&batch, &weights, &LossConfig::normface(1.0)).unwrap();
        let classical: f64 = x
            .iter()
            .zip(&labels)
            .map(|(xi, &y)| {
                let z: Vec<f64> = w.iter().map(|wj| xi.iter().zip(wj).map(|(a, b)| a * b).sum()).collect();
                let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln() - z[y]
            })
            .sum::<f64>()
            / n as f64;
        worst = worst.max((unit.loss - classical).abs());
    }
    report(5, "reduction identities", worst < 1e-12, format!("max deviation {worst:.2e} over 50 batches"));
}

#[test]
fn c06_hyperparameter_directions() {
    let t = Instant::now();
    let probe = Angle::new(1.0).unwrap();
    let best = LossConfig::default();
    let a = hyperparameter_effect(&best, Hyperparameter::A, -0.3, probe).unwrap();
    let h = hyperparameter_effect(&LossConfig { h: -0.1, ..best }, Hyperparameter::H, -0.4, probe).unwrap();
    let k = hyperparameter_effect(&best, Hyperparameter::K, -0.3, probe).unwrap();
    let el = t.elapsed();
    report(
        6,
        "hyperparameter directions",
        a > 0.0 && h > 0.0 && k > 0.0 && el < Duration::from_secs(1),
        format!("Δmargin a:-1→-1.3 {a:+.4}, h:-0.1→-0.5 {h:+.4}, k:1→0.7 {k:+.4}, {el:?}"),
    );
}

struct ToyRun {
    mean_std: f64,
    overlap: f64,
    elapsed: Duration,
}

fn toy_run(seed: u64, loss: LossConfig) -> ToyRun {
    let t = Instant::now();
    let data = generate(&SyntheticSpec { seed, ..Default::default() }).unwrap();
    let model = train(&data, &TrainConfig { loss, seed, ..Default::default() }).unwrap();
    let std = intra_class_angular_std(&model, &data).unwrap();
    let emb = model.embed(&data.features).unwrap();
    let scores = score_pairs(&emb, &build_pairs(&data.labels, seed)).unwrap();
    let overlap = score_histogram(&scores, 50).unwrap().overlap;
    ToyRun {
        mean_std: std.iter().sum::<f64>() / std.len() as f64,
        overlap,
        elapsed: t.elapsed(),
    }
}

fn paired_toy_runs() -> Vec<(ToyRun, ToyRun)> {
    (0..5u64)
        .map(|seed| (toy_run(seed, LossConfig::normface(64.0)), toy_run(seed, LossConfig::default())))
        .collect()
}

#[test]
fn c07_toy_compactness() {
    let runs = paired_toy_runs();
    let wins = runs.iter().filter(|(nf, x2)| x2.mean_std < nf.mean_std).count();
    let slowest = runs.iter().flat_map(|(a, b)| [a.elapsed, b.elapsed]).max().unwrap();
    let detail: Vec<String> = runs
        .iter()
        .map(|(nf, x2)| format!("{:.4}/{:.4}", x2.mean_std, nf.mean_std))
        .collect();
    report(
        7,
        "toy compactness",
        wins >= 4 && slowest < Duration::from_secs(30),
        format!("x2/normface std per seed [{}], wins {wins}/5, slowest run {slowest:?}", detail.join(" ")),
    );
}

#[test]
fn c08_metric_oracles() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut mismatches = 0;
    for _ in 0..200 {
        let total = rng.random_range(2..=50);
        let p = rng.random_range(1..total);
        let coarse = rng.random_bool(0.5);
        let mut draw = || {
            let x: f64 = rng.random_range(-1.0..=1.0);
            if coarse { (x * 8.0).round() / 8.0 } else { x }
        };
        let pos: Vec<f64> = (0..p).map(|_| draw()).collect();
        let neg: Vec<f64> = (0..total - p).map(|_| draw()).collect();
        let s = PairScoreSet::new(pos.clone(), neg.clone()).unwrap();

        let mut thresholds: Vec<f64> = pos.iter().chain(&neg).copied().collect();
        thresholds.push(f64::INFINITY);
        let acc = |t: f64| {
            (pos.iter().filter(|&&x| x >= t).count() + neg.iter().filter(|&&x| x < t).count()) as f64
                / total as f64
        };
        let best = thresholds.iter().map(|&t| acc(t)).fold(0.0, f64::max);
        if best_threshold_accuracy(&s).unwrap().accuracy != best {
            mismatches += 1;
        }

        let far = [1e-4, 0.05, 0.1, 0.25, 0.5, 1.0][rng.random_range(0..6)];
        let mut cands = vec![-1.0];
        for &x in pos.iter().chain(&neg) {
            cands.push(x);
            cands.push(x.next_up());
        }
        cands.sort_by(f64::total_cmp);
        let n = neg.len() as f64;
        let t = *cands
            .iter()
            .find(|&&t| neg.iter().filter(|&&x| x >= t).count() as f64 / n <= far)
            .unwrap();
        let tar = pos.iter().filter(|&&x| x >= t).count() as f64 / p as f64;
        if tar_at_far(&s, far).unwrap().tar != tar {
            mismatches += 1;
        }
    }
    let el = t.elapsed();
    report(
        8,
        "metric oracles",
        mismatches == 0 && el < Duration::from_secs(5),
        format!("{mismatches} mismatches over 200 sets, {el:?}"),
    );
}

fn checksums(dir: &Path) -> serde_json::Value {
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    m["checksums"].clone()
}

#[test]
fn c09_pipeline_determinism() {
    let bin = env!("CARGO_BIN_EXE_angular-margin");
    let roots = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut sums = Vec::new();
    for root in &roots {
        let r = root.path();
        let s = |p: &str| r.join(p).to_str().unwrap().to_string();
        let steps: [Vec<String>; 3] = [
            vec!["gen-data".into(), "--seed".into(), "6".into(), "--out".into(), s("data")],
            vec!["train".into(), "--data".into(), s("data/data.csv"), "--seed".into(), "6".into(), "--out".into(), s("run")],
            vec![
                "eval".into(),
                "--model".into(),
                s("run/model.json"),
                "--data".into(),
                s("data/data.csv"),
                "--seed".into(),
                "6".into(),
                "--out".into(),
                s("eval"),
            ],
        ];
        for args in &steps {
            let st = Command::new(bin).args(args).status().unwrap();
            assert!(st.success(), "{args:?}");
        }
        sums.push([checksums(&r.join("data")), checksums(&r.join("run")), checksums(&r.join("eval"))]);
    }
    let same = sums[0] == sums[1];
    let files = sums[0].iter().map(|c| c.as_object().map_or(0, |o| o.len())).sum::<usize>();
    report(9, "determinism", same && files >= 7, format!("{files} checksummed outputs, identical = {same}"));
}

#[test]
fn c10_confusion_region() {
    let runs = paired_toy_runs();
    let wins = runs.iter().filter(|(nf, x2)| x2.overlap < nf.overlap).count();
    let detail: Vec<String> = runs
        .iter()
        .map(|(nf, x2)| format!("{:.4}/{:.4}", x2.overlap, nf.overlap))
        .collect();
    report(
        10,
        "confusion region",
        wins >= 4,
        format!("x2/normface overlap per seed [{}], wins {wins}/5", detail.join(" ")),
    );
}
