//! Command-line front end.
//!
//! Exit codes: 0 success, 1 check failure, 2 usage or config error, 3 I/O
//! error, 4 numeric divergence. Flags override JSON config fields, which
//! override built-in defaults.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geometry::Angle;
use crate::gradcheck::{run_gradcheck, GradCheckReport};
use crate::loss::{reference_grid, sweep_hyperparameters, ClassWeights, LossConfig, LossKind};
use crate::margin::{
    hyperparameter_effect, logit_curve, margin_at_angle, monotonicity_report, trace_margin_curve,
    write_logit_csv, Hyperparameter, MonotonicityReport, ThetaGrid,
};
use crate::report::{fmt_sig, write_atomic, RunManifest};
use crate::synthetic::{generate, Dataset, SyntheticSpec};
use crate::trainer::{intra_class_angular_std, train, TrainConfig, TrainedModel};
use crate::verification::{
    best_threshold_accuracy, build_pairs, read_pairs_csv, score_histogram, score_pairs,
    tar_at_far, TarAtFar,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "angular-margin", version, about = "Angular-margin softmax losses: margin curves, gradient checks, toy training and verification metrics")]
pub struct Cli {
    /// Seed for every seeded step of the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (curves) or directory (other commands).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON config for the command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default, Clone)]
pub struct LossArgs {
    /// softmax | normface | cosface | arcface | x2softmax
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub m: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub h: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub k: Option<f64>,
}

impl LossArgs {
    fn is_empty(&self) -> bool {
        self.kind.is_none()
            && self.s.is_none()
            && self.m.is_none()
            && self.a.is_none()
            && self.h.is_none()
            && self.k.is_none()
    }

    fn apply(&self, mut cfg: LossConfig) -> Result<LossConfig, Error> {
        if let Some(kind) = &self.kind {
            cfg.kind = kind.parse()?;
            if cfg.kind == LossKind::Softmax && self.s.is_none() {
                cfg.s = 1.0;
            }
        }
        if let Some(v) = self.s {
            cfg.s = v;
        }
        if let Some(v) = self.m {
            cfg.m = v;
        }
        if let Some(v) = self.a {
            cfg.a = v;
        }
        if let Some(v) = self.h {
            cfg.h = v;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Export the margin curve (θ, Δθ) and the logit curve of one loss.
    Curves {
        #[command(flatten)]
        loss: LossArgs,
        /// Number of θ₁ samples over [0, π/2].
        #[arg(long, default_value_t = 1024)]
        grid: usize,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        /// Loss kind; all kinds when omitted.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
    },
    /// Generate a synthetic dataset.
    GenData {
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        imbalance: Option<f64>,
    },
    /// Train the toy encoder.
    Train {
        /// Dataset CSV; a default synthetic set is generated when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        loss: LossArgs,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        hidden_dim: Option<usize>,
        #[arg(long)]
        embed_dim: Option<usize>,
    },
    /// Evaluate a trained model on pair verification.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// `i,j,same` CSV; all positive pairs plus as many random negatives
        /// when omitted.
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1e-4, 1e-5])]
        far: Vec<f64>,
        #[arg(long, default_value_t = 50)]
        bins: usize,
    },
    /// Loss over a grid of configs on a fixed synthetic batch.
    Sweep {
        #[arg(long)]
        probe: Option<f64>,
    },
    /// Monotonicity of Δθ(θ) and X2-Softmax hyperparameter effects.
    MarginReport {
        #[command(flatten)]
        loss: LossArgs,
        #[arg(long, default_value_t = 1.0)]
        probe: f64,
    },
}

#[derive(Debug)]
enum CliError {
    Check(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(Error::Io(e))
    }
}

fn exit_code(e: &CliError) -> i32 {
    match e {
        CliError::Check(_) => EXIT_CHECK_FAILED,
        CliError::Lib(Error::Domain(_) | Error::Config(_) | Error::Json(_)) => EXIT_USAGE,
        CliError::Lib(Error::Csv(c)) if !c.is_io_error() => EXIT_USAGE,
        CliError::Lib(Error::Io(_) | Error::Csv(_)) => EXIT_IO,
        CliError::Lib(Error::Diverged { .. }) => EXIT_DIVERGED,
    }
}

type CmdResult = Result<(), CliError>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            match &e {
                CliError::Check(msg) => eprintln!("check failed: {msg}"),
                CliError::Lib(err) => eprintln!("error: {err}"),
            }
            exit_code(&e)
        }
    }
}

fn dispatch(cli: &Cli) -> CmdResult {
    let started = Instant::now();
    match &cli.command {
        Command::Curves { loss, grid } => cmd_curves(cli, loss, *grid, started),
        Command::Gradcheck { kind, trials } => cmd_gradcheck(cli, kind.as_deref(), *trials, started),
        Command::GenData {
            classes,
            per_class,
            dim,
            noise,
            imbalance,
        } => cmd_gen_data(cli, *classes, *per_class, *dim, *noise, *imbalance, started),
        Command::Train {
            data,
            loss,
            epochs,
            batch_size,
            lr,
            hidden_dim,
            embed_dim,
        } => {
            let overrides = TrainOverrides {
                loss: loss.clone(),
                epochs: *epochs,
                batch_size: *batch_size,
                lr: *lr,
                hidden_dim: *hidden_dim,
                embed_dim: *embed_dim,
            };
            cmd_train(cli, data.as_deref(), &overrides, started)
        }
        Command::Eval {
            model,
            data,
            pairs,
            far,
            bins,
        } => cmd_eval(cli, model, data, pairs.as_deref(), far, *bins, started),
        Command::Sweep { probe } => cmd_sweep(cli, *probe, started),
        Command::MarginReport { loss, probe } => cmd_margin_report(cli, loss, *probe, started),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Error> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn out_dir(cli: &Cli, default: &str) -> Result<PathBuf, Error> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(default));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_text(path: &Path, text: &[u8], manifest: &mut RunManifest) -> Result<(), Error> {
    write_atomic(path, text)?;
    manifest.add_output(path)
}

fn write_json<T: Serialize>(path: &Path, value: &T, manifest: &mut RunManifest) -> Result<(), Error> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_text(path, &bytes, manifest)
}

fn finish(mut manifest: RunManifest, path: &Path, started: Instant) -> Result<(), Error> {
    manifest.duration_secs = started.elapsed().as_secs_f64();
    manifest.write(path)
}

fn cmd_curves(cli: &Cli, args: &LossArgs, samples: usize, started: Instant) -> CmdResult {
    let base = match &cli.config {
        Some(p) => read_json::<LossConfig>(p)?,
        None => LossConfig::default(),
    };
    let config = args.apply(base)?;
    let grid = ThetaGrid::with_samples(samples)?;
    let curve = trace_margin_curve(&config, &grid)?;
    let logits = logit_curve(&config, samples)?;

    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("margin_curve.csv"));
    let logit_path = out.with_extension("logit.csv");
    let mut manifest = RunManifest::new("curves", serde_json::to_value(config).map_err(Error::from)?, cli.seed);
    if let Some(p) = &cli.config {
        manifest.add_input(p);
    }
    let mut buf = Vec::new();
    curve.write_csv(&mut buf)?;
    write_text(&out, &buf, &mut manifest)?;
    let mut buf = Vec::new();
    write_logit_csv(&logits, &mut buf)?;
    write_text(&logit_path, &buf, &mut manifest)?;
    finish(manifest, &out.with_extension("manifest.json"), started)?;

    let (lo, hi) = curve.theta_range();
    println!(
        "{}: {} points, theta in [{}, {}], excluded {} (logit out of range {}, beyond pi {}, folded {})",
        config.kind,
        curve.points.len(),
        fmt_sig(lo, 6),
        fmt_sig(hi, 6),
        curve.exclusions.total(),
        curve.exclusions.logit_out_of_range,
        curve.exclusions.beyond_pi,
        curve.exclusions.folded
    );
    Ok(())
}

fn cmd_gradcheck(cli: &Cli, kind: Option<&str>, trials: u64, started: Instant) -> CmdResult {
    let kinds: Vec<LossKind> = match kind {
        Some(k) => vec![k.parse()?],
        None => LossKind::ALL.to_vec(),
    };
    let seed = cli.seed.unwrap_or(0);
    let mut reports: Vec<GradCheckReport> = Vec::new();
    for kind in kinds {
        let r = run_gradcheck(kind, trials as usize, seed)?;
        println!(
            "{:<10} trials={} max_rel_error={:.3e} worst_trial={} worst_config={} {}",
            r.kind.name(),
            r.trials,
            r.max_rel_error,
            r.worst_trial,
            serde_json::to_string(&r.worst_config).map_err(Error::from)?,
            if r.passed() { "PASS" } else { "FAIL" }
        );
        reports.push(r);
    }
    if let Some(dir) = &cli.out {
        fs::create_dir_all(dir).map_err(Error::from)?;
        let mut manifest = RunManifest::new(
            "gradcheck",
            serde_json::json!({ "kinds": reports.iter().map(|r| r.kind).collect::<Vec<_>>(), "trials": trials }),
            Some(seed),
        );
        write_json(&dir.join("gradcheck.json"), &reports, &mut manifest)?;
        finish(manifest, &dir.join("manifest.json"), started)?;
    }
    match reports.iter().find(|r| !r.passed()) {
        Some(r) => Err(CliError::Check(format!(
            "{} max relative error {:.3e} >= {:.0e}",
            r.kind, r.max_rel_error, r.tolerance
        ))),
        None => Ok(()),
    }
}

fn cmd_gen_data(
    cli: &Cli,
    classes: Option<usize>,
    per_class: Option<usize>,
    dim: Option<usize>,
    noise: Option<f64>,
    imbalance: Option<f64>,
    started: Instant,
) -> CmdResult {
    let mut spec = match &cli.config {
        Some(p) => read_json::<SyntheticSpec>(p)?,
        None => SyntheticSpec::default(),
    };
    if let Some(v) = classes {
        spec.num_classes = v;
    }
    if let Some(v) = per_class {
        spec.samples_per_class = v;
    }
    if let Some(v) = dim {
        spec.input_dim = v;
    }
    if let Some(v) = noise {
        spec.angular_noise_std = v;
    }
    if let Some(v) = imbalance {
        spec.class_imbalance_ratio = v;
    }
    if let Some(v) = cli.seed {
        spec.seed = v;
    }
    let ds = generate(&spec)?;

    let dir = out_dir(cli, "data")?;
    let mut manifest = RunManifest::new("gen-data", serde_json::to_value(spec).map_err(Error::from)?, Some(spec.seed));
    let mut buf = Vec::new();
    ds.write_csv(&mut buf)?;
    write_text(&dir.join("data.csv"), &buf, &mut manifest)?;
    if let Some(dirs) = &ds.class_directions {
        let protos = Dataset {
            features: dirs.clone(),
            labels: (0..dirs.rows()).collect(),
            class_directions: None,
        };
        let mut buf = Vec::new();
        protos.write_csv(&mut buf)?;
        write_text(&dir.join("directions.csv"), &buf, &mut manifest)?;
    }
    write_json(&dir.join("spec.json"), &spec, &mut manifest)?;
    finish(manifest, &dir.join("manifest.json"), started)?;
    println!("wrote {} samples in {} classes to {}", ds.len(), ds.num_classes(), dir.display());
    Ok(())
}

#[derive(Debug, Default)]
struct TrainOverrides {
    loss: LossArgs,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    lr: Option<f64>,
    hidden_dim: Option<usize>,
    embed_dim: Option<usize>,
}

fn cmd_train(cli: &Cli, data: Option<&Path>, o: &TrainOverrides, started: Instant) -> CmdResult {
    let mut config = match &cli.config {
        Some(p) => read_json::<TrainConfig>(p)?,
        None => TrainConfig::default(),
    };
    if !o.loss.is_empty() {
        config.loss = o.loss.apply(config.loss)?;
    }
    if let Some(v) = o.epochs {
        config.epochs = v;
    }
    if let Some(v) = o.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = o.lr {
        config.learning_rate = v;
    }
    if let Some(v) = o.hidden_dim {
        config.hidden_dim = v;
    }
    if let Some(v) = o.embed_dim {
        config.embed_dim = v;
    }
    if let Some(v) = cli.seed {
        config.seed = v;
    }
    config.validate()?;

    let dataset = match data {
        Some(p) => Dataset::load(p)?,
        None => generate(&SyntheticSpec {
            seed: config.seed,
            ..SyntheticSpec::default()
        })?,
    };
    let model = train(&dataset, &config)?;

    let dir = out_dir(cli, "run")?;
    let mut manifest = RunManifest::new("train", serde_json::to_value(&config).map_err(Error::from)?, Some(config.seed));
    if let Some(p) = data {
        manifest.add_input(p);
    }
    write_json(&dir.join("model.json"), &model, &mut manifest)?;
    let mut buf = Vec::new();
    model.write_history_csv(&mut buf)?;
    write_text(&dir.join("loss_history.csv"), &buf, &mut manifest)?;
    finish(manifest, &dir.join("manifest.json"), started)?;
    println!(
        "trained {} for {} epochs: loss {} -> {}",
        config.loss.kind,
        config.epochs,
        fmt_sig(model.epoch_losses[0], 6),
        fmt_sig(*model.epoch_losses.last().expect("initial loss"), 6)
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalMetrics {
    accuracy: f64,
    accuracy_threshold: f64,
    tar_at_far: Vec<TarAtFar>,
    overlap: f64,
    positive_pairs: usize,
    negative_pairs: usize,
    intra_class_angular_std: Vec<f64>,
    mean_intra_class_angular_std: f64,
}

fn cmd_eval(
    cli: &Cli,
    model_path: &Path,
    data_path: &Path,
    pairs_path: Option<&Path>,
    fars: &[f64],
    bins: usize,
    started: Instant,
) -> CmdResult {
    let model: TrainedModel = read_json(model_path)?;
    let data = Dataset::load(data_path)?;
    let seed = cli.seed.unwrap_or(0);
    let pairs = match pairs_path {
        Some(p) => read_pairs_csv(fs::File::open(p).map_err(Error::from)?)?,
        None => build_pairs(&data.labels, seed),
    };
    if pairs.is_empty() {
        return Err(Error::Domain("pair list is empty".into()).into());
    }
    let emb = model.embed(&data.features)?;
    let scores = score_pairs(&emb, &pairs)?;
    let acc = best_threshold_accuracy(&scores)?;
    let tars = fars
        .iter()
        .map(|&f| tar_at_far(&scores, f))
        .collect::<Result<Vec<_>, _>>()?;
    let hist = score_histogram(&scores, bins)?;
    let spread = intra_class_angular_std(&model, &data)?;
    let metrics = EvalMetrics {
        accuracy: acc.accuracy,
        accuracy_threshold: acc.threshold,
        tar_at_far: tars,
        overlap: hist.overlap,
        positive_pairs: scores.positive.len(),
        negative_pairs: scores.negative.len(),
        mean_intra_class_angular_std: spread.iter().sum::<f64>() / spread.len() as f64,
        intra_class_angular_std: spread,
    };

    let dir = out_dir(cli, "eval")?;
    let mut manifest = RunManifest::new(
        "eval",
        serde_json::json!({ "far": fars, "bins": bins, "seed": seed }),
        Some(seed),
    );
    manifest.add_input(model_path);
    manifest.add_input(data_path);
    if let Some(p) = pairs_path {
        manifest.add_input(p);
    }
    write_json(&dir.join("metrics.json"), &metrics, &mut manifest)?;
    let mut buf = Vec::new();
    hist.write_csv(&mut buf)?;
    write_text(&dir.join("histogram.csv"), &buf, &mut manifest)?;
    let mut buf = Vec::new();
    scores.write_csv(&mut buf)?;
    write_text(&dir.join("scores.csv"), &buf, &mut manifest)?;
    finish(manifest, &dir.join("manifest.json"), started)?;
    println!(
        "accuracy {} overlap {} mean angular std {}",
        fmt_sig(metrics.accuracy, 6),
        fmt_sig(metrics.overlap, 6),
        fmt_sig(metrics.mean_intra_class_angular_std, 6)
    );
    Ok(())
}

fn default_probe() -> f64 {
    1.0
}

/// Sweep input: configs to evaluate and the synthetic batch to evaluate on.
/// The batch is the generated samples; the class weights are the true class
/// directions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "reference_grid")]
    pub grid: Vec<LossConfig>,
    #[serde(default)]
    pub data: SyntheticSpec,
    /// Angle (radians) at which `Δθ` is reported.
    #[serde(default = "default_probe")]
    pub probe_theta: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            grid: reference_grid(),
            data: SyntheticSpec::default(),
            probe_theta: default_probe(),
        }
    }
}

fn cmd_sweep(cli: &Cli, probe: Option<f64>, started: Instant) -> CmdResult {
    let mut cfg = match &cli.config {
        Some(p) => read_json::<SweepConfig>(p)?,
        None => SweepConfig::default(),
    };
    if let Some(p) = probe {
        cfg.probe_theta = p;
    }
    if let Some(s) = cli.seed {
        cfg.data.seed = s;
    }
    let probe = Angle::new(cfg.probe_theta)?;
    let ds = generate(&cfg.data)?;
    let batch = ds.batch()?;
    let weights = ClassWeights::new(ds.class_directions.clone().expect("generated directions"))?;
    let rows = sweep_hyperparameters(&cfg.grid, &batch, &weights)?;

    let mut csv = String::from("a,h,k,loss,delta_theta_at_probe\n");
    for row in &rows {
        let c = row.config;
        let margin = margin_at_angle(&c, probe).unwrap_or(f64::NAN);
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_sig(c.a, 12),
            fmt_sig(c.h, 12),
            fmt_sig(c.k, 12),
            fmt_sig(row.loss, 12),
            fmt_sig(margin, 12)
        ));
    }
    let dir = out_dir(cli, "sweep")?;
    let mut manifest = RunManifest::new("sweep", serde_json::to_value(&cfg).map_err(Error::from)?, Some(cfg.data.seed));
    write_text(&dir.join("sweep.csv"), csv.as_bytes(), &mut manifest)?;
    finish(manifest, &dir.join("manifest.json"), started)?;
    println!("wrote {} sweep rows to {}", rows.len(), dir.join("sweep.csv").display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct KindReport {
    config: LossConfig,
    monotonicity: MonotonicityReport,
    margin_at_probe: Option<f64>,
}

#[derive(Debug, Serialize)]
struct EffectReport {
    parameter: Hyperparameter,
    from: f64,
    to: f64,
    margin_change: f64,
}

fn cmd_margin_report(cli: &Cli, args: &LossArgs, probe: f64, started: Instant) -> CmdResult {
    let configs = if args.is_empty() && cli.config.is_none() {
        vec![
            LossConfig::softmax(),
            LossConfig::arcface(64.0, 0.5),
            LossConfig::cosface(64.0, 0.35),
            LossConfig::default(),
        ]
    } else {
        let base = match &cli.config {
            Some(p) => read_json::<LossConfig>(p)?,
            None => LossConfig::default(),
        };
        vec![args.apply(base)?]
    };
    let probe_angle = Angle::new(probe)?;
    let mut kinds = Vec::new();
    let mut effects = Vec::new();
    for cfg in configs {
        let monotonicity = monotonicity_report(&cfg)?;
        let margin_at_probe = margin_at_angle(&cfg, probe_angle).ok();
        println!(
            "{:<10} {:?} over theta in [{}, {}] ({} samples)",
            cfg.kind.name(),
            monotonicity.class,
            fmt_sig(monotonicity.theta_range.0, 6),
            fmt_sig(monotonicity.theta_range.1, 6),
            monotonicity.samples
        );
        if cfg.kind == LossKind::X2Softmax {
            for (which, to) in [
                (Hyperparameter::A, cfg.a * 1.3),
                (Hyperparameter::H, cfg.h - 0.2),
                (Hyperparameter::K, cfg.k - 0.3),
            ] {
                let from = match which {
                    Hyperparameter::A => cfg.a,
                    Hyperparameter::H => cfg.h,
                    Hyperparameter::K => cfg.k,
                };
                if let Ok(change) = hyperparameter_effect(&cfg, which, to - from, probe_angle) {
                    println!("  {which:?}: {} -> {}: margin change {:+.6}", fmt_sig(from, 6), fmt_sig(to, 6), change);
                    effects.push(EffectReport {
                        parameter: which,
                        from,
                        to,
                        margin_change: change,
                    });
                }
            }
        }
        kinds.push(KindReport {
            config: cfg,
            monotonicity,
            margin_at_probe,
        });
    }
    if let Some(dir) = &cli.out {
        fs::create_dir_all(dir).map_err(Error::from)?;
        let mut manifest = RunManifest::new("margin-report", serde_json::json!({ "probe": probe }), cli.seed);
        write_json(
            &dir.join("margin_report.json"),
            &serde_json::json!({ "probe_theta": probe, "losses": kinds, "hyperparameter_effects": effects }),
            &mut manifest,
        )?;
        finish(manifest, &dir.join("manifest.json"), started)?;
    }
    debug_assert!(probe <= PI || margin_at_angle(&LossConfig::default(), probe_angle).is_err());
    Ok(())
}
