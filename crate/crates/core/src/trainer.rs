//! Minimal SGD harness for comparing losses on toy data.
//!
//! The encoder is a linear map or a one-hidden-layer tanh MLP. Its output is
//! row-normalized and fed to the margin loss against unit class prototypes.
//! Parameters follow SGD with momentum and L2 weight decay,
//! `v ← μv + (g + λp)`, `p ← p − ηv`, and prototype rows are renormalized
//! after every step.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, domain_err, Error, Result};
use crate::geometry::{dot, norm, precise_angle, Matrix};
use crate::loss::{forward_backward, ClassWeights, EmbeddingBatch, LossConfig};
use crate::report::fmt_sig;
use crate::synthetic::{random_unit_vector, Dataset};

fn default_embed_dim() -> usize {
    2
}
fn default_hidden_dim() -> usize {
    64
}
fn default_epochs() -> usize {
    50
}
fn default_batch_size() -> usize {
    64
}
fn default_lr() -> f64 {
    0.02
}
fn default_momentum() -> f64 {
    0.9
}
fn default_weight_decay() -> f64 {
    5e-4
}
fn default_decay_factor() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    /// 0 selects a linear encoder.
    #[serde(default = "default_hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    /// Global step indices at which the learning rate is multiplied by
    /// `lr_decay_factor`.
    #[serde(default)]
    pub lr_decay_steps: Vec<usize>,
    #[serde(default = "default_decay_factor")]
    pub lr_decay_factor: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            embed_dim: default_embed_dim(),
            hidden_dim: default_hidden_dim(),
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            learning_rate: default_lr(),
            momentum: default_momentum(),
            weight_decay: default_weight_decay(),
            lr_decay_steps: Vec::new(),
            lr_decay_factor: default_decay_factor(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.embed_dim < 2 {
            return config_err!("embed_dim must be >= 2, got {}", self.embed_dim);
        }
        if self.batch_size == 0 {
            return config_err!("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return config_err!("learning_rate must be > 0, got {}", self.learning_rate);
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return config_err!("momentum must be in [0, 1), got {}", self.momentum);
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return config_err!("weight_decay must be >= 0, got {}", self.weight_decay);
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return config_err!("lr_decay_factor must be in (0, 1], got {}", self.lr_decay_factor);
        }
        Ok(())
    }

    /// Learning rate in effect at global step `step`.
    pub fn lr_at(&self, step: usize) -> f64 {
        let decays = self.lr_decay_steps.iter().filter(|&&s| s <= step).count();
        self.learning_rate * self.lr_decay_factor.powi(decays as i32)
    }
}

/// `y = W x + b`, `W` is `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Affine {
    fn init<R: Rng>(rng: &mut R, input: usize, output: usize) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let mut weights = Matrix::zeros(output, input);
        weights
            .as_mut_slice()
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-bound..=bound));
        let bias = (0..output).map(|_| rng.random_range(-bound..=bound)).collect();
        Self { weights, bias }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter_rows()
            .zip(&self.bias)
            .map(|(row, b)| dot(row, x) + b)
            .collect()
    }

    fn zeros_like(&self) -> Self {
        Self {
            weights: Matrix::zeros(self.weights.rows(), self.weights.cols()),
            bias: vec![0.0; self.bias.len()],
        }
    }

    fn input_dim(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub input_dim: usize,
    /// One layer (linear encoder) or two with tanh in between.
    pub layers: Vec<Affine>,
    pub tanh_hidden: bool,
    /// Unit-norm prototype rows, `num_classes × embed_dim`.
    pub class_weights: Matrix,
    pub config: TrainConfig,
    /// Full-dataset mean loss at initialization and after each epoch.
    pub epoch_losses: Vec<f64>,
    pub step_history: Vec<StepRecord>,
}

/// Gradients with the same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<Affine>,
    pub class_weights: Matrix,
}

impl ParamGrads {
    pub fn norm_sq(&self) -> f64 {
        let layers: f64 = self
            .layers
            .iter()
            .map(|l| dot(l.weights.as_slice(), l.weights.as_slice()) + dot(&l.bias, &l.bias))
            .sum();
        layers + dot(self.class_weights.as_slice(), self.class_weights.as_slice())
    }
}

/// Forward cache for one input.
struct Trace {
    hidden: Option<Vec<f64>>,
    raw: Vec<f64>,
}

impl TrainedModel {
    /// Seeded initialization: affine entries from `U(±1/√fan_in)`, prototypes
    /// uniform on the sphere.
    pub fn init(config: &TrainConfig, input_dim: usize, num_classes: usize) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 || num_classes == 0 {
            return domain_err!("input_dim and num_classes must be positive");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layers = if config.hidden_dim == 0 {
            vec![Affine::init(&mut rng, input_dim, config.embed_dim)]
        } else {
            vec![
                Affine::init(&mut rng, input_dim, config.hidden_dim),
                Affine::init(&mut rng, config.hidden_dim, config.embed_dim),
            ]
        };
        let protos: Vec<Vec<f64>> = (0..num_classes)
            .map(|_| random_unit_vector(&mut rng, config.embed_dim))
            .collect();
        Ok(Self {
            input_dim,
            layers,
            tanh_hidden: config.hidden_dim > 0,
            class_weights: Matrix::from_rows(&protos)?,
            config: config.clone(),
            epoch_losses: Vec::new(),
            step_history: Vec::new(),
        })
    }

    /// Builds a model from explicit parameters (no training history).
    pub fn from_parts(
        layers: Vec<Affine>,
        class_weights: Matrix,
        config: TrainConfig,
    ) -> Result<Self> {
        let Some(first) = layers.first() else {
            return domain_err!("model needs at least one layer");
        };
        if layers.len() > 2 {
            return domain_err!("at most one hidden layer is supported");
        }
        Ok(Self {
            input_dim: first.input_dim(),
            tanh_hidden: layers.len() == 2,
            layers,
            class_weights,
            config,
            epoch_losses: Vec::new(),
            step_history: Vec::new(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_weights.rows()
    }

    fn forward(&self, x: &[f64]) -> Trace {
        if self.tanh_hidden {
            let mut h = self.layers[0].apply(x);
            h.iter_mut().for_each(|v| *v = v.tanh());
            let raw = self.layers[1].apply(&h);
            Trace {
                hidden: Some(h),
                raw,
            }
        } else {
            Trace {
                hidden: None,
                raw: self.layers[0].apply(x),
            }
        }
    }

    fn check_inputs(&self, inputs: &Matrix) -> Result<()> {
        if inputs.cols() != self.input_dim {
            return domain_err!(
                "input dim {} does not match model input dim {}",
                inputs.cols(),
                self.input_dim
            );
        }
        Ok(())
    }

    /// Unit-norm embeddings of each input row.
    pub fn embed(&self, inputs: &Matrix) -> Result<Matrix> {
        self.check_inputs(inputs)?;
        let mut out = Matrix::zeros(inputs.rows(), self.config.embed_dim);
        if self.layers.last().map(|l| l.weights.rows()) != Some(self.config.embed_dim) {
            return domain_err!("last layer width does not match embed_dim");
        }
        for (i, x) in inputs.iter_rows().enumerate() {
            out.row_mut(i).copy_from_slice(&self.forward(x).raw);
        }
        out.normalize_rows()?;
        Ok(out)
    }

    /// Mean loss and parameter gradients on a set of inputs.
    pub fn gradients(&self, inputs: &Matrix, labels: &[usize]) -> Result<(f64, ParamGrads)> {
        self.check_inputs(inputs)?;
        let traces: Vec<Trace> = inputs.iter_rows().map(|x| self.forward(x)).collect();
        let mut emb = Matrix::zeros(traces.len(), self.config.embed_dim);
        let mut norms = Vec::with_capacity(traces.len());
        for (i, t) in traces.iter().enumerate() {
            let n = norm(&t.raw);
            if n <= 0.0 || !n.is_finite() {
                return domain_err!("embedding {i} has norm {n}");
            }
            norms.push(n);
            emb.row_mut(i)
                .iter_mut()
                .zip(&t.raw)
                .for_each(|(e, r)| *e = r / n);
        }
        let batch = EmbeddingBatch::new(emb, labels.to_vec())?;
        let weights = ClassWeights::new(self.class_weights.clone())?;
        let res = forward_backward(&batch, &weights, &self.config.loss)?;

        let mut grads = ParamGrads {
            layers: self.layers.iter().map(Affine::zeros_like).collect(),
            class_weights: res.grad_weights,
        };
        let last = self.layers.len() - 1;
        for (i, (t, x)) in traces.iter().zip(inputs.iter_rows()).enumerate() {
            // through v / ‖v‖: (I − e eᵀ) g / ‖v‖
            let e = batch.features().row(i);
            let g = res.grad_features.row(i);
            let ge = dot(g, e);
            let gz: Vec<f64> = g
                .iter()
                .zip(e)
                .map(|(gk, ek)| (gk - ge * ek) / norms[i])
                .collect();
            let layer_in = t.hidden.as_deref().unwrap_or(x);
            accumulate(&mut grads.layers[last], &gz, layer_in);
            if let Some(h) = &t.hidden {
                let w2 = &self.layers[1].weights;
                let ga: Vec<f64> = (0..h.len())
                    .map(|k| {
                        let back: f64 = (0..gz.len()).map(|o| w2[(o, k)] * gz[o]).sum();
                        back * (1.0 - h[k] * h[k])
                    })
                    .collect();
                accumulate(&mut grads.layers[0], &ga, x);
            }
        }
        Ok((res.loss, grads))
    }

    /// Mean loss over a dataset.
    pub fn loss(&self, data: &Dataset) -> Result<f64> {
        let emb = self.embed(&data.features)?;
        let batch = EmbeddingBatch::new(emb, data.labels.clone())?;
        let weights = ClassWeights::new(self.class_weights.clone())?;
        Ok(forward_backward(&batch, &weights, &self.config.loss)?.loss)
    }

    /// `epoch,loss` is kept in the model; this writes the per-step record.
    pub fn write_history_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,loss,lr")?;
        for r in &self.step_history {
            writeln!(w, "{},{},{}", r.step, fmt_sig(r.loss, 12), fmt_sig(r.lr, 12))?;
        }
        Ok(())
    }
}

fn accumulate(layer: &mut Affine, g_out: &[f64], input: &[f64]) {
    for (o, &g) in g_out.iter().enumerate() {
        layer.bias[o] += g;
        for (w, &x) in layer.weights.row_mut(o).iter_mut().zip(input) {
            *w += g * x;
        }
    }
}

fn sgd_update(param: &mut [f64], grad: &[f64], velocity: &mut [f64], lr: f64, cfg: &TrainConfig) {
    for ((p, &g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        let g = g + cfg.weight_decay * *p;
        *v = cfg.momentum * *v + g;
        *p -= lr * *v;
    }
}

fn gather(data: &Dataset, idx: &[usize]) -> (Matrix, Vec<usize>) {
    let d = data.dim();
    let mut m = Matrix::zeros(idx.len(), d);
    let mut labels = Vec::with_capacity(idx.len());
    for (r, &i) in idx.iter().enumerate() {
        m.row_mut(r).copy_from_slice(data.features.row(i));
        labels.push(data.labels[i]);
    }
    (m, labels)
}

/// Trains a freshly initialized model. Deterministic in `(data, config)`.
pub fn train(data: &Dataset, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    if data.is_empty() {
        return domain_err!("training data is empty");
    }
    let mut model = TrainedModel::init(config, data.dim(), data.num_classes())?;
    let initial = model.loss(data)?;
    if !initial.is_finite() {
        return Err(Error::Diverged {
            step: 0,
            loss: initial,
        });
    }
    model.epoch_losses.push(initial);

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let mut vel_layers: Vec<Affine> = model.layers.iter().map(Affine::zeros_like).collect();
    let mut vel_protos = Matrix::zeros(model.class_weights.rows(), model.class_weights.cols());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0;
    for _epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(config.batch_size) {
            let (inputs, labels) = gather(data, chunk);
            let (loss, grads) = match model.gradients(&inputs, &labels) {
                Ok(v) => v,
                Err(Error::Domain(msg)) => {
                    return Err(Error::Domain(format!("step {step}: {msg}")));
                }
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(Error::Diverged { step, loss });
            }
            let lr = config.lr_at(step);
            for ((layer, g), v) in model.layers.iter_mut().zip(&grads.layers).zip(&mut vel_layers) {
                sgd_update(
                    layer.weights.as_mut_slice(),
                    g.weights.as_slice(),
                    v.weights.as_mut_slice(),
                    lr,
                    config,
                );
                sgd_update(&mut layer.bias, &g.bias, &mut v.bias, lr, config);
            }
            sgd_update(
                model.class_weights.as_mut_slice(),
                grads.class_weights.as_slice(),
                vel_protos.as_mut_slice(),
                lr,
                config,
            );
            let finite = model
                .layers
                .iter()
                .all(|l| l.weights.as_slice().iter().chain(&l.bias).all(|v| v.is_finite()));
            if !finite || model.class_weights.normalize_rows().is_err() {
                return Err(Error::Diverged { step, loss });
            }
            model.step_history.push(StepRecord { step, loss, lr });
            step += 1;
        }
        let epoch_loss = model.loss(data)?;
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged {
                step,
                loss: epoch_loss,
            });
        }
        model.epoch_losses.push(epoch_loss);
    }
    Ok(model)
}

/// Per-class RMS angle between each feature and the normalized class-mean
/// direction. A symmetric pair at `±α` gives `α`; identical features give 0.
pub fn angular_spread(features: &Matrix, labels: &[usize]) -> Result<Vec<f64>> {
    if features.rows() != labels.len() {
        return domain_err!("{} features but {} labels", features.rows(), labels.len());
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let d = features.cols();
    let mut sums = vec![vec![0.0; d]; classes];
    let mut counts = vec![0usize; classes];
    for (x, &y) in features.iter_rows().zip(labels) {
        sums[y].iter_mut().zip(x).for_each(|(s, v)| *s += v);
        counts[y] += 1;
    }
    let mut means = Vec::with_capacity(classes);
    for (c, (sum, &n)) in sums.iter().zip(&counts).enumerate() {
        if n < 2 {
            return domain_err!("class {c} has {n} samples; at least 2 are needed");
        }
        let mean = crate::geometry::normalize(sum)
            .map_err(|_| Error::Domain(format!("class {c} has a zero mean feature")))?;
        means.push(mean.into_inner());
    }
    let mut sq = vec![0.0; classes];
    for (x, &y) in features.iter_rows().zip(labels) {
        let a = precise_angle(x, &means[y]);
        sq[y] += a * a;
    }
    Ok(sq
        .iter()
        .zip(&counts)
        .map(|(s, &n)| (s / n as f64).sqrt())
        .collect())
}

/// [`angular_spread`] of the model's embeddings of `data`.
pub fn intra_class_angular_std(model: &TrainedModel, data: &Dataset) -> Result<Vec<f64>> {
    angular_spread(&model.embed(&data.features)?, &data.labels)
}
