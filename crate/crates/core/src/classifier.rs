//! Linear softmax classifier over fixed feature vectors, trained by
//! minibatch gradient descent.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::calibration::{smooth_target, softmax};
use crate::error::{Error, Result};
use crate::label::{LabelDistribution, NUM_LABELS};
use crate::seed;

/// Standard deviation of the initial weights.
pub const INIT_STD: f64 = 0.01;

/// Weights (`NUM_LABELS x dim`, row-major) and bias of the output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    dim: usize,
    weights: Vec<f64>,
    bias: [f64; NUM_LABELS],
}

impl ClassifierParams {
    pub fn zeros(dim: usize) -> Result<Self> {
        if dim < 1 {
            return Err(Error::InvalidArgument(
                "feature dimension must be >= 1".into(),
            ));
        }
        Ok(ClassifierParams {
            dim,
            weights: vec![0.0; NUM_LABELS * dim],
            bias: [0.0; NUM_LABELS],
        })
    }

    pub fn from_parts(dim: usize, weights: Vec<f64>, bias: [f64; NUM_LABELS]) -> Result<Self> {
        if dim < 1 {
            return Err(Error::InvalidArgument(
                "feature dimension must be >= 1".into(),
            ));
        }
        if weights.len() != NUM_LABELS * dim {
            return Err(Error::DimensionMismatch {
                expected: NUM_LABELS * dim,
                got: weights.len(),
            });
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("classifier parameters"));
        }
        Ok(ClassifierParams { dim, weights, bias })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64; NUM_LABELS] {
        &self.bias
    }

    pub fn row(&self, class: usize) -> &[f64] {
        &self.weights[class * self.dim..(class + 1) * self.dim]
    }

    /// All parameters as one flat vector: weights then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.bias).copied().collect()
    }

    pub fn from_flat(dim: usize, flat: &[f64]) -> Result<Self> {
        let nw = NUM_LABELS * dim;
        if flat.len() != nw + NUM_LABELS {
            return Err(Error::DimensionMismatch {
                expected: nw + NUM_LABELS,
                got: flat.len(),
            });
        }
        let bias = std::array::from_fn(|i| flat[nw + i]);
        ClassifierParams::from_parts(dim, flat[..nw].to_vec(), bias)
    }

    fn zip_apply(&mut self, other: &ClassifierParams, mut f: impl FnMut(&mut f64, f64)) {
        for (a, &b) in self.weights.iter_mut().zip(&other.weights) {
            f(a, b);
        }
        for (a, &b) in self.bias.iter_mut().zip(&other.bias) {
            f(a, b);
        }
    }
}

/// Seeded small Gaussian weights, zero bias.
pub fn init(dim: usize, seed: u64) -> Result<ClassifierParams> {
    let mut params = ClassifierParams::zeros(dim)?;
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let mut rng = seed::rng_for(seed, "classifier-init");
    for w in &mut params.weights {
        *w = normal.sample(&mut rng);
    }
    Ok(params)
}

/// `weights * x + bias`.
pub fn forward(params: &ClassifierParams, x: &[f64]) -> Result<[f64; NUM_LABELS]> {
    if x.len() != params.dim {
        return Err(Error::DimensionMismatch {
            expected: params.dim,
            got: x.len(),
        });
    }
    Ok(std::array::from_fn(|k| {
        params.bias[k] + params.row(k).iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }))
}

/// Logits for every feature vector.
pub fn predict(params: &ClassifierParams, xs: &[Vec<f64>]) -> Result<Vec<[f64; NUM_LABELS]>> {
    xs.iter().map(|x| forward(params, x)).collect()
}

/// A feature vector with its training target.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub target: LabelDistribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `-sum t ln softmax`.
    CrossEntropy,
    /// `sum t ln(t / softmax)`; cross-entropy minus the target entropy.
    Kl,
}

fn log_softmax(logits: &[f64; NUM_LABELS]) -> [f64; NUM_LABELS] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    logits.map(|v| v - lse)
}

/// Mean loss over `batch` and its gradient with respect to the parameters.
pub fn loss_and_grad(
    params: &ClassifierParams,
    batch: &[Example],
    kind: LossKind,
) -> Result<(f64, ClassifierParams)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut grad = ClassifierParams::zeros(params.dim)?;
    let mut loss = 0.0;
    for ex in batch {
        let logits = forward(params, &ex.features)?;
        let logp = log_softmax(&logits);
        let t = ex.target.probs();
        for k in 0..NUM_LABELS {
            if t[k] > 0.0 {
                loss -= t[k] * logp[k];
                if kind == LossKind::Kl {
                    loss += t[k] * t[k].ln();
                }
            }
            let delta = logp[k].exp() - t[k];
            grad.bias[k] += delta;
            let row = &mut grad.weights[k * params.dim..(k + 1) * params.dim];
            for (g, &x) in row.iter_mut().zip(&ex.features) {
                *g += delta * x;
            }
        }
    }
    let n = batch.len() as f64;
    for g in grad.weights.iter_mut().chain(&mut grad.bias) {
        *g /= n;
    }
    Ok((loss / n, grad))
}

/// Mean loss over a whole dataset.
pub fn dataset_loss(params: &ClassifierParams, data: &[Example], kind: LossKind) -> Result<f64> {
    Ok(loss_and_grad(params, data, kind)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// Plain minibatch gradient descent.
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Training hyperparameters. The learning-rate default suits features of
/// unit scale; large pretrained encoders are usually finetuned at 1e-5.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs_phase1: usize,
    pub epochs_phase2: usize,
    pub optimizer: Optimizer,
    /// Train-time smoothing mass applied to phase-1 hard targets.
    pub label_smoothing: Option<f64>,
    /// Train once on the union of both sets instead of two phases.
    pub merged: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            batch_size: 128,
            epochs_phase1: 3,
            epochs_phase2: 9,
            optimizer: Optimizer::Sgd,
            label_smoothing: None,
            merged: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(
                "learning rate must be positive".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if let Some(a) = self.label_smoothing {
            if !(0.0..1.0).contains(&a) {
                return Err(Error::InvalidArgument(format!(
                    "label smoothing must lie in [0, 1), got {a}"
                )));
            }
        }
        Ok(())
    }

    /// Short hex digest identifying this configuration.
    pub fn fingerprint(&self) -> String {
        crate::seed::fingerprint(&format!("{self:?}"))
    }
}

/// Gold-label confidence statistics of one training example across epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingDynamics {
    pub mean_confidence: f64,
    pub std_confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ClassifierParams,
    /// Full-dataset loss after each epoch.
    pub epoch_losses: Vec<f64>,
    /// One entry per example; empty when no epoch ran.
    pub dynamics: Vec<TrainingDynamics>,
}

struct AdamState {
    m: ClassifierParams,
    v: ClassifierParams,
    step: i32,
}

/// Minibatch training for `epochs` epochs with per-epoch seeded shuffling.
/// `stream` names the random stream so the two phases draw independently.
pub fn train(
    params: &ClassifierParams,
    data: &[Example],
    loss: LossKind,
    epochs: usize,
    config: &TrainConfig,
    stream: &str,
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if let Some(bad) = data.iter().find(|e| e.features.len() != params.dim) {
        return Err(Error::DimensionMismatch {
            expected: params.dim,
            got: bad.features.len(),
        });
    }
    let mut params = params.clone();
    let mut rng = seed::rng_for(config.seed, stream);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut adam = AdamState {
        m: ClassifierParams::zeros(params.dim)?,
        v: ClassifierParams::zeros(params.dim)?,
        step: 0,
    };
    let gold: Vec<usize> = data.iter().map(|e| e.target.argmax().index()).collect();
    let mut confidences: Vec<Vec<f64>> = vec![Vec::with_capacity(epochs); data.len()];
    let mut epoch_losses = Vec::with_capacity(epochs);
    let mut batch = Vec::with_capacity(config.batch_size);

    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i].clone()));
            let (_, grad) = loss_and_grad(&params, &batch, loss)?;
            step(&mut params, &grad, config, &mut adam);
        }
        epoch_losses.push(dataset_loss(&params, data, loss)?);
        for (i, ex) in data.iter().enumerate() {
            let p = softmax(&forward(&params, &ex.features)?)?;
            confidences[i].push(p.probs()[gold[i]]);
        }
    }
    if params
        .weights
        .iter()
        .chain(&params.bias)
        .any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite(
            "trained parameters (learning rate too large?)",
        ));
    }

    let dynamics = if epochs == 0 {
        Vec::new()
    } else {
        confidences
            .iter()
            .map(|c| {
                let n = c.len() as f64;
                let mean = c.iter().sum::<f64>() / n;
                let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                TrainingDynamics {
                    mean_confidence: mean,
                    std_confidence: var.sqrt(),
                }
            })
            .collect()
    };
    Ok(TrainOutcome {
        params,
        epoch_losses,
        dynamics,
    })
}

fn step(
    params: &mut ClassifierParams,
    grad: &ClassifierParams,
    config: &TrainConfig,
    adam: &mut AdamState,
) {
    let lr = config.learning_rate;
    match config.optimizer {
        Optimizer::Sgd => params.zip_apply(grad, |p, g| *p -= lr * g),
        Optimizer::Adam {
            beta1,
            beta2,
            epsilon,
        } => {
            adam.step += 1;
            adam.m
                .zip_apply(grad, |m, g| *m = beta1 * *m + (1.0 - beta1) * g);
            adam.v
                .zip_apply(grad, |v, g| *v = beta2 * *v + (1.0 - beta2) * g * g);
            let c1 = 1.0 - beta1.powi(adam.step);
            let c2 = 1.0 - beta2.powi(adam.step);
            let flat_m = adam.m.to_flat();
            let flat_v = adam.v.to_flat();
            let mut i = 0;
            let update = |p: &mut f64, _: f64| {
                let m_hat = flat_m[i] / c1;
                let v_hat = flat_v[i] / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
                i += 1;
            };
            params.zip_apply(grad, update);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhaseOutcome {
    pub params: ClassifierParams,
    pub phase1: TrainOutcome,
    /// `None` when the multi-annotated set is empty.
    pub phase2: Option<TrainOutcome>,
}

/// Cross-entropy on the single-annotated set, then KL finetuning on the
/// soft targets of the multi-annotated set. With `config.merged` both sets
/// are trained together for `epochs_phase1` epochs instead.
pub fn two_phase_train(
    initial: &ClassifierParams,
    single: &[Example],
    multi: &[Example],
    config: &TrainConfig,
) -> Result<TwoPhaseOutcome> {
    if single.is_empty() {
        return Err(Error::Empty("single-annotated set"));
    }
    let single: Vec<Example> = match config.label_smoothing {
        Some(alpha) => single
            .iter()
            .map(|e| {
                Ok(Example {
                    features: e.features.clone(),
                    target: smooth_target(e.target.argmax(), alpha)?,
                })
            })
            .collect::<Result<_>>()?,
        None => single.to_vec(),
    };

    if config.merged {
        let union: Vec<Example> = single.iter().chain(multi).cloned().collect();
        let phase1 = train(
            initial,
            &union,
            LossKind::Kl,
            config.epochs_phase1,
            config,
            "phase1",
        )?;
        return Ok(TwoPhaseOutcome {
            params: phase1.params.clone(),
            phase1,
            phase2: None,
        });
    }

    let phase1 = train(
        initial,
        &single,
        LossKind::CrossEntropy,
        config.epochs_phase1,
        config,
        "phase1",
    )?;
    if multi.is_empty() {
        return Ok(TwoPhaseOutcome {
            params: phase1.params.clone(),
            phase1,
            phase2: None,
        });
    }
    let phase2 = train(
        &phase1.params,
        multi,
        LossKind::Kl,
        config.epochs_phase2,
        config,
        "phase2",
    )?;
    Ok(TwoPhaseOutcome {
        params: phase2.params.clone(),
        phase1,
        phase2: Some(phase2),
    })
}

/// Metadata stored in a checkpoint header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub config_hash: String,
}

const CHECKPOINT_MAGIC: &str = "labeldist-classifier";
const CHECKPOINT_VERSION: u32 = 1;

/// Text checkpoint: a header followed by the bias and one weight row per
/// class. Values use Rust's shortest round-trip float formatting.
pub fn write_checkpoint<W: Write>(
    mut w: W,
    params: &ClassifierParams,
    meta: &CheckpointMeta,
) -> Result<()> {
    let join = |vs: &[f64]| {
        vs.iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    writeln!(w, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}")?;
    writeln!(w, "dim {}", params.dim)?;
    writeln!(w, "classes {NUM_LABELS}")?;
    writeln!(w, "seed {}", meta.seed)?;
    writeln!(w, "config_hash {}", meta.config_hash)?;
    writeln!(w, "bias {}", join(&params.bias))?;
    for k in 0..NUM_LABELS {
        writeln!(w, "weights {}", join(params.row(k)))?;
    }
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(reader: R) -> Result<(ClassifierParams, CheckpointMeta)> {
    let mut lines = reader.lines().enumerate();
    let mut next = |key: &str| -> Result<(usize, Vec<String>)> {
        let (i, line) = lines.next().ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("truncated checkpoint, expected `{key}`"),
        })?;
        let line = line?;
        let mut parts = line.split_whitespace().map(str::to_string);
        match parts.next() {
            Some(k) if k == key => Ok((i + 1, parts.collect())),
            _ => Err(Error::Parse {
                line: i + 1,
                message: format!("expected `{key}`"),
            }),
        }
    };
    let bad = |line: usize, message: String| Error::Parse { line, message };
    let single = |(line, v): (usize, Vec<String>)| -> Result<(usize, String)> {
        match v.as_slice() {
            [one] => Ok((line, one.clone())),
            _ => Err(bad(line, "expected one value".into())),
        }
    };
    let (line, version) = single(next(CHECKPOINT_MAGIC)?)?;
    if version != CHECKPOINT_VERSION.to_string() {
        return Err(bad(
            line,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let (line, dim) = single(next("dim")?)?;
    let dim: usize = dim.parse().map_err(|_| bad(line, "bad dim".into()))?;
    let (line, classes) = single(next("classes")?)?;
    if classes != NUM_LABELS.to_string() {
        return Err(bad(line, format!("expected {NUM_LABELS} classes")));
    }
    let (line, seed) = single(next("seed")?)?;
    let seed: u64 = seed.parse().map_err(|_| bad(line, "bad seed".into()))?;
    let (_, config_hash) = single(next("config_hash")?)?;
    let floats = |(line, v): (usize, Vec<String>), n: usize| -> Result<Vec<f64>> {
        let vals: Vec<f64> = v
            .iter()
            .map(|s| {
                s.parse()
                    .map_err(|_| bad(line, format!("bad number `{s}`")))
            })
            .collect::<Result<_>>()?;
        if vals.len() != n {
            return Err(bad(
                line,
                format!("expected {n} values, got {}", vals.len()),
            ));
        }
        Ok(vals)
    };
    let bias = floats(next("bias")?, NUM_LABELS)?;
    let mut weights = Vec::with_capacity(NUM_LABELS * dim);
    for _ in 0..NUM_LABELS {
        weights.extend(floats(next("weights")?, dim)?);
    }
    let params = ClassifierParams::from_parts(dim, weights, [bias[0], bias[1], bias[2]])?;
    Ok((params, CheckpointMeta { seed, config_hash }))
}
