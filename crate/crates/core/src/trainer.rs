//! Penalized training and λ escalation.
//!
//! Each round minimizes `ℓ(Θ) + Σ λ_i h_i(Θ)` with the ε-floored penalties on
//! the training grid. After a round the exact penalties (`ε = 0`) are measured
//! on the audit grid; every family still positive gets its weight raised to
//! `max(lambda_init, λ_i · lambda_factor)`. Training stops once every family
//! is exactly zero or `max_rounds` is reached.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::diffcore::logistic;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::grove::{GroveModel, Task};
use crate::penalty::{Hinge, Penalties, PenaltyReport};
use crate::schema::{validate, Constraints, GroveArchitecture, MonotoneSpec};

const ROW_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs_per_round: usize,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub lambda_init: f64,
    pub lambda_factor: f64,
    pub max_rounds: usize,
    /// Floor of the hinge during training.
    pub epsilon: f64,
    /// Training shift of the hinge; asks for `Δ ≤ −margin` so that the exact
    /// penalties reach zero rather than hover at the boundary.
    pub margin: f64,
    pub optimizer: OptimizerKind,
    pub warm_start: bool,
    /// Weight on positive examples in the classification loss.
    pub positive_weight: Option<f64>,
    pub grid: GridSpec,
    /// Audit grid refinement factor.
    pub audit_factor: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            epochs_per_round: 500,
            batch_size: None,
            seed: 0,
            lambda_init: 1.0,
            lambda_factor: 10.0,
            max_rounds: 8,
            epsilon: 1e-3,
            margin: 1e-2,
            optimizer: OptimizerKind::Adam,
            warm_start: true,
            positive_weight: None,
            grid: GridSpec::default(),
            audit_factor: 4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.lambda_factor > 1.0) {
            return bad("lambda_factor must exceed 1");
        }
        if !(self.lambda_init > 0.0) {
            return bad("lambda_init must be positive");
        }
        if self.max_rounds < 1 {
            return bad("max_rounds must be at least 1");
        }
        if !(self.epsilon >= 0.0 && self.margin >= 0.0) {
            return bad("epsilon and margin must be nonnegative");
        }
        if self.batch_size == Some(0) {
            return bad("batch_size must be positive");
        }
        if self.positive_weight.is_some_and(|w| !(w > 0.0)) {
            return bad("positive_weight must be positive");
        }
        if self.audit_factor < 1 {
            return bad("audit_factor must be at least 1");
        }
        self.grid.validate()
    }

    pub fn audit_grid(&self) -> GridSpec {
        self.grid.refined(self.audit_factor)
    }
}

fn check_data(model: &GroveModel, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyData("training data has no rows".into()));
    }
    if data.n_features() != model.n_features() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            found: data.n_features(),
        });
    }
    if data.x.iter().flatten().chain(&data.y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training data".into()));
    }
    if model.task == Task::BinaryClassification && !data.is_binary_target() {
        return Err(Error::Malformed("classification targets must be 0 or 1".into()));
    }
    Ok(())
}

/// Mean squared error (regression) or mean negative log-likelihood
/// (classification), with its gradient over [`GroveModel::flatten`].
pub fn loss(model: &GroveModel, data: &Dataset) -> Result<(f64, Vec<f64>)> {
    check_data(model, data)?;
    let rows: Vec<usize> = (0..data.len()).collect();
    Ok(batch_loss(model, data, &rows, 1.0))
}

/// [`loss`] with positive examples weighted by `positive_weight`.
pub fn weighted_loss(model: &GroveModel, data: &Dataset, positive_weight: f64) -> Result<(f64, Vec<f64>)> {
    check_data(model, data)?;
    let rows: Vec<usize> = (0..data.len()).collect();
    Ok(batch_loss(model, data, &rows, positive_weight))
}

fn batch_loss(model: &GroveModel, data: &Dataset, rows: &[usize], pos_w: f64) -> (f64, Vec<f64>) {
    let p = model.param_len();
    let offsets = model.param_offsets();
    let weight = |y: f64| {
        if model.task == Task::BinaryClassification && y == 1.0 {
            pos_w
        } else {
            1.0
        }
    };
    let total_w: f64 = rows.iter().map(|&i| weight(data.y[i])).sum();
    let parts: Vec<(f64, Vec<f64>)> = rows
        .par_chunks(ROW_CHUNK)
        .map(|chunk| {
            let mut ws = model.workspaces();
            let mut grad = vec![0.0; p];
            let mut value = 0.0;
            let mut slice = Vec::new();
            for &i in chunk {
                let x = &data.x[i];
                let y = data.y[i];
                let mut s = model.intercept;
                for (g, (group, net)) in model.arch.groups.iter().zip(&model.subnets).enumerate() {
                    slice.clear();
                    slice.extend(group.features.iter().map(|&f| x[f]));
                    s += net.forward(&slice, &mut ws[g]);
                }
                let w = weight(y) / total_w;
                let (l, dl) = match model.task {
                    Task::Regression => ((s - y) * (s - y), 2.0 * (s - y)),
                    // softplus(s) − y·s, computed stably
                    Task::BinaryClassification => {
                        let sp = if s > 0.0 { s + (-s).exp().ln_1p() } else { s.exp().ln_1p() };
                        (sp - y * s, logistic(s) - y)
                    }
                };
                value += w * l;
                let coef = w * dl;
                grad[0] += coef;
                for (g, (group, net)) in model.arch.groups.iter().zip(&model.subnets).enumerate() {
                    slice.clear();
                    slice.extend(group.features.iter().map(|&f| x[f]));
                    let off = offsets[g];
                    net.value_grad_into(&slice, &mut ws[g], coef, &mut grad[off..off + net.param_len()]);
                }
            }
            (value, grad)
        })
        .collect();
    let mut value = 0.0;
    let mut grad = vec![0.0; p];
    for (v, g) in parts {
        value += v;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    (value, grad)
}

struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    fn new(kind: OptimizerKind, lr: f64, p: usize) -> Self {
        Optimizer {
            kind,
            lr,
            m: vec![0.0; p],
            v: vec![0.0; p],
            t: 0,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (w, g) in theta.iter_mut().zip(grad) {
                    *w -= self.lr * g;
                }
            }
            OptimizerKind::Momentum => {
                for ((w, g), m) in theta.iter_mut().zip(grad).zip(&mut self.m) {
                    *m = 0.9 * *m + g;
                    *w -= self.lr * *m;
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2) = (0.9f64, 0.999f64);
                let c1 = 1.0 - b1.powi(self.t);
                let c2 = 1.0 - b2.powi(self.t);
                for i in 0..theta.len() {
                    self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
                    self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
                    theta[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
                }
            }
        }
    }
}

/// A trained model and the objective recorded at each epoch.
#[derive(Debug, Clone)]
pub struct RoundOutput {
    pub model: GroveModel,
    /// Objective before each full-batch step, or the mean over an epoch's minibatches.
    pub epoch_losses: Vec<f64>,
}

/// Constraints restricted to the families with a positive weight.
fn active(c: &Constraints, lambdas: [f64; 3]) -> Constraints {
    Constraints {
        individual: if lambdas[0] > 0.0 { c.individual.clone() } else { Vec::new() },
        weak: if lambdas[1] > 0.0 { c.weak.clone() } else { Vec::new() },
        strong: if lambdas[2] > 0.0 { c.strong.clone() } else { Vec::new() },
        declared_strong: if lambdas[2] > 0.0 { c.declared_strong.clone() } else { Vec::new() },
    }
}

/// One round of gradient descent on `ℓ + Σ λ_i h_i`.
pub fn train_round(
    model: &GroveModel,
    data: &Dataset,
    spec: &MonotoneSpec,
    lambdas: [f64; 3],
    config: &TrainConfig,
) -> Result<RoundOutput> {
    config.validate()?;
    let c = spec.resolve(&model.schema)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    run_round(model, data, &c, lambdas, config, 1, &mut rng)
}

fn run_round(
    model: &GroveModel,
    data: &Dataset,
    c: &Constraints,
    lambdas: [f64; 3],
    config: &TrainConfig,
    round: usize,
    rng: &mut ChaCha8Rng,
) -> Result<RoundOutput> {
    if lambdas.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::InvalidConfig("penalty weights must be nonnegative".into()));
    }
    check_data(model, data)?;
    let pen = Penalties::new(model, &active(c, lambdas), &config.grid)?;
    let hinge = Hinge {
        epsilon: config.epsilon,
        margin: config.margin,
    };
    let pos_w = config.positive_weight.unwrap_or(1.0);
    let mut model = model.clone();
    let mut theta = model.flatten();
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, theta.len());
    let mut rows: Vec<usize> = (0..data.len()).collect();
    let batch = config.batch_size.unwrap_or(rows.len()).min(rows.len());
    let mut epoch_losses = Vec::with_capacity(config.epochs_per_round);
    for epoch in 0..config.epochs_per_round {
        if batch < rows.len() {
            rows.shuffle(rng);
        }
        let mut epoch_total = 0.0;
        let mut steps = 0;
        for chunk in rows.chunks(batch) {
            let (mut obj, mut grad) = batch_loss(&model, data, chunk, pos_w);
            if !pen.is_empty() {
                let eval = pen.evaluate(&model, hinge, true);
                let grads = eval.grads.expect("requested");
                for k in 0..3 {
                    if lambdas[k] > 0.0 {
                        obj += lambdas[k] * eval.values[k];
                        for (a, b) in grad.iter_mut().zip(&grads[k]) {
                            *a += lambdas[k] * b;
                        }
                    }
                }
            }
            if !obj.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    round,
                    epoch,
                    loss: obj,
                });
            }
            epoch_total += obj;
            steps += 1;
            opt.step(&mut theta, &grad);
            model.set_params(&theta)?;
        }
        epoch_losses.push(epoch_total / steps as f64);
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged {
            round,
            epoch: config.epochs_per_round,
            loss: f64::NAN,
        });
    }
    Ok(RoundOutput { model, epoch_losses })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub lambda: [f64; 3],
    /// Data loss after the round.
    pub loss: f64,
    /// Exact penalties on the audit grid after the round.
    pub h: [f64; 3],
    /// Accuracy (classification) or mean squared error (regression) on the training data.
    pub train_metric: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub rounds: Vec<RoundRecord>,
}

impl TrainTrace {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["round", "lambda1", "lambda2", "lambda3", "loss", "h1", "h2", "h3", "train_metric"])?;
        for r in &self.rounds {
            let mut rec = vec![r.round.to_string()];
            rec.extend(r.lambda.iter().map(f64::to_string));
            rec.push(r.loss.to_string());
            rec.extend(r.h.iter().map(f64::to_string));
            rec.push(r.train_metric.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn final_penalties(&self) -> Option<[f64; 3]> {
        self.rounds.last().map(|r| r.h)
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: GroveModel,
    pub trace: TrainTrace,
    /// All exact penalties vanished on the audit grid.
    pub certified: bool,
    /// Audit of the returned model.
    pub audit: PenaltyReport,
}

/// Random subnets; the intercept starts at the target mean (regression) or its logit.
pub fn init_model(data: &Dataset, arch: &GroveArchitecture, task: Task, rng: &mut ChaCha8Rng) -> Result<GroveModel> {
    let mut model = GroveModel::random(task, data.schema.clone(), arch.clone(), rng)?;
    let mean = data.y.iter().sum::<f64>() / data.len().max(1) as f64;
    model.intercept = match task {
        Task::Regression => mean,
        Task::BinaryClassification => {
            let p = mean.clamp(1e-6, 1.0 - 1e-6);
            (p / (1.0 - p)).ln()
        }
    };
    Ok(model)
}

fn train_metric(model: &GroveModel, data: &Dataset) -> Result<f64> {
    let mut correct = 0usize;
    let mut sq = 0.0;
    for (x, &y) in data.x.iter().zip(&data.y) {
        let s = model.score(x)?;
        match model.task {
            Task::Regression => sq += (s - y) * (s - y),
            Task::BinaryClassification => correct += usize::from((s >= 0.0) == (y == 1.0)),
        }
    }
    let n = data.len() as f64;
    Ok(match model.task {
        Task::Regression => sq / n,
        Task::BinaryClassification => correct as f64 / n,
    })
}

/// λ-escalation training of a grove.
///
/// Uncertified results (some exact penalty still positive after `max_rounds`)
/// are returned with `certified == false`, not as errors.
pub fn fit(data: &Dataset, spec: &MonotoneSpec, arch: &GroveArchitecture, task: Task, config: &TrainConfig) -> Result<FitOutcome> {
    config.validate()?;
    data.validate()?;
    let c = spec.resolve(&data.schema)?;
    let problems = validate(&data.schema, spec, arch);
    if !problems.is_empty() {
        let msg: Vec<String> = problems.iter().map(|v| v.message.clone()).collect();
        return Err(Error::InvalidSpec(msg.join("; ")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = init_model(data, arch, task, &mut rng)?;
    let audit = Penalties::new(&init, &c, &config.audit_grid())?;

    let mut model = init.clone();
    let mut lambdas = [0.0f64; 3];
    let mut trace = TrainTrace::default();
    let mut report = audit.evaluate(&model, Hinge::EXACT, false).report;
    for round in 1..=config.max_rounds {
        if round > 1 && !config.warm_start {
            model = init.clone();
        }
        let out = run_round(&model, data, &c, lambdas, config, round, &mut rng)?;
        model = out.model;
        report = audit.evaluate(&model, Hinge::EXACT, false).report;
        let h = report.values();
        let (l, _) = batch_loss(&model, data, &(0..data.len()).collect::<Vec<_>>(), config.positive_weight.unwrap_or(1.0));
        trace.rounds.push(RoundRecord {
            round,
            lambda: lambdas,
            loss: l,
            h,
            train_metric: train_metric(&model, data)?,
        });
        log::info!("round {round}: loss {l:.6}, h = {h:?}, lambda = {lambdas:?}");
        if h.iter().all(|&v| v == 0.0) {
            break;
        }
        for k in 0..3 {
            if h[k] > 0.0 {
                lambdas[k] = config.lambda_init.max(lambdas[k] * config.lambda_factor);
            }
        }
    }
    let certified = report.values().iter().all(|&v| v == 0.0);
    model.center()?;
    Ok(FitOutcome {
        model,
        trace,
        certified,
        audit: report,
    })
}
