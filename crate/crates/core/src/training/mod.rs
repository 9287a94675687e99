//! Losses, mini-batch samplers, the Adam training loop, and checkpoint
//! ensembles.

mod gradcheck;
mod sampler;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::BagDataset;
use crate::error::{Error, Result};
use crate::models::{BagPredictor, Head, Model};
use crate::numerics::{bce_row, AdamConfig, AdamState, Matrix, Rng, Tape, Var};

pub use gradcheck::{
    gradcheck, gradcheck_sweep, GradcheckOptions, GradcheckResult, GRADCHECK_HEADS,
};
pub use sampler::{sample_batch, BalancedSampler, Sampler, UniformSampler};

/// How mini-batches are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Balancing {
    /// Shuffled passes over all bags.
    None,
    /// Classes take turns; each draw picks a bag of the current class.
    MinibatchBalanced,
}

impl Balancing {
    pub fn name(self) -> &'static str {
        match self {
            Balancing::None => "none",
            Balancing::MinibatchBalanced => "minibatch_balanced",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Balancing::None, Balancing::MinibatchBalanced]
            .into_iter()
            .find(|b| b.name() == s)
    }
}

/// Where the cross-entropy is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossLevel {
    /// Every instance inherits its bag's tags.
    Instance,
    /// Against the bag prediction.
    Bag,
    /// `Instance` for the segment head, `Bag` otherwise.
    Auto,
}

impl LossLevel {
    pub fn name(self) -> &'static str {
        match self {
            LossLevel::Instance => "instance",
            LossLevel::Bag => "bag",
            LossLevel::Auto => "auto",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [LossLevel::Instance, LossLevel::Bag, LossLevel::Auto]
            .into_iter()
            .find(|l| l.name() == s)
    }

    pub fn resolve(self, head: Head) -> LossLevel {
        match self {
            LossLevel::Auto if head.is_instance_level() => LossLevel::Instance,
            LossLevel::Auto => LossLevel::Bag,
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Bags per mini-batch.
    pub batch_size: usize,
    pub iterations: usize,
    pub checkpoint_interval: usize,
    /// Number of trailing checkpoints whose predictions are averaged.
    pub ensemble_size: usize,
    pub seed: u64,
    pub balancing: Balancing,
    pub loss_level: LossLevel,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            iterations: 5000,
            checkpoint_interval: 500,
            ensemble_size: 5,
            seed: 0,
            balancing: Balancing::MinibatchBalanced,
            loss_level: LossLevel::Auto,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if self.checkpoint_interval == 0 {
            return fail("checkpoint_interval must be positive".into());
        }
        let span = self.ensemble_size.checked_mul(self.checkpoint_interval);
        if span.is_none_or(|s| s > self.iterations) {
            return fail(format!(
                "ensemble_size {} x checkpoint_interval {} exceeds iterations {}",
                self.ensemble_size, self.checkpoint_interval, self.iterations
            ));
        }
        Ok(())
    }
}

/// Cross-entropy of one prediction vector, predictions clamped before logs.
pub fn bce_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            target.len()
        )));
    }
    Ok(bce_row(pred, target))
}

/// Mean over instances of the cross-entropy of each instance prediction
/// against the bag tags.
pub fn instance_level_loss(model: &Model, bag: &Matrix, target: &[f64]) -> Result<f64> {
    let preds = model.instance_predictions(bag)?;
    let mut total = 0.0;
    for r in 0..preds.rows() {
        total += bce_loss(preds.row(r), target)?;
    }
    Ok(total / preds.rows() as f64)
}

/// Cross-entropy of the bag prediction.
pub fn bag_level_loss(model: &Model, bag: &Matrix, target: &[f64]) -> Result<f64> {
    bce_loss(&model.forward(bag)?, target)
}

/// Records the mean loss over `bags` on `tape`.
pub fn record_loss(
    model: &Model,
    tape: &mut Tape,
    bags: &[&Matrix],
    targets: &Matrix,
    level: LossLevel,
    rng: Option<&mut Rng>,
) -> Result<Var> {
    let rec = model.record(tape, bags, rng)?;
    let per_bag = match level.resolve(model.spec().head) {
        LossLevel::Bag => tape.bce(rec.bags, targets)?,
        _ => {
            let inst = rec.instances.ok_or_else(|| {
                Error::Config(format!(
                    "instance-level loss needs instance predictions; {} has none",
                    model.spec().head.name()
                ))
            })?;
            let mut rows = Vec::with_capacity(rec.segments.total_rows());
            for (b, range) in rec.segments.iter().enumerate() {
                rows.extend(range.map(|_| targets.row(b).to_vec()));
            }
            let per_instance = tape.bce(inst, &Matrix::from_rows(&rows)?)?;
            tape.seg_mean(per_instance, &rec.segments)?
        }
    };
    Ok(tape.mean(per_bag))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub iteration: usize,
    pub loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub iteration: usize,
    pub model: Model,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub checkpoints: Vec<Checkpoint>,
    pub log: Vec<LogEntry>,
    ensemble_size: usize,
}

impl TrainOutcome {
    /// The last `ensemble_size` checkpoints, or the final model when the
    /// ensemble size is zero.
    pub fn ensemble(&self) -> Ensemble {
        let members = if self.ensemble_size == 0 || self.checkpoints.is_empty() {
            vec![self.model.clone()]
        } else {
            let start = self.checkpoints.len().saturating_sub(self.ensemble_size);
            self.checkpoints[start..]
                .iter()
                .map(|c| c.model.clone())
                .collect()
        };
        Ensemble::new(members).expect("checkpoints share the trained spec")
    }

    /// `iteration,loss,seconds` CSV.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("iteration,loss,seconds\n");
        for e in &self.log {
            out.push_str(&format!("{},{},{:.6}\n", e.iteration, e.loss, e.seconds));
        }
        out
    }
}

/// Trains `model` with Adam on mini-batches of `dataset`.
///
/// Iterations are numbered from 1; a checkpoint is taken after every
/// iteration divisible by the checkpoint interval. A `bs_knn` model is
/// trained by memorising the dataset.
pub fn train(mut model: Model, dataset: &BagDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let spec = model.spec();
    if dataset.dim() != spec.input_dim || dataset.class_count() != spec.classes {
        return Err(Error::Shape(format!(
            "dataset is {} classes x {} features, model expects {} x {}",
            dataset.class_count(),
            dataset.dim(),
            spec.classes,
            spec.input_dim
        )));
    }
    if !spec.head.is_trainable() {
        model.set_reference(dataset)?;
        return Ok(TrainOutcome {
            model,
            checkpoints: Vec::new(),
            log: Vec::new(),
            ensemble_size: 0,
        });
    }

    let mut sampler = Sampler::new(config.balancing, dataset, Rng::with_stream(config.seed, 1))?;
    let mut dropout_rng = Rng::with_stream(config.seed, 2);
    let adam_config = AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(adam_config, model.params());
    let targets = dataset.targets();
    let start = Instant::now();
    let mut log = Vec::with_capacity(config.iterations);
    let mut checkpoints = Vec::new();

    for iteration in 1..=config.iterations {
        let mut batch = sampler.sample_batch(config.batch_size);
        batch.sort_unstable();
        let bags: Vec<&Matrix> = batch
            .iter()
            .map(|&i| &dataset.bags()[i].instances)
            .collect();
        let rows: Vec<&[f64]> = batch.iter().map(|&i| targets.row(i)).collect();
        let batch_targets = Matrix::from_rows(&rows)?;

        let mut tape = Tape::new();
        let loss = record_loss(
            &model,
            &mut tape,
            &bags,
            &batch_targets,
            config.loss_level,
            Some(&mut dropout_rng),
        )?;
        let value = tape.value(loss).get(0, 0);
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration,
                bags: batch,
            });
        }
        let grads = tape.backward(loss)?;
        adam.step(model.params_mut(), &grads.into_vec())?;
        log.push(LogEntry {
            iteration,
            loss: value,
            seconds: start.elapsed().as_secs_f64(),
        });
        if iteration % config.checkpoint_interval == 0 {
            checkpoints.push(Checkpoint {
                iteration,
                model: model.clone(),
            });
        }
    }
    Ok(TrainOutcome {
        model,
        checkpoints,
        log,
        ensemble_size: config.ensemble_size,
    })
}

/// Averages the predictions of models sharing one spec.
#[derive(Debug, Clone)]
pub struct Ensemble {
    members: Vec<Model>,
}

impl Ensemble {
    pub fn new(members: Vec<Model>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::Config("an ensemble needs at least one model".into()))?;
        if let Some(i) = members.iter().position(|m| m.spec() != first.spec()) {
            return Err(Error::Config(format!(
                "ensemble member {i} has a different model spec"
            )));
        }
        Ok(Ensemble { members })
    }

    pub fn members(&self) -> &[Model] {
        &self.members
    }
}

impl BagPredictor for Ensemble {
    fn classes(&self) -> usize {
        self.members[0].spec().classes
    }

    /// Mean taken as `p₁ + Σ (pᵢ - p₁) / n`, so identical members reproduce
    /// `p₁` exactly.
    fn predict(&self, bags: &[&Matrix]) -> Result<Matrix> {
        let base = self.members[0].predict(bags)?;
        if self.members.len() == 1 {
            return Ok(base);
        }
        let n = self.members.len() as f64;
        let mut acc = Matrix::zeros(base.rows(), base.cols());
        for m in &self.members[1..] {
            let p = m.predict(bags)?;
            acc.add_assign(&p.zip_map(&base, |a, b| a - b)?);
        }
        base.zip_map(&acc, |b, d| b + d / n)
    }
}

/// Mean prediction of `checkpoints` for one bag.
pub fn ensemble_predict(checkpoints: &[Model], bag: &Matrix) -> Result<Vec<f64>> {
    let ensemble = Ensemble::new(checkpoints.to_vec())?;
    Ok(ensemble.predict(&[bag])?.row(0).to_vec())
}
