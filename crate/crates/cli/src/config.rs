//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use milkit::data::{long_tail_counts, SynthSpec};
use milkit::models::{Head, ModelSpec, Topology};
use milkit::pooling::GateKind;
use milkit::training::{Balancing, LossLevel, TrainConfig};

use crate::CliError;

/// Every accepted key with its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    (
        "seed",
        "0",
        "seed for data generation, initialisation and sampling",
    ),
    ("out", "run", "output directory"),
    (
        "train_data",
        "",
        "training MILB file (empty: <out>/train.milb)",
    ),
    (
        "eval_data",
        "",
        "evaluation MILB file (empty: <out>/eval.milb)",
    ),
    (
        "model",
        "",
        "model file or checkpoint glob (empty: <out>/model.milm)",
    ),
    (
        "report",
        "",
        "evaluation report JSON (empty: <out>/report.json)",
    ),
    (
        "quality_file",
        "",
        "class_name,quality CSV for analyze (empty: none)",
    ),
    ("classes", "20", "number of classes K"),
    ("dim", "32", "instance feature dimension M"),
    (
        "train_bags_per_class",
        "200",
        "training bags per class (head count under a long tail)",
    ),
    ("eval_bags_per_class", "100", "evaluation bags per class"),
    (
        "long_tail_ratio",
        "1",
        "head-to-tail ratio of training class counts",
    ),
    ("instances_per_bag", "10", "instances per bag T"),
    (
        "positives_per_bag",
        "1",
        "planted instances per positive bag r",
    ),
    (
        "mean_scale",
        "1",
        "standard deviation of class-mean entries",
    ),
    ("noise_std", "1", "instance noise sigma"),
    (
        "multi_label_prob",
        "0",
        "probability that a bag carries a second class",
    ),
    (
        "head",
        "feature_att",
        "segment|is_max|is_avg|es_avg|es_maxmin|bs_knn|decision_att|decision_multi_att|feature_att",
    ),
    ("knn_k", "5", "neighbours for bs_knn"),
    ("levels", "2", "attention levels for decision_multi_att"),
    (
        "attention_dim",
        "0",
        "embedding width for feature_att (0: trunk_width)",
    ),
    ("trunk_depth", "3", "hidden layers in the instance trunk"),
    ("trunk_width", "64", "units per hidden layer"),
    ("gate", "sigmoid", "relu|exp|sigmoid|softmax|nin"),
    ("topology", "shared_trunk", "shared_trunk|separate_branch"),
    ("dropout", "0.5", "dropout rate after each hidden layer"),
    ("learning_rate", "0.001", "Adam learning rate"),
    ("batch_size", "64", "bags per mini-batch"),
    ("iterations", "5000", "training iterations"),
    (
        "checkpoint_interval",
        "500",
        "iterations between checkpoints",
    ),
    (
        "ensemble_size",
        "5",
        "trailing checkpoints averaged by the trained ensemble",
    ),
    ("balancing", "minibatch_balanced", "none|minibatch_balanced"),
    (
        "loss_level",
        "auto",
        "instance|bag|auto (instance for segment, bag otherwise)",
    ),
    ("gradcheck_step", "1e-5", "central-difference step"),
    (
        "gradcheck_tolerance",
        "1e-4",
        "largest accepted relative gradient error",
    ),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub train_data: Option<PathBuf>,
    pub eval_data: Option<PathBuf>,
    pub model: Option<String>,
    pub report: Option<PathBuf>,
    pub quality_file: Option<PathBuf>,
    pub classes: usize,
    pub dim: usize,
    pub train_bags_per_class: usize,
    pub eval_bags_per_class: usize,
    pub long_tail_ratio: f64,
    pub instances_per_bag: usize,
    pub positives_per_bag: usize,
    pub mean_scale: f64,
    pub noise_std: f64,
    pub multi_label_prob: f64,
    pub head: String,
    pub knn_k: usize,
    pub levels: usize,
    pub attention_dim: usize,
    pub trunk_depth: usize,
    pub trunk_width: usize,
    pub gate: GateKind,
    pub topology: Topology,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub checkpoint_interval: usize,
    pub ensemble_size: usize,
    pub balancing: Balancing,
    pub loss_level: LossLevel,
    pub gradcheck_step: f64,
    pub gradcheck_tolerance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut c = RunConfig {
            seed: 0,
            out: PathBuf::new(),
            train_data: None,
            eval_data: None,
            model: None,
            report: None,
            quality_file: None,
            classes: 0,
            dim: 0,
            train_bags_per_class: 0,
            eval_bags_per_class: 0,
            long_tail_ratio: 0.0,
            instances_per_bag: 0,
            positives_per_bag: 0,
            mean_scale: 0.0,
            noise_std: 0.0,
            multi_label_prob: 0.0,
            head: String::new(),
            knn_k: 0,
            levels: 0,
            attention_dim: 0,
            trunk_depth: 0,
            trunk_width: 0,
            gate: GateKind::Sigmoid,
            topology: Topology::SharedTrunk,
            dropout: 0.0,
            learning_rate: 0.0,
            batch_size: 0,
            iterations: 0,
            checkpoint_interval: 0,
            ensemble_size: 0,
            balancing: Balancing::MinibatchBalanced,
            loss_level: LossLevel::Auto,
            gradcheck_step: 0.0,
            gradcheck_tolerance: 0.0,
        };
        for (key, value, _) in KEYS {
            c.set(key, value).expect("documented defaults parse");
        }
        c
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("{key}: cannot parse {value:?}")))
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn choice<T>(key: &str, value: &str, parse: impl Fn(&str) -> Option<T>) -> Result<T, CliError> {
    parse(value).ok_or_else(|| CliError::Usage(format!("{key}: unknown value {value:?}")))
}

impl RunConfig {
    /// Parses config text on top of the defaults.
    ///
    /// One `key = value` per line; `#` starts a comment; blank lines are
    /// ignored. Unknown and repeated keys are rejected.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut config = RunConfig::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("line {}: expected key = value", i + 1)))?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(CliError::Usage(format!("line {}: {key} set twice", i + 1)));
            }
            seen.push(key);
            config
                .set(key, value.trim())
                .map_err(|e| CliError::Usage(format!("line {}: {e}", i + 1)))?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "seed" => self.seed = num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "train_data" => self.train_data = path(value),
            "eval_data" => self.eval_data = path(value),
            "model" => self.model = (!value.is_empty()).then(|| value.to_string()),
            "report" => self.report = path(value),
            "quality_file" => self.quality_file = path(value),
            "classes" => self.classes = num(key, value)?,
            "dim" => self.dim = num(key, value)?,
            "train_bags_per_class" => self.train_bags_per_class = num(key, value)?,
            "eval_bags_per_class" => self.eval_bags_per_class = num(key, value)?,
            "long_tail_ratio" => self.long_tail_ratio = num(key, value)?,
            "instances_per_bag" => self.instances_per_bag = num(key, value)?,
            "positives_per_bag" => self.positives_per_bag = num(key, value)?,
            "mean_scale" => self.mean_scale = num(key, value)?,
            "noise_std" => self.noise_std = num(key, value)?,
            "multi_label_prob" => self.multi_label_prob = num(key, value)?,
            "head" => {
                choice(key, value, |v| HEAD_NAMES.contains(&v).then_some(()))?;
                self.head = value.to_string();
            }
            "knn_k" => self.knn_k = num(key, value)?,
            "levels" => self.levels = num(key, value)?,
            "attention_dim" => self.attention_dim = num(key, value)?,
            "trunk_depth" => self.trunk_depth = num(key, value)?,
            "trunk_width" => self.trunk_width = num(key, value)?,
            "gate" => self.gate = choice(key, value, GateKind::parse)?,
            "topology" => self.topology = choice(key, value, Topology::parse)?,
            "dropout" => self.dropout = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "iterations" => self.iterations = num(key, value)?,
            "checkpoint_interval" => self.checkpoint_interval = num(key, value)?,
            "ensemble_size" => self.ensemble_size = num(key, value)?,
            "balancing" => self.balancing = choice(key, value, Balancing::parse)?,
            "loss_level" => self.loss_level = choice(key, value, LossLevel::parse)?,
            "gradcheck_step" => self.gradcheck_step = num(key, value)?,
            "gradcheck_tolerance" => self.gradcheck_tolerance = num(key, value)?,
            _ => return Err(CliError::Usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// `key=value` overrides, as given to `--set`.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<(), CliError> {
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set {o:?}: expected key=value")))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    fn synth(&self, bags_per_class: usize) -> SynthSpec {
        SynthSpec {
            classes: self.classes,
            dim: self.dim,
            bags_per_class,
            class_counts: None,
            instances_per_bag: self.instances_per_bag,
            positives_per_bag: self.positives_per_bag,
            mean_scale: self.mean_scale,
            noise_std: self.noise_std,
            multi_label_prob: self.multi_label_prob,
            seed: self.seed,
        }
    }

    /// Generator spec of the training split, long tail applied.
    pub fn train_synth(&self) -> Result<SynthSpec, CliError> {
        let mut spec = self.synth(self.train_bags_per_class);
        if self.long_tail_ratio != 1.0 {
            spec.class_counts = Some(long_tail_counts(
                self.classes,
                self.train_bags_per_class,
                self.long_tail_ratio,
            )?);
        }
        Ok(spec)
    }

    pub fn eval_synth(&self) -> SynthSpec {
        self.synth(self.eval_bags_per_class)
    }

    pub fn head(&self) -> Head {
        match self.head.as_str() {
            "segment" => Head::Segment,
            "is_max" => Head::IsMax,
            "is_avg" => Head::IsAvg,
            "es_avg" => Head::EsAvg,
            "es_maxmin" => Head::EsMaxmin,
            "bs_knn" => Head::BsKnn { k: self.knn_k },
            "decision_att" => Head::DecisionAtt,
            "decision_multi_att" => Head::DecisionMultiAtt {
                levels: self.levels,
            },
            "feature_att" => Head::FeatureAtt {
                dim: if self.attention_dim == 0 {
                    self.trunk_width
                } else {
                    self.attention_dim
                },
            },
            other => unreachable!("head {other} was validated on set"),
        }
    }

    pub fn model_spec(&self, input_dim: usize, classes: usize) -> ModelSpec {
        ModelSpec {
            input_dim,
            classes,
            trunk_depth: self.trunk_depth,
            trunk_width: self.trunk_width,
            head: self.head(),
            gate: self.gate,
            topology: self.topology,
            dropout_rate: self.dropout,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            iterations: self.iterations,
            checkpoint_interval: self.checkpoint_interval,
            ensemble_size: self.ensemble_size,
            seed: self.seed,
            balancing: self.balancing,
            loss_level: self.loss_level,
        }
    }

    pub fn train_data_path(&self) -> PathBuf {
        self.train_data
            .clone()
            .unwrap_or_else(|| self.out.join("train.milb"))
    }

    pub fn eval_data_path(&self) -> PathBuf {
        self.eval_data
            .clone()
            .unwrap_or_else(|| self.out.join("eval.milb"))
    }

    pub fn model_pattern(&self) -> String {
        self.model
            .clone()
            .unwrap_or_else(|| self.out.join("model.milm").display().to_string())
    }

    pub fn report_path(&self) -> PathBuf {
        self.report
            .clone()
            .unwrap_or_else(|| self.out.join("report.json"))
    }

    /// The effective configuration, one line per key, parseable by
    /// [`RunConfig::parse`].
    pub fn to_text(&self) -> String {
        let opt = |p: &Option<PathBuf>| {
            p.as_ref()
                .map_or(String::new(), |p| p.display().to_string())
        };
        let values: Vec<String> = vec![
            self.seed.to_string(),
            self.out.display().to_string(),
            opt(&self.train_data),
            opt(&self.eval_data),
            self.model.clone().unwrap_or_default(),
            opt(&self.report),
            opt(&self.quality_file),
            self.classes.to_string(),
            self.dim.to_string(),
            self.train_bags_per_class.to_string(),
            self.eval_bags_per_class.to_string(),
            self.long_tail_ratio.to_string(),
            self.instances_per_bag.to_string(),
            self.positives_per_bag.to_string(),
            self.mean_scale.to_string(),
            self.noise_std.to_string(),
            self.multi_label_prob.to_string(),
            self.head.clone(),
            self.knn_k.to_string(),
            self.levels.to_string(),
            self.attention_dim.to_string(),
            self.trunk_depth.to_string(),
            self.trunk_width.to_string(),
            self.gate.name().to_string(),
            self.topology.name().to_string(),
            self.dropout.to_string(),
            self.learning_rate.to_string(),
            self.batch_size.to_string(),
            self.iterations.to_string(),
            self.checkpoint_interval.to_string(),
            self.ensemble_size.to_string(),
            self.balancing.name().to_string(),
            self.loss_level.name().to_string(),
            self.gradcheck_step.to_string(),
            self.gradcheck_tolerance.to_string(),
        ];
        let mut out = String::new();
        for ((key, _, _), value) in KEYS.iter().zip(values) {
            writeln!(out, "{key} = {value}").unwrap();
        }
        out
    }
}

const HEAD_NAMES: [&str; 9] = [
    "segment",
    "is_max",
    "is_avg",
    "es_avg",
    "es_maxmin",
    "bs_knn",
    "decision_att",
    "decision_multi_att",
    "feature_att",
];

/// Key reference appended to every command's `--help`.
pub fn keys_help() -> String {
    let width = KEYS.iter().map(|k| k.0.len()).max().unwrap_or(0);
    let mut out = String::from("Config keys (key = default):\n");
    for (key, default, doc) in KEYS {
        let default = if default.is_empty() { "\"\"" } else { default };
        writeln!(out, "  {key:<width$} = {default:<18} {doc}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        assert_eq!(c.to_text().lines().count(), KEYS.len());
    }

    #[test]
    fn every_key_is_settable() {
        let mut c = RunConfig::default();
        for (key, default, _) in KEYS {
            c.set(key, default).unwrap();
        }
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn comments_blank_lines_and_spacing() {
        let c = RunConfig::parse("# run\n\nseed=7 # inline\n  head =  es_avg\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.head(), Head::EsAvg);
    }

    #[test]
    fn rejects_bad_lines() {
        for text in [
            "bogus = 1",
            "seed",
            "seed = x",
            "seed = 1\nseed = 2",
            "gate = tanh",
            "head = rnn",
            "balancing = sometimes",
        ] {
            assert!(
                matches!(RunConfig::parse(text), Err(CliError::Usage(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn feature_dim_defaults_to_width() {
        let c = RunConfig::parse("trunk_width = 16").unwrap();
        assert_eq!(c.head(), Head::FeatureAtt { dim: 16 });
        let c = RunConfig::parse("trunk_width = 16\nattention_dim = 8").unwrap();
        assert_eq!(c.head(), Head::FeatureAtt { dim: 8 });
    }

    #[test]
    fn long_tail_counts_applied_to_training_split() {
        let c = RunConfig::parse("classes = 3\ntrain_bags_per_class = 100\nlong_tail_ratio = 100")
            .unwrap();
        assert_eq!(c.train_synth().unwrap().counts(), vec![100, 10, 1]);
        assert_eq!(c.eval_synth().counts(), vec![100; 3]);
    }

    #[test]
    fn help_lists_every_key() {
        let help = keys_help();
        for (key, _, _) in KEYS {
            assert!(help.contains(key));
        }
    }
}
