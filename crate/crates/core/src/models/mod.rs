//! Trunks, heads, and the model zoo built from them.
//!
//! A model maps a bag (`T x M` instances) to `K` class probabilities. Every
//! trainable model records its forward pass on a [`Tape`]; inference runs
//! the same recording and reads the values, so training and prediction
//! cannot drift apart.

mod io;
mod knn;

use std::collections::HashMap;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::data::{Bag, BagDataset};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng, Segments, Tape, Var};
use crate::pooling::{attention_on_tape, embed_average, embed_maxmin, GateKind, NinVars};

pub use io::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use knn::knn_predict;

/// Largest supported trunk depth.
pub const MAX_DEPTH: usize = 10;

/// Bags per tape when predicting many bags at once.
const PREDICT_CHUNK: usize = 256;

/// How a bag-level prediction is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Head {
    /// Instances inherit bag tags in training; predictions are averaged.
    Segment,
    /// Instance-space, max over instance predictions.
    IsMax,
    /// Instance-space, mean of instance predictions.
    IsAvg,
    /// Embedded-space, classify the mean instance.
    EsAvg,
    /// Embedded-space, classify the concatenated column max and min.
    EsMaxmin,
    /// Bag-space nearest neighbours under the Hausdorff distance.
    BsKnn { k: usize },
    /// Decision-level attention over per-instance class predictions.
    DecisionAtt,
    /// Decision-level attention after each of the last `levels` blocks.
    DecisionMultiAtt { levels: usize },
    /// Feature-level attention over a `dim`-wide instance embedding.
    FeatureAtt { dim: usize },
}

impl Head {
    pub fn name(&self) -> &'static str {
        match self {
            Head::Segment => "segment",
            Head::IsMax => "is_max",
            Head::IsAvg => "is_avg",
            Head::EsAvg => "es_avg",
            Head::EsMaxmin => "es_maxmin",
            Head::BsKnn { .. } => "bs_knn",
            Head::DecisionAtt => "decision_att",
            Head::DecisionMultiAtt { .. } => "decision_multi_att",
            Head::FeatureAtt { .. } => "feature_att",
        }
    }

    pub fn has_attention(&self) -> bool {
        matches!(
            self,
            Head::DecisionAtt | Head::DecisionMultiAtt { .. } | Head::FeatureAtt { .. }
        )
    }

    pub fn is_trainable(&self) -> bool {
        !matches!(self, Head::BsKnn { .. })
    }

    /// Heads whose training loss is applied to each instance by default.
    pub fn is_instance_level(&self) -> bool {
        matches!(self, Head::Segment)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// Classifier and attention read the same trunk.
    SharedTrunk,
    /// Classifier and attention each get their own trunk of equal depth.
    SeparateBranch,
}

impl Topology {
    pub const ALL: [Topology; 2] = [Topology::SharedTrunk, Topology::SeparateBranch];

    pub fn name(self) -> &'static str {
        match self {
            Topology::SharedTrunk => "shared_trunk",
            Topology::SeparateBranch => "separate_branch",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub classes: usize,
    pub trunk_depth: usize,
    pub trunk_width: usize,
    pub head: Head,
    pub gate: GateKind,
    pub topology: Topology,
    /// Inverted-dropout drop probability after each trunk block, training only.
    pub dropout_rate: f64,
}

impl ModelSpec {
    /// A spec with the common defaults: width 64, depth 3, sigmoid gate,
    /// shared trunk, dropout 0.5.
    pub fn new(input_dim: usize, classes: usize, head: Head) -> Self {
        ModelSpec {
            input_dim,
            classes,
            trunk_depth: 3,
            trunk_width: 64,
            head,
            gate: GateKind::Sigmoid,
            topology: Topology::SharedTrunk,
            dropout_rate: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.input_dim == 0 || self.classes == 0 {
            return fail("input_dim and classes must be positive".into());
        }
        if self.trunk_depth > MAX_DEPTH {
            return fail(format!(
                "trunk_depth {} exceeds {MAX_DEPTH}",
                self.trunk_depth
            ));
        }
        if self.trunk_depth > 0 && self.trunk_width == 0 {
            return fail("trunk_width must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        match self.head {
            Head::BsKnn { k: 0 } => fail("bs_knn needs k >= 1".into()),
            Head::FeatureAtt { dim: 0 } => {
                fail("feature_att needs an attention dimension >= 1".into())
            }
            Head::DecisionMultiAtt { levels } if levels == 0 || levels > self.trunk_depth => {
                fail(format!(
                    "decision_multi_att with {levels} levels needs 1 <= levels <= trunk_depth ({})",
                    self.trunk_depth
                ))
            }
            _ => Ok(()),
        }
    }

    /// Width of the vectors entering the trunk.
    pub fn trunk_input_dim(&self) -> usize {
        match self.head {
            Head::EsMaxmin => 2 * self.input_dim,
            _ => self.input_dim,
        }
    }

    /// Width of the trunk output.
    pub fn embed_dim(&self) -> usize {
        if self.trunk_depth == 0 {
            self.trunk_input_dim()
        } else {
            self.trunk_width
        }
    }

    fn separate_attention_trunk(&self) -> bool {
        self.head.has_attention() && self.topology == Topology::SeparateBranch
    }

    /// Names and shapes of all parameters in declaration order.
    pub fn parameter_layout(&self) -> Vec<(String, usize, usize)> {
        layout(self)
            .into_iter()
            .map(|d| (d.name, d.rows, d.cols))
            .collect()
    }
}

#[derive(Debug, Clone)]
struct ParamDef {
    name: String,
    rows: usize,
    cols: usize,
    bias: bool,
}

fn layout(spec: &ModelSpec) -> Vec<ParamDef> {
    let mut defs = Vec::new();
    let weight = |defs: &mut Vec<ParamDef>, name: String, rows, cols| {
        defs.push(ParamDef {
            name,
            rows,
            cols,
            bias: false,
        })
    };
    let bias = |defs: &mut Vec<ParamDef>, name: String, cols| {
        defs.push(ParamDef {
            name,
            rows: 1,
            cols,
            bias: true,
        })
    };
    let trunks: &[&str] = if matches!(spec.head, Head::BsKnn { .. }) {
        &[]
    } else if spec.separate_attention_trunk() {
        &["trunk", "att_trunk"]
    } else {
        &["trunk"]
    };
    for prefix in trunks {
        let mut fan_in = spec.trunk_input_dim();
        for i in 0..spec.trunk_depth {
            weight(
                &mut defs,
                format!("{prefix}.{i}.w"),
                fan_in,
                spec.trunk_width,
            );
            bias(&mut defs, format!("{prefix}.{i}.b"), spec.trunk_width);
            fan_in = spec.trunk_width;
        }
    }
    let d = spec.embed_dim();
    let k = spec.classes;
    let nin = spec.gate == GateKind::Nin;
    let decision = |defs: &mut Vec<ParamDef>, p: &str| {
        weight(defs, format!("{p}w1"), d, k);
        bias(defs, format!("{p}b1"), k);
        weight(defs, format!("{p}u1"), d, k);
        bias(defs, format!("{p}c1"), k);
        if nin {
            nin_layout(defs, p, k);
        }
    };
    match spec.head {
        Head::Segment | Head::IsMax | Head::IsAvg | Head::EsAvg | Head::EsMaxmin => {
            weight(&mut defs, "cls.w".into(), d, k);
            bias(&mut defs, "cls.b".into(), k);
        }
        Head::BsKnn { .. } => {}
        Head::DecisionAtt => decision(&mut defs, ""),
        Head::DecisionMultiAtt { levels } => {
            for l in 0..levels {
                decision(&mut defs, &format!("level{l}."));
            }
            weight(&mut defs, "combiner.w".into(), levels * k, k);
            bias(&mut defs, "combiner.b".into(), k);
        }
        Head::FeatureAtt { dim: j } => {
            weight(&mut defs, "w2".into(), d, j);
            bias(&mut defs, "b2".into(), j);
            weight(&mut defs, "u2".into(), d, j);
            bias(&mut defs, "c2".into(), j);
            if nin {
                nin_layout(&mut defs, "", j);
            }
            weight(&mut defs, "out.w".into(), j, k);
            bias(&mut defs, "out.b".into(), k);
        }
    }
    defs
}

fn nin_layout(defs: &mut Vec<ParamDef>, prefix: &str, n: usize) {
    for (name, rows, bias) in [
        ("h1", n, false),
        ("d1", 1, true),
        ("h2", n, false),
        ("d2", 1, true),
    ] {
        defs.push(ParamDef {
            name: format!("{prefix}nin.{name}"),
            rows,
            cols: n,
            bias,
        });
    }
}

/// Anything that maps bags to `K` class probabilities.
pub trait BagPredictor {
    fn classes(&self) -> usize;

    /// One row of probabilities per bag.
    fn predict(&self, bags: &[&Matrix]) -> Result<Matrix>;

    fn predict_dataset(&self, dataset: &BagDataset) -> Result<Matrix> {
        let bags: Vec<&Matrix> = dataset.bags().iter().map(|b| &b.instances).collect();
        self.predict(&bags)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    names: Vec<String>,
    index: HashMap<String, usize>,
    params: Vec<Matrix>,
    /// Memorised training bags of a `bs_knn` model.
    reference: Option<Vec<Bag>>,
}

/// Tape handles produced by one recorded forward pass.
#[derive(Debug, Clone)]
pub struct Recorded {
    /// `N x K` bag probabilities.
    pub bags: Var,
    /// Stacked `ΣT x K` instance probabilities, for instance-space heads.
    pub instances: Option<Var>,
    /// Row ranges of each bag in the stacked instance matrix.
    pub segments: Rc<Segments>,
}

/// Inverted dropout driven by an optional RNG (absent at inference).
struct Dropout<'a> {
    rate: f64,
    rng: Option<&'a mut Rng>,
}

impl Dropout<'_> {
    fn apply(&mut self, tape: &mut Tape, v: Var) -> Result<Var> {
        let Some(rng) = self.rng.as_deref_mut() else {
            return Ok(v);
        };
        if self.rate == 0.0 {
            return Ok(v);
        }
        let keep = 1.0 - self.rate;
        let (r, c) = tape.value(v).shape();
        let mask = (0..r * c)
            .map(|_| {
                if rng.uniform() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        tape.mask(v, Matrix::from_vec(r, c, mask)?)
    }
}

impl Model {
    /// Builds a model with Glorot-uniform weights and zero biases.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = Rng::new(seed);
        let params = layout(&spec)
            .iter()
            .map(|d| {
                if d.bias {
                    Matrix::zeros(d.rows, d.cols)
                } else {
                    let limit = (6.0 / (d.rows + d.cols) as f64).sqrt();
                    let data = (0..d.rows * d.cols)
                        .map(|_| rng.uniform_range(-limit, limit))
                        .collect();
                    Matrix::from_vec(d.rows, d.cols, data).expect("layout sizes agree")
                }
            })
            .collect();
        Self::from_parts(spec, params)
    }

    /// Assembles a model from parameters given in declaration order.
    pub fn from_parts(spec: ModelSpec, params: Vec<Matrix>) -> Result<Self> {
        spec.validate()?;
        let defs = layout(&spec);
        if defs.len() != params.len() {
            return Err(Error::Shape(format!(
                "{} parameters supplied, spec declares {}",
                params.len(),
                defs.len()
            )));
        }
        for (d, p) in defs.iter().zip(&params) {
            if p.shape() != (d.rows, d.cols) {
                return Err(Error::Shape(format!(
                    "parameter {} is {:?}, expected {:?}",
                    d.name,
                    p.shape(),
                    (d.rows, d.cols)
                )));
            }
            if !p.is_finite() {
                return Err(Error::Domain(format!("parameter {} is not finite", d.name)));
            }
        }
        let names: Vec<String> = defs.into_iter().map(|d| d.name).collect();
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Ok(Model {
            spec,
            names,
            index,
            params,
            reference: None,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Matrix] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn param(&self, name: &str) -> Option<&Matrix> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn set_param(&mut self, name: &str, value: Matrix) -> Result<()> {
        let &i = self
            .index
            .get(name)
            .ok_or_else(|| Error::Config(format!("model has no parameter {name:?}")))?;
        if value.shape() != self.params[i].shape() {
            return Err(Error::Shape(format!(
                "parameter {name} is {:?}, got {:?}",
                self.params[i].shape(),
                value.shape()
            )));
        }
        self.params[i] = value;
        Ok(())
    }

    /// Number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.data().len()).sum()
    }

    pub fn reference(&self) -> Option<&[Bag]> {
        self.reference.as_deref()
    }

    /// Memorises the training bags of a `bs_knn` model.
    pub fn set_reference(&mut self, dataset: &BagDataset) -> Result<()> {
        let Head::BsKnn { k } = self.spec.head else {
            return Err(Error::Config(format!(
                "{} models keep no reference bags",
                self.spec.head.name()
            )));
        };
        if dataset.len() < k {
            return Err(Error::Config(format!(
                "bs_knn with k = {k} needs at least {k} reference bags, got {}",
                dataset.len()
            )));
        }
        if dataset.dim() != self.spec.input_dim || dataset.class_count() != self.spec.classes {
            return Err(Error::Shape(
                "reference set does not match the model spec".into(),
            ));
        }
        self.reference = Some(dataset.bags().to_vec());
        Ok(())
    }

    fn check_bags(&self, bags: &[&Matrix]) -> Result<()> {
        for (i, b) in bags.iter().enumerate() {
            if b.rows() == 0 {
                return Err(Error::EmptyBag(format!("bag {i} has no instances")));
            }
            if b.cols() != self.spec.input_dim {
                return Err(Error::Shape(format!(
                    "bag {i} has dimension {}, model expects {}",
                    b.cols(),
                    self.spec.input_dim
                )));
            }
        }
        Ok(())
    }

    /// Records the forward pass of `bags` on `tape`.
    ///
    /// Parameters are registered in declaration order, so gradient `i` of
    /// the tape belongs to `params()[i]`. Dropout is applied only when an
    /// RNG is supplied.
    pub fn record(
        &self,
        tape: &mut Tape,
        bags: &[&Matrix],
        rng: Option<&mut Rng>,
    ) -> Result<Recorded> {
        if !self.spec.head.is_trainable() {
            return Err(Error::Contract(
                "bs_knn has no differentiable forward pass".into(),
            ));
        }
        if bags.is_empty() {
            return Err(Error::Contract("forward pass over zero bags".into()));
        }
        self.check_bags(bags)?;
        let vars: Vec<Var> = self.params.iter().map(|p| tape.param(p.clone())).collect();
        let p = |name: &str| vars[self.index[name]];
        let mut dropout = Dropout {
            rate: self.spec.dropout_rate,
            rng,
        };
        let segments = Rc::new(Segments::from_lengths(bags.iter().map(|b| b.rows()))?);
        let spec = &self.spec;

        if matches!(spec.head, Head::EsAvg | Head::EsMaxmin) {
            let pooled = bags
                .iter()
                .map(|b| match spec.head {
                    Head::EsAvg => embed_average(b),
                    _ => embed_maxmin(b),
                })
                .collect::<Result<Vec<_>>>()?;
            let x = tape.constant(Matrix::from_rows(&pooled)?);
            let blocks = self.trunk(tape, &p, "trunk", x, &mut dropout)?;
            let emb = blocks.last().copied().unwrap_or(x);
            let z = tape.affine(emb, p("cls.w"), p("cls.b"))?;
            let out = tape.sigmoid(z);
            return Ok(Recorded {
                bags: out,
                instances: None,
                segments,
            });
        }

        let stacked = Matrix::vstack(bags)?;
        let x = tape.constant(stacked);
        let cls_blocks = self.trunk(tape, &p, "trunk", x, &mut dropout)?;
        let att_blocks = if spec.separate_attention_trunk() {
            self.trunk(tape, &p, "att_trunk", x, &mut dropout)?
        } else {
            cls_blocks.clone()
        };
        let cls = cls_blocks.last().copied().unwrap_or(x);
        let att = att_blocks.last().copied().unwrap_or(x);

        let (bag_out, instances) = match spec.head {
            Head::Segment | Head::IsMax | Head::IsAvg => {
                let z = tape.affine(cls, p("cls.w"), p("cls.b"))?;
                let f = tape.sigmoid(z);
                let pooled = if spec.head == Head::IsMax {
                    tape.seg_max(f, &segments)?
                } else {
                    tape.seg_mean(f, &segments)?
                };
                (pooled, Some(f))
            }
            Head::DecisionAtt => (
                self.decision_level(tape, &p, "", cls, att, &segments)?,
                None,
            ),
            Head::DecisionMultiAtt { levels } => {
                let first = spec.trunk_depth - levels;
                let mut outs = Vec::with_capacity(levels);
                for l in 0..levels {
                    let prefix = format!("level{l}.");
                    let c = cls_blocks[first + l];
                    let a = att_blocks[first + l];
                    outs.push(self.decision_level(tape, &p, &prefix, c, a, &segments)?);
                }
                let cat = tape.concat_cols(&outs)?;
                let z = tape.affine(cat, p("combiner.w"), p("combiner.b"))?;
                (tape.sigmoid(z), None)
            }
            Head::FeatureAtt { .. } => {
                let u = tape.affine(cls, p("w2"), p("b2"))?;
                let u = tape.relu(u);
                let z = tape.affine(att, p("u2"), p("c2"))?;
                let q = attention_on_tape(tape, spec.gate, z, self.nin_vars(&p, ""), &segments)?;
                let h = tape.seg_weighted_sum(q, u, &segments)?;
                let z = tape.affine(h, p("out.w"), p("out.b"))?;
                (tape.sigmoid(z), None)
            }
            Head::EsAvg | Head::EsMaxmin | Head::BsKnn { .. } => unreachable!("handled above"),
        };
        Ok(Recorded {
            bags: bag_out,
            instances,
            segments,
        })
    }

    /// Outputs of every trunk block, in order.
    fn trunk(
        &self,
        tape: &mut Tape,
        p: &dyn Fn(&str) -> Var,
        prefix: &str,
        x: Var,
        dropout: &mut Dropout<'_>,
    ) -> Result<Vec<Var>> {
        let mut blocks = Vec::with_capacity(self.spec.trunk_depth);
        let mut h = x;
        for i in 0..self.spec.trunk_depth {
            let z = tape.affine(
                h,
                p(&format!("{prefix}.{i}.w")),
                p(&format!("{prefix}.{i}.b")),
            )?;
            let a = tape.relu(z);
            h = dropout.apply(tape, a)?;
            blocks.push(h);
        }
        Ok(blocks)
    }

    fn nin_vars(&self, p: &dyn Fn(&str) -> Var, prefix: &str) -> Option<NinVars> {
        (self.spec.gate == GateKind::Nin).then(|| NinVars {
            h1: p(&format!("{prefix}nin.h1")),
            d1: p(&format!("{prefix}nin.d1")),
            h2: p(&format!("{prefix}nin.h2")),
            d2: p(&format!("{prefix}nin.d2")),
        })
    }

    fn decision_level(
        &self,
        tape: &mut Tape,
        p: &dyn Fn(&str) -> Var,
        prefix: &str,
        cls: Var,
        att: Var,
        segments: &Rc<Segments>,
    ) -> Result<Var> {
        let z = tape.affine(cls, p(&format!("{prefix}w1")), p(&format!("{prefix}b1")))?;
        let f = tape.sigmoid(z);
        let v = tape.affine(att, p(&format!("{prefix}u1")), p(&format!("{prefix}c1")))?;
        let q = attention_on_tape(tape, self.spec.gate, v, self.nin_vars(p, prefix), segments)?;
        tape.seg_weighted_sum(q, f, segments)
    }

    /// Bag probabilities of a single bag.
    pub fn forward(&self, bag: &Matrix) -> Result<Vec<f64>> {
        Ok(self.predict(&[bag])?.row(0).to_vec())
    }

    /// Per-instance class probabilities of an instance-space or segment head.
    pub fn instance_predictions(&self, bag: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let rec = self.record(&mut tape, &[bag], None)?;
        let v = rec.instances.ok_or_else(|| {
            Error::Config(format!(
                "{} has no instance-level predictions",
                self.spec.head.name()
            ))
        })?;
        Ok(tape.value(v).clone())
    }
}

impl BagPredictor for Model {
    fn classes(&self) -> usize {
        self.spec.classes
    }

    fn predict(&self, bags: &[&Matrix]) -> Result<Matrix> {
        self.check_bags(bags)?;
        if let Head::BsKnn { k } = self.spec.head {
            let reference = self
                .reference
                .as_deref()
                .ok_or_else(|| Error::Config("bs_knn model has no reference bags".into()))?;
            let rows = bags
                .iter()
                .map(|b| knn_predict(reference, b, k))
                .collect::<Result<Vec<_>>>()?;
            return stack_rows(rows, self.spec.classes);
        }
        let mut rows = Vec::with_capacity(bags.len());
        for chunk in bags.chunks(PREDICT_CHUNK) {
            let mut tape = Tape::new();
            let rec = self.record(&mut tape, chunk, None)?;
            let out = tape.value(rec.bags);
            rows.extend((0..out.rows()).map(|r| out.row(r).to_vec()));
        }
        stack_rows(rows, self.spec.classes)
    }
}

fn stack_rows(rows: Vec<Vec<f64>>, cols: usize) -> Result<Matrix> {
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, cols));
    }
    Matrix::from_rows(&rows)
}

/// Embedded instances after the classifier trunk. Dropout is applied only
/// when an RNG is supplied.
pub fn trunk_forward(model: &Model, instances: &Matrix, rng: Option<&mut Rng>) -> Result<Matrix> {
    let spec = &model.spec;
    if instances.cols() != spec.trunk_input_dim() {
        return Err(Error::Shape(format!(
            "trunk expects {} columns, got {}",
            spec.trunk_input_dim(),
            instances.cols()
        )));
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = model.params.iter().map(|p| tape.param(p.clone())).collect();
    let p = |name: &str| vars[model.index[name]];
    let x = tape.constant(instances.clone());
    let mut dropout = Dropout {
        rate: spec.dropout_rate,
        rng,
    };
    let blocks = model.trunk(&mut tape, &p, "trunk", x, &mut dropout)?;
    Ok(tape.value(blocks.last().copied().unwrap_or(x)).clone())
}

fn expect_head(model: &Model, ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{what} called on a {} model",
            model.spec.head.name()
        )))
    }
}

pub fn forward_decision_att(model: &Model, bag: &Matrix) -> Result<Vec<f64>> {
    expect_head(
        model,
        model.spec.head == Head::DecisionAtt,
        "forward_decision_att",
    )?;
    model.forward(bag)
}

pub fn forward_decision_multi_att(model: &Model, bag: &Matrix) -> Result<Vec<f64>> {
    let ok = matches!(model.spec.head, Head::DecisionMultiAtt { .. });
    expect_head(model, ok, "forward_decision_multi_att")?;
    model.forward(bag)
}

pub fn forward_feature_att(model: &Model, bag: &Matrix) -> Result<Vec<f64>> {
    let ok = matches!(model.spec.head, Head::FeatureAtt { .. });
    expect_head(model, ok, "forward_feature_att")?;
    model.forward(bag)
}

/// Forward pass of the segment, instance-space, and embedded-space heads.
pub fn forward_baseline(model: &Model, bag: &Matrix) -> Result<Vec<f64>> {
    let ok = matches!(
        model.spec.head,
        Head::Segment | Head::IsMax | Head::IsAvg | Head::EsAvg | Head::EsMaxmin
    );
    expect_head(model, ok, "forward_baseline")?;
    model.forward(bag)
}

#[cfg(test)]
mod tests;
