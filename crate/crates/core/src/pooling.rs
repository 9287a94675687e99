//! Bag-level aggregation: instance-space pooling, embedded-space mappings,
//! the Hausdorff bag distance, and attention normalisation with its gate
//! functions.
//!
//! Every sum over instances is taken in canonical (ascending value) order,
//! so pooled outputs are bit-identical under any permutation of a bag.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    activation, canonical_sum, seg_mean_values, seg_normalize_values, seg_weighted_sum_values,
    Activation, Axis, Matrix, Segments, Tape, Var,
};

/// Non-negative function applied to attention pre-activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    Relu,
    Exp,
    Sigmoid,
    /// Softmax across the components of each instance's vector.
    Softmax,
    /// Two-layer network-in-network gate `σ(H₂ ReLU(H₁ z + d₁) + d₂)`.
    Nin,
}

impl GateKind {
    pub const ALL: [GateKind; 5] = [
        GateKind::Relu,
        GateKind::Exp,
        GateKind::Sigmoid,
        GateKind::Softmax,
        GateKind::Nin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GateKind::Relu => "relu",
            GateKind::Exp => "exp",
            GateKind::Sigmoid => "sigmoid",
            GateKind::Softmax => "softmax",
            GateKind::Nin => "nin",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        GateKind::ALL.into_iter().find(|g| g.name() == s)
    }
}

/// Parameters of the network-in-network gate, stored for row-vector inputs:
/// `φ(z) = σ(ReLU(z H₁ + d₁) H₂ + d₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NinParams {
    pub h1: Matrix,
    pub d1: Matrix,
    pub h2: Matrix,
    pub d2: Matrix,
}

impl NinParams {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let hidden = self.h1.cols();
        let ok = self.h1.rows() == dim
            && self.d1.shape() == (1, hidden)
            && self.h2.shape() == (hidden, dim)
            && self.d2.shape() == (1, dim);
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "NIN gate parameters do not map {dim} components back to {dim}"
            )))
        }
    }
}

/// A gate together with whatever parameters it needs.
#[derive(Debug, Clone, Copy)]
pub enum Gate<'a> {
    Relu,
    Exp,
    Sigmoid,
    Softmax,
    Nin(&'a NinParams),
}

impl Gate<'_> {
    pub fn kind(&self) -> GateKind {
        match self {
            Gate::Relu => GateKind::Relu,
            Gate::Exp => GateKind::Exp,
            Gate::Sigmoid => GateKind::Sigmoid,
            Gate::Softmax => GateKind::Softmax,
            Gate::Nin(_) => GateKind::Nin,
        }
    }

    /// Applies the gate to every row of `z`.
    pub fn apply(&self, z: &Matrix) -> Result<Matrix> {
        Ok(match self {
            Gate::Relu => activation(Activation::Relu, z),
            Gate::Exp => activation(Activation::Exp, z),
            Gate::Sigmoid => activation(Activation::Sigmoid, z),
            Gate::Softmax => activation(Activation::Softmax(Axis::Row), z),
            Gate::Nin(p) => {
                p.validate(z.cols())?;
                let hidden = add_row(&z.matmul(&p.h1)?, &p.d1);
                let hidden = activation(Activation::Relu, &hidden);
                let out = add_row(&hidden.matmul(&p.h2)?, &p.d2);
                activation(Activation::Sigmoid, &out)
            }
        })
    }
}

fn add_row(m: &Matrix, row: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        for (o, b) in out.row_mut(r).iter_mut().zip(row.data()) {
            *o += b;
        }
    }
    out
}

fn one_segment(m: &Matrix) -> Result<Segments> {
    if m.rows() == 0 {
        return Err(Error::EmptyBag("bag has no instances".into()));
    }
    Segments::from_lengths([m.rows()])
}

fn column_extreme(m: &Matrix, pick: fn(f64, f64) -> f64) -> Result<Vec<f64>> {
    one_segment(m)?;
    Ok((0..m.cols())
        .map(|c| (1..m.rows()).fold(m.get(0, c), |acc, r| pick(acc, m.get(r, c))))
        .collect())
}

/// Per-class maximum of instance predictions (standard MI assumption).
pub fn pool_smi_max(instance_preds: &Matrix) -> Result<Vec<f64>> {
    column_extreme(instance_preds, f64::max)
}

/// Per-class mean of instance predictions (collective assumption).
pub fn pool_ca_average(instance_preds: &Matrix) -> Result<Vec<f64>> {
    let segs = one_segment(instance_preds)?;
    Ok(seg_mean_values(instance_preds, &segs).into_data())
}

/// Mean instance of a bag.
pub fn embed_average(instances: &Matrix) -> Result<Vec<f64>> {
    pool_ca_average(instances)
}

/// Per-feature maximum over instances.
pub fn embed_max(instances: &Matrix) -> Result<Vec<f64>> {
    column_extreme(instances, f64::max)
}

/// Per-feature minimum over instances.
pub fn embed_min(instances: &Matrix) -> Result<Vec<f64>> {
    column_extreme(instances, f64::min)
}

/// `(max_1..max_M, min_1..min_M)` over the instances of a bag.
pub fn embed_maxmin(instances: &Matrix) -> Result<Vec<f64>> {
    let mut h = embed_max(instances)?;
    h.extend(embed_min(instances)?);
    Ok(h)
}

/// Minimum Euclidean distance over all cross pairs of instances.
pub fn bag_hausdorff(b1: &Matrix, b2: &Matrix) -> Result<f64> {
    one_segment(b1)?;
    one_segment(b2)?;
    if b1.cols() != b2.cols() {
        return Err(Error::Shape(format!(
            "bags of dimension {} and {}",
            b1.cols(),
            b2.cols()
        )));
    }
    let mut best = f64::INFINITY;
    for i in 0..b1.rows() {
        for j in 0..b2.rows() {
            let d2: f64 = b1
                .row(i)
                .iter()
                .zip(b2.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            best = best.min(d2);
        }
    }
    Ok(best.sqrt())
}

/// Gates each row of `values`, then normalises every column over the
/// instances so it sums to one.
pub fn attention_normalize(values: &Matrix, gate: &Gate<'_>) -> Result<Matrix> {
    let segs = one_segment(values)?;
    let gated = gate.apply(values)?;
    Ok(seg_normalize_values(&gated, &segs))
}

/// Column-wise attention sum `h_j = Σ_t w_tj v_tj`.
pub fn attend(weights: &Matrix, values: &Matrix) -> Result<Vec<f64>> {
    values.expect_same_shape(weights, "attend")?;
    let segs = one_segment(values)?;
    Ok(seg_weighted_sum_values(weights, values, &segs).into_data())
}

/// Sum in canonical order; exposed for callers that pool by hand.
pub fn pooled_sum(values: &[f64]) -> f64 {
    canonical_sum(&mut values.to_vec())
}

/// Tape handles for NIN gate parameters.
#[derive(Debug, Clone, Copy)]
pub struct NinVars {
    pub h1: Var,
    pub d1: Var,
    pub h2: Var,
    pub d2: Var,
}

/// Records the gate on a tape.
pub fn gate_on_tape(tape: &mut Tape, kind: GateKind, z: Var, nin: Option<NinVars>) -> Result<Var> {
    Ok(match kind {
        GateKind::Relu => tape.relu(z),
        GateKind::Exp => tape.exp(z),
        GateKind::Sigmoid => tape.sigmoid(z),
        GateKind::Softmax => tape.softmax_rows(z),
        GateKind::Nin => {
            let p = nin.ok_or_else(|| Error::Config("NIN gate without parameters".into()))?;
            let hidden = tape.affine(z, p.h1, p.d1)?;
            let hidden = tape.relu(hidden);
            let out = tape.affine(hidden, p.h2, p.d2)?;
            tape.sigmoid(out)
        }
    })
}

/// Gated, per-bag normalised attention weights for stacked instances.
pub fn attention_on_tape(
    tape: &mut Tape,
    kind: GateKind,
    z: Var,
    nin: Option<NinVars>,
    segs: &Rc<Segments>,
) -> Result<Var> {
    let gated = gate_on_tape(tape, kind, z, nin)?;
    tape.seg_normalize(gated, segs)
}
