//! Reverse-mode differentiation over the small op set the bag models need.
//!
//! A [`Tape`] records every operation in execution order. Values are
//! computed eagerly; [`Tape::backward`] walks the records once in reverse
//! and returns the gradient of a scalar with respect to every registered
//! parameter.

use std::rc::Rc;

use super::matrix::{canonical_sum, clamped_exp, relu, sigmoid, softmax_into, Matrix, EXP_CLAMP};
use crate::error::{Error, Result};

/// Added to every attention value before normalisation.
pub const ATTENTION_EPS: f64 = 1e-8;

/// Predictions are clamped into `[BCE_CLAMP, 1 - BCE_CLAMP]` before logs.
pub const BCE_CLAMP: f64 = 1e-7;

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Row ranges of a stacked instance matrix, one per bag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segments {
    offsets: Vec<usize>,
}

impl Segments {
    pub fn from_lengths(lengths: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut offsets = vec![0];
        for (i, len) in lengths.into_iter().enumerate() {
            if len == 0 {
                return Err(Error::EmptyBag(format!("segment {i} has no rows")));
            }
            offsets.push(offsets.last().unwrap() + len);
        }
        Ok(Segments { offsets })
    }

    pub fn count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn total_rows(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn len(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.offsets.windows(2).map(|w| w[0]..w[1])
    }
}

/// Deliberate backward defects, used to prove the gradient checker can
/// detect a broken derivative.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Sigmoid backward uses `s` instead of `s (1 - s)`.
    SigmoidDerivative,
}

#[derive(Debug)]
enum Op {
    Constant,
    Param,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Mask(Var, Matrix),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    SoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    SegMean(Var, Rc<Segments>),
    SegArg(Var, Rc<Segments>, Vec<usize>),
    SegNormalize(Var, Rc<Segments>),
    SegWeightedSum(Var, Var, Rc<Segments>),
    Bce(Var, Matrix),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<Var>,
    fault: Option<Fault>,
}

/// Gradients of a scalar with respect to each registered parameter, in
/// registration order.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Matrix>,
}

impl Gradients {
    pub fn get(&self, param: usize) -> &Matrix {
        &self.grads[param]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Matrix> {
        self.grads.iter()
    }

    pub fn into_vec(self) -> Vec<Matrix> {
        self.grads
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    #[doc(hidden)]
    pub fn inject_fault(&mut self, fault: Fault) {
        self.fault = Some(fault);
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Records an input that receives no gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    /// Registers a parameter; its gradient is reported by [`Tape::backward`]
    /// at the position of this call among all `param` calls.
    pub fn param(&mut self, value: Matrix) -> Var {
        let v = self.push(value, Op::Param);
        self.params.push(v);
        v
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// Adds a `1 x n` row to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(Error::shape(format!(
                "bias {}x{} for input with {} columns",
                bv.rows(),
                bv.cols(),
                av.cols()
            )));
        }
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddBias(a, bias)))
    }

    /// `a * w + b`.
    pub fn affine(&mut self, a: Var, w: Var, b: Var) -> Result<Var> {
        let z = self.matmul(a, w)?;
        self.add_bias(z, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x * k);
        self.push(out, Op::Scale(a, k))
    }

    /// Elementwise product with a constant mask (dropout).
    pub fn mask(&mut self, a: Var, mask: Matrix) -> Result<Var> {
        let out = self.value(a).zip_map(&mask, |x, m| x * m)?;
        Ok(self.push(out, Op::Mask(a, mask)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(relu);
        self.push(out, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    /// Exponential with inputs clamped to `[-EXP_CLAMP, EXP_CLAMP]`.
    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(clamped_exp);
        self.push(out, Op::Exp(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut out = Matrix::zeros(av.rows(), av.cols());
        for r in 0..av.rows() {
            softmax_into(av.row(r), out.row_mut(r));
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|&p| self.value(p).rows())
            .ok_or_else(|| Error::shape("concat of nothing"))?;
        let mut cols = 0;
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(Error::shape("concat_cols with unequal row counts"));
            }
            cols += self.value(p).cols();
        }
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                out.row_mut(r)[c0..c0 + src.len()].copy_from_slice(src);
                c0 += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    fn check_segments(&self, a: Var, segs: &Segments) -> Result<()> {
        if self.value(a).rows() != segs.total_rows() {
            return Err(Error::shape(format!(
                "{} rows for segments covering {}",
                self.value(a).rows(),
                segs.total_rows()
            )));
        }
        Ok(())
    }

    /// Per-segment column means.
    pub fn seg_mean(&mut self, a: Var, segs: &Rc<Segments>) -> Result<Var> {
        self.check_segments(a, segs)?;
        let out = seg_mean_values(self.value(a), segs);
        Ok(self.push(out, Op::SegMean(a, Rc::clone(segs))))
    }

    /// Per-segment column maxima; ties resolve to the earliest row.
    pub fn seg_max(&mut self, a: Var, segs: &Rc<Segments>) -> Result<Var> {
        self.seg_extreme(a, segs, |cand, best| cand > best)
    }

    /// Per-segment column minima; ties resolve to the earliest row.
    pub fn seg_min(&mut self, a: Var, segs: &Rc<Segments>) -> Result<Var> {
        self.seg_extreme(a, segs, |cand, best| cand < best)
    }

    fn seg_extreme(
        &mut self,
        a: Var,
        segs: &Rc<Segments>,
        better: impl Fn(f64, f64) -> bool,
    ) -> Result<Var> {
        self.check_segments(a, segs)?;
        let av = self.value(a);
        let cols = av.cols();
        let mut out = Matrix::zeros(segs.count(), cols);
        let mut arg = Vec::with_capacity(segs.count() * cols);
        for (s, range) in segs.iter().enumerate() {
            for c in 0..cols {
                let mut best_row = range.start;
                for r in range.clone().skip(1) {
                    if better(av.get(r, c), av.get(best_row, c)) {
                        best_row = r;
                    }
                }
                out.set(s, c, av.get(best_row, c));
                arg.push(best_row);
            }
        }
        Ok(self.push(out, Op::SegArg(a, Rc::clone(segs), arg)))
    }

    /// Normalises each column within each segment so it sums to one:
    /// `(v + eps) / sum(v + eps)`.
    pub fn seg_normalize(&mut self, a: Var, segs: &Rc<Segments>) -> Result<Var> {
        self.check_segments(a, segs)?;
        let out = seg_normalize_values(self.value(a), segs);
        Ok(self.push(out, Op::SegNormalize(a, Rc::clone(segs))))
    }

    /// Per-segment column sums of `w ⊙ v`.
    pub fn seg_weighted_sum(&mut self, w: Var, v: Var, segs: &Rc<Segments>) -> Result<Var> {
        self.check_segments(w, segs)?;
        self.value(w)
            .expect_same_shape(self.value(v), "seg_weighted_sum")?;
        let out = seg_weighted_sum_values(self.value(w), self.value(v), segs);
        Ok(self.push(out, Op::SegWeightedSum(w, v, Rc::clone(segs))))
    }

    /// Row-wise binary cross-entropy summed over columns; `rows x 1`.
    pub fn bce(&mut self, pred: Var, target: &Matrix) -> Result<Var> {
        let pv = self.value(pred);
        pv.expect_same_shape(target, "bce")?;
        let mut out = Matrix::zeros(pv.rows(), 1);
        for r in 0..pv.rows() {
            out.set(r, 0, bce_row(pv.row(r), target.row(r)));
        }
        Ok(self.push(out, Op::Bce(pred, target.clone())))
    }

    /// Mean of every entry; `1 x 1`.
    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let n = av.data().len().max(1) as f64;
        let out = Matrix::filled(1, 1, av.data().iter().sum::<f64>() / n);
        self.push(out, Op::Mean(a))
    }

    /// Gradients of the scalar `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            let (r, c) = self.value(loss).shape();
            return Err(Error::Contract(format!(
                "backward needs a 1x1 loss, got {r}x{c}"
            )));
        }
        let mut grads: Vec<Option<Matrix>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param => {
                    grads[i] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b))?;
                    let gb = self.value(*a).t_matmul(&g)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddBias(a, b) => {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, *b, gb);
                    accumulate(&mut grads, *a, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |x, y| x * y)?;
                    let gb = g.zip_map(self.value(*a), |x, y| x * y)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, k) => accumulate(&mut grads, *a, g.map(|x| x * k)),
                Op::Mask(a, m) => {
                    let ga = g.zip_map(m, |x, y| x * y)?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(self.value(*a), |x, z| if z > 0.0 { x } else { 0.0 })?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let faulty = self.fault == Some(Fault::SigmoidDerivative);
                    let ga =
                        g.zip_map(
                            &node.value,
                            |x, s| {
                                if faulty {
                                    x * s
                                } else {
                                    x * s * (1.0 - s)
                                }
                            },
                        )?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let z = self.value(*a);
                    let mut ga = g.zip_map(&node.value, |x, e| x * e)?;
                    for (o, &zv) in ga.data_mut().iter_mut().zip(z.data()) {
                        if zv.abs() > EXP_CLAMP {
                            *o = 0.0;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let s = &node.value;
                    let mut ga = Matrix::zeros(s.rows(), s.cols());
                    for r in 0..s.rows() {
                        let dot: f64 = g.row(r).iter().zip(s.row(r)).map(|(x, y)| x * y).sum();
                        for ((o, &gv), &sv) in ga.row_mut(r).iter_mut().zip(g.row(r)).zip(s.row(r))
                        {
                            *o = sv * (gv - dot);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut c0 = 0;
                    for &p in parts {
                        let pc = self.value(p).cols();
                        let mut gp = Matrix::zeros(g.rows(), pc);
                        for r in 0..g.rows() {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[c0..c0 + pc]);
                        }
                        c0 += pc;
                        accumulate(&mut grads, p, gp);
                    }
                }
                Op::SegMean(a, segs) => {
                    let av = self.value(*a);
                    let mut ga = Matrix::zeros(av.rows(), av.cols());
                    for (s, range) in segs.iter().enumerate() {
                        let inv = 1.0 / range.len() as f64;
                        for r in range {
                            for (o, &gv) in ga.row_mut(r).iter_mut().zip(g.row(s)) {
                                *o = gv * inv;
                            }
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SegArg(a, segs, arg) => {
                    let av = self.value(*a);
                    let cols = av.cols();
                    let mut ga = Matrix::zeros(av.rows(), cols);
                    for s in 0..segs.count() {
                        for c in 0..cols {
                            let r = arg[s * cols + c];
                            ga.set(r, c, ga.get(r, c) + g.get(s, c));
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SegNormalize(a, segs) => {
                    let av = self.value(*a);
                    let out = &node.value;
                    let cols = av.cols();
                    let mut ga = Matrix::zeros(av.rows(), cols);
                    for range in segs.iter() {
                        for c in 0..cols {
                            let denom: f64 =
                                range.clone().map(|r| av.get(r, c) + ATTENTION_EPS).sum();
                            let dot: f64 = range.clone().map(|r| g.get(r, c) * out.get(r, c)).sum();
                            for r in range.clone() {
                                ga.set(r, c, (g.get(r, c) - dot) / denom);
                            }
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SegWeightedSum(w, v, segs) => {
                    let (wv, vv) = (self.value(*w), self.value(*v));
                    let cols = wv.cols();
                    let mut gw = Matrix::zeros(wv.rows(), cols);
                    let mut gv = Matrix::zeros(vv.rows(), cols);
                    for (s, range) in segs.iter().enumerate() {
                        for r in range {
                            for c in 0..cols {
                                let up = g.get(s, c);
                                gw.set(r, c, up * vv.get(r, c));
                                gv.set(r, c, up * wv.get(r, c));
                            }
                        }
                    }
                    accumulate(&mut grads, *w, gw);
                    accumulate(&mut grads, *v, gv);
                }
                Op::Bce(pred, target) => {
                    let pv = self.value(*pred);
                    let mut gp = Matrix::zeros(pv.rows(), pv.cols());
                    for r in 0..pv.rows() {
                        let up = g.get(r, 0);
                        for c in 0..pv.cols() {
                            let p = pv.get(r, c);
                            if (BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&p) {
                                let y = target.get(r, c);
                                gp.set(r, c, up * (-y / p + (1.0 - y) / (1.0 - p)));
                            }
                        }
                    }
                    accumulate(&mut grads, *pred, gp);
                }
                Op::Mean(a) => {
                    let av = self.value(*a);
                    let n = av.data().len().max(1) as f64;
                    let ga = Matrix::filled(av.rows(), av.cols(), g.get(0, 0) / n);
                    accumulate(&mut grads, *a, ga);
                }
            }
        }

        let grads = self
            .params
            .iter()
            .map(|p| {
                grads
                    .get_mut(p.0)
                    .and_then(Option::take)
                    .unwrap_or_else(|| {
                        let (r, c) = self.value(*p).shape();
                        Matrix::zeros(r, c)
                    })
            })
            .collect();
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Binary cross-entropy of one prediction row against a target row.
pub fn bce_row(pred: &[f64], target: &[f64]) -> f64 {
    -pred
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum::<f64>()
}

pub(crate) fn seg_mean_values(a: &Matrix, segs: &Segments) -> Matrix {
    let cols = a.cols();
    let mut out = Matrix::zeros(segs.count(), cols);
    let mut buf = Vec::new();
    for (s, range) in segs.iter().enumerate() {
        let inv = 1.0 / range.len() as f64;
        for c in 0..cols {
            buf.clear();
            buf.extend(range.clone().map(|r| a.get(r, c) * inv));
            out.set(s, c, canonical_sum(&mut buf));
        }
    }
    out
}

pub(crate) fn seg_normalize_values(a: &Matrix, segs: &Segments) -> Matrix {
    let cols = a.cols();
    let mut out = Matrix::zeros(a.rows(), cols);
    let mut buf = Vec::new();
    for range in segs.iter() {
        for c in 0..cols {
            buf.clear();
            buf.extend(range.clone().map(|r| a.get(r, c) + ATTENTION_EPS));
            let denom = canonical_sum(&mut buf);
            for r in range.clone() {
                out.set(r, c, (a.get(r, c) + ATTENTION_EPS) / denom);
            }
        }
    }
    out
}

pub(crate) fn seg_weighted_sum_values(w: &Matrix, v: &Matrix, segs: &Segments) -> Matrix {
    let cols = w.cols();
    let mut out = Matrix::zeros(segs.count(), cols);
    let mut buf = Vec::new();
    for (s, range) in segs.iter().enumerate() {
        for c in 0..cols {
            buf.clear();
            buf.extend(range.clone().map(|r| w.get(r, c) * v.get(r, c)));
            out.set(s, c, canonical_sum(&mut buf));
        }
    }
    out
}
