//! Ranking metrics, d-prime, Pearson correlation, and evaluation reports.
//!
//! Undefined values (a 0/0 rate, AP without positives, AUC over a single
//! class) are `None`.

use std::fmt::Write as _;

use serde_json::{json, Map, Value};

use crate::data::{BagDataset, QualityMap};
use crate::error::{Error, Result};
use crate::models::BagPredictor;
use crate::numerics::special::student_t_two_sided;
use crate::numerics::{inv_norm_cdf, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub false_positive_rate: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn precision_recall_fpr(tp: u64, fp: u64, fn_: u64, tn: u64) -> Rates {
    Rates {
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        false_positive_rate: ratio(fp, fp + tn),
    }
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain("score is NaN".into()));
    }
    Ok(())
}

/// Non-interpolated average precision: the mean, over positives, of the
/// precision at each positive's rank. Ranks follow descending score; equal
/// scores keep their input order.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<Option<f64>> {
    check_inputs(scores, labels)?;
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(Some(total / positives as f64))
}

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<Option<f64>> {
    check_inputs(scores, labels)?;
    let positives = labels.iter().filter(|&&l| l).count() as u64;
    let negatives = labels.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the Mann-Whitney U, kept integral.
    let mut twice_u: u64 = 0;
    let mut negatives_below: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let group = &order[start..end];
        let pos = group.iter().filter(|&&i| labels[i]).count() as u64;
        let neg = group.len() as u64 - pos;
        twice_u += pos * (2 * negatives_below + neg);
        negatives_below += neg;
        start = end;
    }
    Ok(Some(twice_u as f64 / (2 * positives * negatives) as f64))
}

/// `√2 Φ⁻¹(auc)`; `±∞` at the ends of `[0, 1]`.
pub fn d_prime(auc: f64) -> Result<f64> {
    if auc == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if auc == 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(std::f64::consts::SQRT_2 * inv_norm_cdf(auc)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub pcc: f64,
    /// Two-sided Student-t p-value with `n - 2` degrees of freedom.
    pub p_value: f64,
    pub n: usize,
}

/// Sample Pearson correlation. `None` for fewer than three pairs or a
/// constant input.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<Correlation>> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "{} x values for {} y values",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Domain("correlation input is not finite".into()));
    }
    let n = x.len();
    if n < 3 {
        return Ok(None);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let dof = (n - 2) as f64;
    let p_value = if r.abs() == 1.0 {
        0.0
    } else {
        student_t_two_sided(r * (dof / (1.0 - r * r)).sqrt(), dof)
    };
    Ok(Some(Correlation { pcc: r, p_value, n }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub index: usize,
    pub name: String,
    pub ap: Option<f64>,
    pub auc: Option<f64>,
    pub dprime: Option<f64>,
    pub num_pos: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model_id: String,
    pub dataset_id: String,
    pub classes: Vec<ClassMetrics>,
    /// Mean AP over classes with at least one positive.
    pub map: Option<f64>,
    /// Mean AUC over classes with both positives and negatives.
    pub mean_auc: Option<f64>,
    /// Mean of the per-class d-prime values.
    pub mean_dprime: Option<f64>,
    /// d-prime of the mean AUC.
    pub dprime_of_mean_auc: Option<f64>,
    /// Classes left out of the aggregates for lack of positives.
    pub excluded_classes: usize,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-class metrics of an `N x K` score matrix against `dataset`'s tags.
pub fn evaluate_scores(scores: &Matrix, dataset: &BagDataset) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::Config("evaluation set is empty".into()));
    }
    if scores.shape() != (dataset.len(), dataset.class_count()) {
        return Err(Error::Shape(format!(
            "scores are {:?}, dataset is {} bags x {} classes",
            scores.shape(),
            dataset.len(),
            dataset.class_count()
        )));
    }
    let mut classes = Vec::with_capacity(dataset.class_count());
    for (k, name) in dataset.classes().iter().enumerate() {
        let s = scores.column(k);
        let labels: Vec<bool> = dataset.bags().iter().map(|b| b.labels[k]).collect();
        let auc = roc_auc(&s, &labels)?;
        classes.push(ClassMetrics {
            index: k,
            name: name.clone(),
            ap: average_precision(&s, &labels)?,
            auc,
            dprime: auc.map(d_prime).transpose()?,
            num_pos: labels.iter().filter(|&&l| l).count(),
        });
    }
    let mean_auc = mean_of(classes.iter().map(|c| c.auc));
    Ok(EvalReport {
        model_id: String::new(),
        dataset_id: String::new(),
        map: mean_of(classes.iter().map(|c| c.ap)),
        mean_auc,
        mean_dprime: mean_of(classes.iter().map(|c| c.dprime)),
        dprime_of_mean_auc: mean_auc.map(d_prime).transpose()?,
        excluded_classes: classes.iter().filter(|c| c.num_pos == 0).count(),
        classes,
    })
}

/// Scores every bag of `dataset` with `predictor` and evaluates them.
pub fn evaluate(predictor: &dyn BagPredictor, dataset: &BagDataset) -> Result<EvalReport> {
    if predictor.classes() != dataset.class_count() {
        return Err(Error::Config(format!(
            "predictor has {} classes, dataset {}",
            predictor.classes(),
            dataset.class_count()
        )));
    }
    let scores = predictor.predict_dataset(dataset)?;
    evaluate_scores(&scores, dataset)
}

fn json_number(v: Option<f64>) -> Value {
    match v {
        None => Value::Null,
        Some(x) if x == f64::INFINITY => json!("inf"),
        Some(x) if x == f64::NEG_INFINITY => json!("-inf"),
        Some(x) => json!(x),
    }
}

fn parse_json_number(v: Option<&Value>, field: &str) -> Result<Option<f64>> {
    match v {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) if s == "inf" => Ok(Some(f64::INFINITY)),
        Some(Value::String(s)) if s == "-inf" => Ok(Some(f64::NEG_INFINITY)),
        Some(Value::Number(n)) => Ok(n.as_f64()),
        Some(_) => Err(Error::format(
            0,
            format!("report field {field} is not a number"),
        )),
    }
}

fn csv_number(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(x) if x == f64::INFINITY => "inf".into(),
        Some(x) if x == f64::NEG_INFINITY => "-inf".into(),
        Some(x) => format!("{x}"),
    }
}

/// Quotes a CSV field when it contains a separator, quote, or line break.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl EvalReport {
    pub fn with_ids(mut self, model_id: impl Into<String>, dataset_id: impl Into<String>) -> Self {
        self.model_id = model_id.into();
        self.dataset_id = dataset_id.into();
        self
    }

    /// Per-class AP, `None` where undefined.
    pub fn ap_by_class(&self) -> Vec<Option<f64>> {
        self.classes.iter().map(|c| c.ap).collect()
    }

    /// JSON document; infinities are written as the strings `"inf"` and
    /// `"-inf"`, undefined values as `null`.
    pub fn to_json(&self) -> String {
        let classes: Vec<Value> = self
            .classes
            .iter()
            .map(|c| {
                json!({
                    "class_index": c.index,
                    "class_name": c.name,
                    "ap": json_number(c.ap),
                    "auc": json_number(c.auc),
                    "dprime": json_number(c.dprime),
                    "num_pos": c.num_pos,
                })
            })
            .collect();
        let mut doc = Map::new();
        doc.insert("model_id".into(), json!(self.model_id));
        doc.insert("dataset_id".into(), json!(self.dataset_id));
        doc.insert("map".into(), json_number(self.map));
        doc.insert("mean_auc".into(), json_number(self.mean_auc));
        doc.insert("mean_dprime".into(), json_number(self.mean_dprime));
        doc.insert(
            "dprime_of_mean_auc".into(),
            json_number(self.dprime_of_mean_auc),
        );
        doc.insert("excluded_classes".into(), json!(self.excluded_classes));
        doc.insert("classes".into(), Value::Array(classes));
        serde_json::to_string_pretty(&Value::Object(doc)).expect("values serialise") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Value =
            serde_json::from_str(text).map_err(|e| Error::format(0, format!("report: {e}")))?;
        let bad = |what: &str| Error::format(0, format!("report: missing or invalid {what}"));
        let string = |v: &Value, key: &str| -> Result<String> {
            v.get(key)
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| bad(key))
        };
        let count = |v: &Value, key: &str| -> Result<usize> {
            v.get(key)
                .and_then(Value::as_u64)
                .and_then(|n| usize::try_from(n).ok())
                .ok_or_else(|| bad(key))
        };
        let mut classes = Vec::new();
        for (i, c) in doc
            .get("classes")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("classes"))?
            .iter()
            .enumerate()
        {
            let index = count(c, "class_index")?;
            if index != i {
                return Err(Error::format(
                    0,
                    format!("report: class {i} listed as index {index}"),
                ));
            }
            classes.push(ClassMetrics {
                index,
                name: string(c, "class_name")?,
                ap: parse_json_number(c.get("ap"), "ap")?,
                auc: parse_json_number(c.get("auc"), "auc")?,
                dprime: parse_json_number(c.get("dprime"), "dprime")?,
                num_pos: count(c, "num_pos")?,
            });
        }
        Ok(EvalReport {
            model_id: string(&doc, "model_id")?,
            dataset_id: string(&doc, "dataset_id")?,
            map: parse_json_number(doc.get("map"), "map")?,
            mean_auc: parse_json_number(doc.get("mean_auc"), "mean_auc")?,
            mean_dprime: parse_json_number(doc.get("mean_dprime"), "mean_dprime")?,
            dprime_of_mean_auc: parse_json_number(
                doc.get("dprime_of_mean_auc"),
                "dprime_of_mean_auc",
            )?,
            excluded_classes: count(&doc, "excluded_classes")?,
            classes,
        })
    }

    /// `class_index,class_name,ap,auc,dprime,num_pos`; undefined values are
    /// left empty.
    pub fn per_class_csv(&self) -> String {
        let mut out = String::from("class_index,class_name,ap,auc,dprime,num_pos\n");
        for c in &self.classes {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                c.index,
                csv_field(&c.name),
                csv_number(c.ap),
                csv_number(c.auc),
                csv_number(c.dprime),
                c.num_pos
            )
            .unwrap();
        }
        out
    }
}

/// One row of a correlation table.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRow {
    pub variable: String,
    /// `None` when fewer than three pairs exist or an input is constant.
    pub correlation: Option<Correlation>,
    pub n: usize,
}

/// Correlates per-class AP with per-class training-bag counts and, where
/// available, with label quality. Classes without an AP are skipped.
pub fn correlation_table(
    ap: &[Option<f64>],
    train_counts: &[usize],
    quality: &QualityMap,
) -> Result<Vec<CorrelationRow>> {
    if ap.len() != train_counts.len() {
        return Err(Error::Shape(format!(
            "{} AP values for {} class counts",
            ap.len(),
            train_counts.len()
        )));
    }
    let mut rows = Vec::new();
    let (x, y): (Vec<f64>, Vec<f64>) = ap
        .iter()
        .zip(train_counts)
        .filter_map(|(a, &n)| a.map(|a| (n as f64, a)))
        .unzip();
    rows.push(CorrelationRow {
        variable: "training_bags".into(),
        correlation: pearson(&x, &y)?,
        n: x.len(),
    });
    let (x, y): (Vec<f64>, Vec<f64>) = quality
        .iter()
        .filter_map(|(&k, &q)| ap.get(k).copied().flatten().map(|a| (q, a)))
        .unzip();
    rows.push(CorrelationRow {
        variable: "label_quality".into(),
        correlation: pearson(&x, &y)?,
        n: x.len(),
    });
    Ok(rows)
}

/// `variable,pcc,p_value,n`; undefined correlations leave both fields empty.
pub fn correlation_csv(rows: &[CorrelationRow]) -> String {
    let mut out = String::from("variable,pcc,p_value,n\n");
    for r in rows {
        let (pcc, p) = match r.correlation {
            Some(c) => (format!("{}", c.pcc), format!("{:e}", c.p_value)),
            None => (String::new(), String::new()),
        };
        writeln!(out, "{},{pcc},{p},{}", csv_field(&r.variable), r.n).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{default_class_names, Bag};
    use crate::numerics::Rng;
    use proptest::prelude::*;

    fn brute_ap(scores: &[f64], labels: &[bool]) -> Option<f64> {
        // Rank of item i: items with higher score, plus equal-score items
        // earlier in the input, plus one.
        let rank = |i: usize| {
            1 + (0..scores.len())
                .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
                .count()
        };
        let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
        if pos.is_empty() {
            return None;
        }
        let mut total = 0.0;
        let mut ranked: Vec<(usize, usize)> = pos.iter().map(|&i| (rank(i), i)).collect();
        ranked.sort_unstable();
        for (hits, (r, _)) in ranked.iter().enumerate() {
            total += (hits + 1) as f64 / *r as f64;
        }
        Some(total / pos.len() as f64)
    }

    fn brute_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
        let (mut num, mut pairs) = (0.0, 0u64);
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] && !labels[j] {
                    pairs += 1;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        (pairs > 0).then(|| num / pairs as f64)
    }

    #[test]
    fn rates_examples() {
        let r = precision_recall_fpr(3, 1, 0, 0);
        assert_eq!(r.precision, Some(0.75));
        assert_eq!(r.recall, Some(1.0));
        assert_eq!(r.false_positive_rate, Some(1.0));
        let r = precision_recall_fpr(0, 0, 5, 5);
        assert_eq!(r.precision, None);
        assert_eq!(r.recall, Some(0.0));
        assert_eq!(r.false_positive_rate, Some(0.0));
    }

    #[test]
    fn rates_match_formula() {
        let mut rng = Rng::new(4);
        for _ in 0..200 {
            let c: Vec<u64> = (0..4).map(|_| rng.below(20) as u64 + 1).collect();
            let r = precision_recall_fpr(c[0], c[1], c[2], c[3]);
            assert_eq!(r.precision, Some(c[0] as f64 / (c[0] + c[1]) as f64));
            assert_eq!(r.recall, Some(c[0] as f64 / (c[0] + c[2]) as f64));
            assert_eq!(
                r.false_positive_rate,
                Some(c[1] as f64 / (c[1] + c[3]) as f64)
            );
        }
    }

    #[test]
    fn ap_examples() {
        let s = [0.9, 0.8, 0.7, 0.3, 0.2, 0.1];
        let l = [true, true, true, false, false, false];
        assert_eq!(average_precision(&s, &l).unwrap(), Some(1.0));
        let l = [false, true, false, false];
        assert_eq!(
            average_precision(&[0.9, 0.8, 0.7, 0.6], &l).unwrap(),
            Some(0.5)
        );
        assert_eq!(
            average_precision(&[0.1, 0.2], &[false, false]).unwrap(),
            None
        );
    }

    #[test]
    fn ap_and_auc_match_brute_force_with_ties() {
        let mut rng = Rng::new(5);
        for n in 1..=200 {
            // Coarse scores force ties.
            let s: Vec<f64> = (0..n).map(|_| rng.below(7) as f64 / 7.0).collect();
            let l: Vec<bool> = (0..n).map(|_| rng.uniform() < 0.4).collect();
            let (ap, want) = (average_precision(&s, &l).unwrap(), brute_ap(&s, &l));
            match (ap, want) {
                (Some(a), Some(b)) => assert!((a - b).abs() <= 1e-12, "n={n}: {a} vs {b}"),
                (a, b) => assert_eq!(a, b),
            }
            assert_eq!(roc_auc(&s, &l).unwrap(), brute_auc(&s, &l), "n={n}");
        }
    }

    #[test]
    fn auc_examples() {
        assert_eq!(
            roc_auc(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(),
            Some(1.0)
        );
        assert_eq!(
            roc_auc(&[0.5; 4], &[true, false, true, false]).unwrap(),
            Some(0.5)
        );
        assert_eq!(roc_auc(&[0.5, 0.2], &[true, true]).unwrap(), None);
        let mut rng = Rng::new(6);
        let s: Vec<f64> = (0..10_000).map(|_| rng.uniform()).collect();
        let l: Vec<bool> = (0..10_000).map(|i| i % 2 == 0).collect();
        let auc = roc_auc(&s, &l).unwrap().unwrap();
        assert!((auc - 0.5).abs() <= 0.02, "{auc}");
    }

    #[test]
    fn nan_scores_rejected() {
        assert!(matches!(
            roc_auc(&[f64::NAN], &[true]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            average_precision(&[0.1], &[true, false]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn dprime_anchors() {
        assert_eq!(d_prime(0.5).unwrap(), 0.0);
        assert!((d_prime(0.959).unwrap() - 2.452).abs() <= 0.02);
        // √2 times the 97.5% normal quantile.
        assert!((d_prime(0.975).unwrap() - 2.771_807_649).abs() <= 1e-8);
        assert_eq!(d_prime(1.0).unwrap(), f64::INFINITY);
        assert_eq!(d_prime(0.0).unwrap(), f64::NEG_INFINITY);
        assert!(d_prime(1.5).is_err());
    }

    #[test]
    fn pearson_examples() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let c = pearson(&x, &y).unwrap().unwrap();
        assert!((c.pcc - 1.0).abs() < 1e-15);
        assert!(c.p_value < 1e-12);
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &y).unwrap().unwrap().pcc + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&x, &[1.0; 10]).unwrap(), None);
        assert_eq!(pearson(&[1.0, 2.0], &[3.0, 1.0]).unwrap(), None);
    }

    /// Two-sided t tail by Simpson integration of the density.
    fn integrated_t_p(t: f64, dof: f64) -> f64 {
        let ln_c = statrs::function::gamma::ln_gamma((dof + 1.0) / 2.0)
            - statrs::function::gamma::ln_gamma(dof / 2.0)
            - 0.5 * (dof * std::f64::consts::PI).ln();
        let density = |x: f64| (ln_c - (dof + 1.0) / 2.0 * (1.0 + x * x / dof).ln()).exp();
        let (a, b, n) = (0.0, t.abs(), 20_000);
        let h = (b - a) / n as f64;
        let mut s = density(a) + density(b);
        for i in 1..n {
            s += density(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        1.0 - 2.0 * s * h / 3.0
    }

    #[test]
    fn pearson_matches_oracles() {
        let mut rng = Rng::new(8);
        let x: Vec<f64> = (0..100).map(|_| rng.normal()).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.2 * v + rng.normal()).collect();
        let c = pearson(&x, &y).unwrap().unwrap();
        let n = 100.0;
        let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|b| b * b).sum();
        let cov = (sxy - sx * sy / n) / (n - 1.0);
        let r = cov
            / (((sxx - sx * sx / n) / (n - 1.0)).sqrt() * ((syy - sy * sy / n) / (n - 1.0)).sqrt());
        assert!((c.pcc - r).abs() <= 1e-12);
        let t = r * ((n - 2.0) / (1.0 - r * r)).sqrt();
        assert!((c.p_value - integrated_t_p(t, n - 2.0)).abs() <= 1e-6);
    }

    proptest! {
        #[test]
        fn auc_invariant_under_monotone_maps(
            s in proptest::collection::vec(-5.0f64..5.0, 2..60),
            bits in proptest::collection::vec(any::<bool>(), 60),
        ) {
            let l = &bits[..s.len()];
            let mapped: Vec<f64> = s.iter().map(|v| (v * 0.7).exp() + 3.0).collect();
            prop_assert_eq!(roc_auc(&s, l).unwrap(), roc_auc(&mapped, l).unwrap());
        }

        #[test]
        fn metrics_invariant_to_input_order(
            s in proptest::collection::hash_set(-1000i32..1000, 2..60),
            bits in proptest::collection::vec(any::<bool>(), 60),
            seed in any::<u64>(),
        ) {
            let s: Vec<f64> = s.into_iter().map(f64::from).collect();
            let l = bits[..s.len()].to_vec();
            let mut idx: Vec<usize> = (0..s.len()).collect();
            Rng::new(seed).shuffle(&mut idx);
            let s2: Vec<f64> = idx.iter().map(|&i| s[i]).collect();
            let l2: Vec<bool> = idx.iter().map(|&i| l[i]).collect();
            prop_assert_eq!(roc_auc(&s, &l).unwrap(), roc_auc(&s2, &l2).unwrap());
            let (a, b) = (average_precision(&s, &l).unwrap(), average_precision(&s2, &l2).unwrap());
            match (a, b) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-12),
                (a, b) => prop_assert_eq!(a, b),
            }
        }

        #[test]
        fn dprime_monotone_and_odd(a in 0.001f64..0.999, b in 0.001f64..0.999) {
            let (da, db) = (d_prime(a).unwrap(), d_prime(b).unwrap());
            if a < b {
                prop_assert!(da < db);
            }
            prop_assert!((d_prime(1.0 - a).unwrap() + da).abs() <= 1e-9);
        }
    }

    fn dataset(labels: &[&[bool]]) -> BagDataset {
        let bags = labels
            .iter()
            .enumerate()
            .map(|(i, l)| Bag::new(format!("b{i}"), Matrix::zeros(1, 1), l.to_vec()).unwrap())
            .collect();
        BagDataset::new(default_class_names(labels[0].len()), 1, bags).unwrap()
    }

    #[test]
    fn oracle_scores_are_perfect() {
        let ds = dataset(&[
            &[true, false, false],
            &[false, true, false],
            &[true, true, false],
        ]);
        let r = evaluate_scores(&ds.targets(), &ds).unwrap();
        assert_eq!(r.map, Some(1.0));
        assert_eq!(r.classes[0].auc, Some(1.0));
        assert_eq!(r.classes[0].dprime, Some(f64::INFINITY));
        assert_eq!(r.classes[2].ap, None);
        assert_eq!(r.excluded_classes, 1);
        let back = EvalReport::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn constant_scores_give_half_auc() {
        let ds = dataset(&[
            &[true, false],
            &[false, true],
            &[true, true],
            &[true, false],
        ]);
        let r = evaluate_scores(&Matrix::filled(4, 2, 0.3), &ds).unwrap();
        assert!(r.classes.iter().all(|c| c.auc == Some(0.5)));
        assert_eq!(r.mean_dprime, Some(0.0));
    }

    #[test]
    fn per_class_csv_layout() {
        let ds = dataset(&[&[true, false], &[true, true]]);
        let r =
            evaluate_scores(&Matrix::from_rows(&[[0.9, 0.1], [0.2, 0.8]]).unwrap(), &ds).unwrap();
        let csv = r.per_class_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "class_index,class_name,ap,auc,dprime,num_pos");
        assert_eq!(lines[1], "0,class_0,1,,,2");
        assert_eq!(lines[2], "1,class_1,1,1,inf,1");
    }

    #[test]
    fn correlation_table_shape() {
        let ap = vec![Some(0.1), Some(0.2), None, Some(0.4)];
        let counts = vec![10, 20, 5, 40];
        let mut quality = QualityMap::new();
        quality.insert(0, 0.4);
        let rows = correlation_table(&ap, &counts, &quality).unwrap();
        assert_eq!(rows[0].n, 3);
        assert!((rows[0].correlation.unwrap().pcc - 1.0).abs() < 1e-12);
        assert_eq!(rows[1].correlation, None);
        let csv = correlation_csv(&rows);
        assert!(csv.starts_with("variable,pcc,p_value,n\ntraining_bags,"));
        assert!(csv.ends_with("label_quality,,,1\n"));
    }
}
