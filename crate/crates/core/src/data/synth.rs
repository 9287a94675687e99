//! Planted-instance bag generator.
//!
//! Each class `k` owns a mean `μ_k` drawn once from `N(0, scale² I)`. A bag
//! for class `k` holds `r` instances from `N(μ_k, σ² I)` at random slots and
//! background instances from `N(0, σ² I)` elsewhere. With probability
//! `multi_label_prob` a second class is planted in the same bag.

use serde::{Deserialize, Serialize};

use super::{default_class_names, Bag, BagDataset};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: usize,
    pub dim: usize,
    /// Bags generated per class unless `class_counts` is set.
    pub bags_per_class: usize,
    /// Explicit per-class bag counts (for long-tailed sets).
    pub class_counts: Option<Vec<usize>>,
    pub instances_per_bag: usize,
    /// Planted positives per class per positive bag.
    pub positives_per_bag: usize,
    pub mean_scale: f64,
    pub noise_std: f64,
    pub multi_label_prob: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            classes: 20,
            dim: 32,
            bags_per_class: 200,
            class_counts: None,
            instances_per_bag: 10,
            positives_per_bag: 1,
            mean_scale: 1.0,
            noise_std: 1.0,
            multi_label_prob: 0.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.classes == 0 || self.dim == 0 || self.instances_per_bag == 0 {
            return fail("classes, dim and instances_per_bag must be positive");
        }
        if self.positives_per_bag == 0 || self.positives_per_bag > self.instances_per_bag {
            return fail("positives_per_bag must lie in 1..=instances_per_bag");
        }
        if self.multi_label_prob > 0.0 {
            if self.classes < 2 {
                return fail("multi-label bags need at least two classes");
            }
            if 2 * self.positives_per_bag > self.instances_per_bag {
                return fail("multi-label bags need 2 * positives_per_bag <= instances_per_bag");
            }
        }
        if !(0.0..=1.0).contains(&self.multi_label_prob) {
            return fail("multi_label_prob must lie in [0, 1]");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite())
            || !(self.mean_scale >= 0.0 && self.mean_scale.is_finite())
        {
            return fail("noise_std and mean_scale must be finite and non-negative");
        }
        if let Some(counts) = &self.class_counts {
            if counts.len() != self.classes {
                return fail("class_counts must list one count per class");
            }
        }
        Ok(())
    }

    pub fn counts(&self) -> Vec<usize> {
        self.class_counts
            .clone()
            .unwrap_or_else(|| vec![self.bags_per_class; self.classes])
    }
}

/// Per-class counts decaying geometrically from `head` for class 0 to
/// `head / ratio` for the last class, rounded and at least 1.
pub fn long_tail_counts(classes: usize, head: usize, ratio: f64) -> Result<Vec<usize>> {
    if classes == 0 || head == 0 || !(ratio >= 1.0 && ratio.is_finite()) {
        return Err(Error::Config(format!(
            "long tail needs classes > 0, head > 0 and a finite ratio >= 1 (got {classes}, {head}, {ratio})"
        )));
    }
    if classes == 1 {
        return Ok(vec![head]);
    }
    Ok((0..classes)
        .map(|k| {
            let frac = k as f64 / (classes - 1) as f64;
            ((head as f64 * ratio.powf(-frac)).round() as usize).max(1)
        })
        .collect())
}

/// A generated split with the ground-truth positions of planted instances.
#[derive(Debug, Clone)]
pub struct SyntheticSplit {
    pub dataset: BagDataset,
    /// `(row, class)` of every planted instance, per bag.
    pub planted: Vec<Vec<(usize, usize)>>,
}

/// Generator with fixed class means; splits share them.
#[derive(Debug, Clone)]
pub struct Synthesizer {
    spec: SynthSpec,
    means: Matrix,
}

impl Synthesizer {
    pub fn new(spec: &SynthSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = Rng::with_stream(spec.seed, 0);
        let data = (0..spec.classes * spec.dim)
            .map(|_| spec.mean_scale * rng.normal())
            .collect();
        Ok(Synthesizer {
            spec: spec.clone(),
            means: Matrix::from_vec(spec.classes, spec.dim, data)?,
        })
    }

    /// `K x M` class means.
    pub fn means(&self) -> &Matrix {
        &self.means
    }

    /// Generates one split. Distinct `stream` values give independent bags.
    pub fn split(&self, stream: u64, counts: &[usize]) -> Result<SyntheticSplit> {
        let s = &self.spec;
        if counts.len() != s.classes {
            return Err(Error::Config("one bag count per class required".into()));
        }
        let mut rng = Rng::with_stream(s.seed, stream + 1);
        let (t, m, r) = (s.instances_per_bag, s.dim, s.positives_per_bag);
        let mut bags = Vec::new();
        let mut planted = Vec::new();
        for (k, &count) in counts.iter().enumerate() {
            for i in 0..count {
                let mut classes = vec![k];
                if s.multi_label_prob > 0.0 && rng.uniform() < s.multi_label_prob {
                    let other = (k + 1 + rng.below(s.classes - 1)) % s.classes;
                    classes.push(other);
                }
                let mut slots: Vec<usize> = (0..t).collect();
                rng.shuffle(&mut slots);

                let mut owner = vec![None; t];
                let mut bag_planted = Vec::new();
                for (j, &c) in classes.iter().enumerate() {
                    for &slot in &slots[j * r..(j + 1) * r] {
                        owner[slot] = Some(c);
                        bag_planted.push((slot, c));
                    }
                }
                bag_planted.sort_unstable();

                let mut data = Vec::with_capacity(t * m);
                for slot_owner in &owner {
                    for d in 0..m {
                        let centre = slot_owner.map_or(0.0, |c| self.means.get(c, d));
                        let v = centre + s.noise_std * rng.normal();
                        // Stored features are f32; keep memory and disk equal.
                        data.push(v as f32 as f64);
                    }
                }
                let mut labels = vec![false; s.classes];
                for &c in &classes {
                    labels[c] = true;
                }
                bags.push(Bag::new(
                    format!("s{stream}-c{k}-{i}"),
                    Matrix::from_vec(t, m, data)?,
                    labels,
                )?);
                planted.push(bag_planted);
            }
        }
        Ok(SyntheticSplit {
            dataset: BagDataset::new(default_class_names(s.classes), m, bags)?,
            planted,
        })
    }
}

/// Training split of `spec` (stream 0).
pub fn generate_synthetic(spec: &SynthSpec) -> Result<BagDataset> {
    Ok(Synthesizer::new(spec)?.split(0, &spec.counts())?.dataset)
}
