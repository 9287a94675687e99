//! Bags, bag datasets, their on-disk formats, and the synthetic generator.

mod format;
mod quality;
mod stats;
mod synth;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

pub use format::{decode_bags, encode_bags, read_bags, write_bags, FORMAT_VERSION, MAGIC};
pub use quality::{
    load_quality_file, parse_quality, parse_vocabulary, read_vocabulary, vocabulary_json,
    write_vocabulary, QualityMap,
};
pub use stats::{dataset_stats, DatasetStats};
pub use synth::{generate_synthetic, long_tail_counts, SynthSpec, Synthesizer, SyntheticSplit};

/// A weakly labelled example: a variable number of instances sharing one
/// multi-hot tag vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub id: String,
    /// `T x M`, one instance per row.
    pub instances: Matrix,
    /// Multi-hot tags, one entry per class.
    pub labels: Vec<bool>,
}

impl Bag {
    pub fn new(id: impl Into<String>, instances: Matrix, labels: Vec<bool>) -> Result<Self> {
        let id = id.into();
        if instances.rows() == 0 {
            return Err(Error::EmptyBag(format!("bag {id:?} has no instances")));
        }
        if !labels.iter().any(|&l| l) {
            return Err(Error::Config(format!("bag {id:?} carries no label")));
        }
        if !instances.is_finite() {
            return Err(Error::Domain(format!("bag {id:?} has non-finite features")));
        }
        Ok(Bag {
            id,
            instances,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.rows() == 0
    }

    pub fn label_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    /// Tags as a `0.0 / 1.0` vector.
    pub fn target(&self) -> Vec<f64> {
        self.labels
            .iter()
            .map(|&l| if l { 1.0 } else { 0.0 })
            .collect()
    }
}

/// A collection of bags over a fixed class vocabulary and feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct BagDataset {
    classes: Vec<String>,
    dim: usize,
    bags: Vec<Bag>,
    class_bags: Vec<Vec<usize>>,
    quality: QualityMap,
}

/// Default class names used when no vocabulary is supplied.
pub fn default_class_names(count: usize) -> Vec<String> {
    (0..count).map(|k| format!("class_{k}")).collect()
}

impl BagDataset {
    pub fn new(classes: Vec<String>, dim: usize, bags: Vec<Bag>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Config("dataset needs at least one class".into()));
        }
        if dim == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        let mut class_bags = vec![Vec::new(); classes.len()];
        for (n, bag) in bags.iter().enumerate() {
            if bag.labels.len() != classes.len() {
                return Err(Error::Shape(format!(
                    "bag {:?} has {} labels for {} classes",
                    bag.id,
                    bag.labels.len(),
                    classes.len()
                )));
            }
            if bag.id.len() > u16::MAX as usize {
                return Err(Error::Config(format!(
                    "bag id of {} bytes is too long",
                    bag.id.len()
                )));
            }
            if bag.instances.cols() != dim {
                return Err(Error::Shape(format!(
                    "bag {:?} has dimension {}, dataset has {dim}",
                    bag.id,
                    bag.instances.cols()
                )));
            }
            for (k, _) in bag.labels.iter().enumerate().filter(|(_, &l)| l) {
                class_bags[k].push(n);
            }
        }
        Ok(BagDataset {
            classes,
            dim,
            bags,
            class_bags,
            quality: QualityMap::new(),
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bags(&self) -> &[Bag] {
        &self.bags
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    /// Indices of the bags tagged with class `k`, ascending.
    pub fn class_bags(&self, k: usize) -> &[usize] {
        &self.class_bags[k]
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn quality(&self) -> &QualityMap {
        &self.quality
    }

    pub fn set_quality(&mut self, quality: QualityMap) -> Result<()> {
        if let Some(&k) = quality.keys().find(|&&k| k >= self.classes.len()) {
            return Err(Error::Config(format!(
                "quality for unknown class index {k}"
            )));
        }
        self.quality = quality;
        Ok(())
    }

    /// Replaces the class names, keeping the class count.
    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.classes.len() {
            return Err(Error::Config(format!(
                "vocabulary lists {} classes, dataset has {}",
                names.len(),
                self.classes.len()
            )));
        }
        self.classes = names;
        Ok(self)
    }

    /// Keeps at most `cap` bags per class.
    ///
    /// Bags are visited in a seeded random order and kept while any of
    /// their classes is still under the cap, so co-occurring classes may
    /// exceed it.
    pub fn subsample_balanced(&self, cap: usize, seed: u64) -> Result<Self> {
        let mut order: Vec<usize> = (0..self.bags.len()).collect();
        Rng::new(seed).shuffle(&mut order);
        let mut counts = vec![0usize; self.classes.len()];
        let mut keep = Vec::new();
        for n in order {
            let bag = &self.bags[n];
            let wanted = bag
                .labels
                .iter()
                .enumerate()
                .any(|(k, &l)| l && counts[k] < cap);
            if wanted {
                for (k, _) in bag.labels.iter().enumerate().filter(|(_, &l)| l) {
                    counts[k] += 1;
                }
                keep.push(n);
            }
        }
        keep.sort_unstable();
        let bags = keep.into_iter().map(|n| self.bags[n].clone()).collect();
        let mut out = BagDataset::new(self.classes.clone(), self.dim, bags)?;
        out.quality = self.quality.clone();
        Ok(out)
    }

    /// Per-class positive bag counts.
    pub fn class_counts(&self) -> Vec<usize> {
        self.class_bags.iter().map(Vec::len).collect()
    }

    /// All tags as an `N x K` matrix of `0.0 / 1.0`.
    pub fn targets(&self) -> Matrix {
        let rows: Vec<Vec<f64>> = self.bags.iter().map(Bag::target).collect();
        if rows.is_empty() {
            return Matrix::zeros(0, self.classes.len());
        }
        Matrix::from_rows(&rows).expect("labels validated at construction")
    }
}

/// Per-class mapping kept sorted for deterministic output.
pub type ClassMap<T> = BTreeMap<usize, T>;
