use crate::data::BagDataset;
use crate::error::{Error, Result};
use crate::numerics::Rng;

use super::Balancing;

/// Round-robin over classes; each turn draws the next bag of that class.
///
/// The class order is shuffled once. Each class walks a shuffled copy of its
/// bag list and reshuffles it on wrap-around. A multi-label bag counts for
/// the class whose turn drew it.
#[derive(Debug, Clone)]
pub struct BalancedSampler {
    class_bags: Vec<Vec<usize>>,
    cursors: Vec<usize>,
    rotation: Vec<usize>,
    turn: usize,
    rng: Rng,
}

impl BalancedSampler {
    pub fn new(dataset: &BagDataset, mut rng: Rng) -> Result<Self> {
        let k = dataset.class_count();
        let mut class_bags = Vec::with_capacity(k);
        for c in 0..k {
            let mut bags = dataset.class_bags(c).to_vec();
            if bags.is_empty() {
                return Err(Error::Config(format!(
                    "class {} ({}) has no bags to sample",
                    c,
                    dataset.classes()[c]
                )));
            }
            rng.shuffle(&mut bags);
            class_bags.push(bags);
        }
        let mut rotation: Vec<usize> = (0..k).collect();
        rng.shuffle(&mut rotation);
        Ok(BalancedSampler {
            class_bags,
            cursors: vec![0; k],
            rotation,
            turn: 0,
            rng,
        })
    }

    /// The class whose turn comes next.
    pub fn next_class(&self) -> usize {
        self.rotation[self.turn]
    }

    pub fn draw(&mut self) -> usize {
        let c = self.rotation[self.turn];
        self.turn = (self.turn + 1) % self.rotation.len();
        if self.cursors[c] == self.class_bags[c].len() {
            self.rng.shuffle(&mut self.class_bags[c]);
            self.cursors[c] = 0;
        }
        let bag = self.class_bags[c][self.cursors[c]];
        self.cursors[c] += 1;
        bag
    }
}

/// Shuffled passes over every bag, reshuffled each pass.
#[derive(Debug, Clone)]
pub struct UniformSampler {
    order: Vec<usize>,
    pos: usize,
    rng: Rng,
}

impl UniformSampler {
    pub fn new(dataset: &BagDataset, mut rng: Rng) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::Config("cannot sample from an empty dataset".into()));
        }
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        rng.shuffle(&mut order);
        Ok(UniformSampler { order, pos: 0, rng })
    }

    pub fn draw(&mut self) -> usize {
        if self.pos == self.order.len() {
            self.rng.shuffle(&mut self.order);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

#[derive(Debug, Clone)]
pub enum Sampler {
    Balanced(BalancedSampler),
    Uniform(UniformSampler),
}

impl Sampler {
    pub fn new(balancing: Balancing, dataset: &BagDataset, rng: Rng) -> Result<Self> {
        Ok(match balancing {
            Balancing::MinibatchBalanced => Sampler::Balanced(BalancedSampler::new(dataset, rng)?),
            Balancing::None => Sampler::Uniform(UniformSampler::new(dataset, rng)?),
        })
    }

    pub fn sample_batch(&mut self, batch_size: usize) -> Vec<usize> {
        match self {
            Sampler::Balanced(s) => sample_batch(s, batch_size),
            Sampler::Uniform(s) => (0..batch_size).map(|_| s.draw()).collect(),
        }
    }
}

/// `batch_size` consecutive balanced draws.
pub fn sample_batch(sampler: &mut BalancedSampler, batch_size: usize) -> Vec<usize> {
    (0..batch_size).map(|_| sampler.draw()).collect()
}
