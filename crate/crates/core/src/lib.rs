//! Multi-instance learning for weakly labelled tagging.
//!
//! Bags of instance feature vectors carry only bag-level tags. This crate
//! provides the instance-space, embedded-space, bag-space, and attention
//! models that map a bag to per-class presence probabilities, together with
//! the training loop, the evaluation metrics, and a binary bag format.

pub mod data;
pub mod error;
pub mod metrics;
pub mod models;
pub mod numerics;
pub mod pooling;
pub mod training;

pub use error::{Error, Result};
