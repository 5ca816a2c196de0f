//! Per-pixel uncertainty estimation and evaluation for dense segmentation.
//!
//! The crate covers low-rank Gaussian logit models (stochastic segmentation
//! networks), deep ensembles, per-pixel uncertainty measures, structured input
//! corruption, and the precision-recall protocols used to judge uncertainty
//! maps: error detection, uncertainty-based rejection and noise detection.
//! A synthetic dataset generator and a linear toy model make the whole
//! pipeline runnable on a laptop.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corrupt;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gauss;
pub mod metrics;
pub mod model;
pub mod par;
pub mod probs;
pub mod rng;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
