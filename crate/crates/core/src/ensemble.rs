//! Combining independently trained members into one prediction.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probs::{softmax_in_place, LogitTensor, ProbTensor};
use crate::tensor::{read_json, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombineMode {
    /// Average logits, then softmax.
    Product,
    /// Average probabilities.
    Mixture,
}

fn check_members<T>(members: &[T], same: impl Fn(&T, &T) -> bool) -> Result<()> {
    if members.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: members.len(),
        });
    }
    if members.iter().any(|m| !same(m, &members[0])) {
        return Err(Error::Shape("ensemble members differ in shape".into()));
    }
    Ok(())
}

pub fn combine_product(logits: &[LogitTensor]) -> Result<ProbTensor> {
    check_members(logits, LogitTensor::same_shape)?;
    let (s, k) = (logits[0].pixels(), logits[0].classes());
    let inv = 1.0 / logits.len() as f64;
    let mut data = vec![0.0; s * k];
    for member in logits {
        for (a, v) in data.iter_mut().zip(member.data()) {
            *a += v;
        }
    }
    for row in data.chunks_exact_mut(k) {
        row.iter_mut().for_each(|v| *v *= inv);
        softmax_in_place(row);
    }
    ProbTensor::new(s, k, data)
}

pub fn combine_mixture(probs: &[ProbTensor]) -> Result<ProbTensor> {
    check_members(probs, ProbTensor::same_shape)?;
    let (s, k) = (probs[0].pixels(), probs[0].classes());
    let inv = 1.0 / probs.len() as f64;
    let mut data = vec![0.0; s * k];
    for member in probs {
        for (a, v) in data.iter_mut().zip(member.data()) {
            *a += v;
        }
    }
    data.iter_mut().for_each(|v| *v *= inv);
    ProbTensor::new(s, k, data)
}

/// On-disk description of an ensemble: member tensor files plus the rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleBundle {
    pub mode: CombineMode,
    pub members: Vec<String>,
}

impl EnsembleBundle {
    pub fn validate(&self) -> Result<()> {
        if self.members.len() < 2 {
            return Err(Error::Config(format!(
                "ensemble needs at least 2 members, got {}",
                self.members.len()
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let b: EnsembleBundle = read_json(path)?;
        b.validate()?;
        Ok(b)
    }
}
