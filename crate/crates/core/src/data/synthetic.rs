//! Synthetic cohort generator with analytically known discrimination.
//!
//! Labels are Bernoulli(π). Conditional on the label, the two branch logits
//! are drawn from a bivariate Gaussian: branch `b` has mean `mu0_b`/`mu1_b`
//! per class, shared standard deviation σ, and inter-branch correlation ρ.
//! Branch probabilities are the standard logistic of those logits, so each
//! branch's true AUROC is the binormal closed form Φ((μ1−μ0)/(σ√2)).
//!
//! Each record draws from its own stream derived from `(seed, record index)`
//! (label first, then the two normal deviates), so generation is a pure
//! function of the config regardless of evaluation order.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{PredictionRecord, Split};
use crate::error::{Error, Result};
use crate::fusion::logistic;
use crate::rng::{derive_rng, standard_normal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub name: String,
    /// Class-conditional logit mean for label 0.
    pub mu0: f64,
    /// Class-conditional logit mean for label 1.
    pub mu1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    /// Event prevalence π ∈ (0, 1).
    pub prevalence: f64,
    /// Exactly two branches.
    pub branches: Vec<BranchSpec>,
    /// Shared class-conditional logit standard deviation, > 0.
    pub sigma: f64,
    /// Inter-branch noise correlation ∈ [−1, 1].
    pub rho: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "prevalence must be in (0,1), got {}",
                self.prevalence
            )));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "sigma must be > 0, got {}",
                self.sigma
            )));
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidConfig(format!(
                "rho must be in [-1,1], got {}",
                self.rho
            )));
        }
        if self.branches.len() != 2 {
            return Err(Error::InvalidConfig(format!(
                "exactly two branches required, got {}",
                self.branches.len()
            )));
        }
        if self.branches[0].name == self.branches[1].name {
            return Err(Error::InvalidConfig("branch names must differ".into()));
        }
        for branch in &self.branches {
            if !branch.mu0.is_finite() || !branch.mu1.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "branch `{}` has non-finite means",
                    branch.name
                )));
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: SyntheticConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }
}

pub fn generate_synthetic_cohort(config: &SyntheticConfig) -> Result<Vec<PredictionRecord>> {
    config.validate()?;
    let plan = [
        (Split::Train, config.n_train),
        (Split::Validation, config.n_validation),
        (Split::Test, config.n_test),
    ];
    let mut records = Vec::with_capacity(config.n_train + config.n_validation + config.n_test);
    let cross = (1.0 - config.rho * config.rho).sqrt();
    let mut global_index: u64 = 0;
    for (split, n) in plan {
        for i in 0..n {
            let mut rng = derive_rng(config.seed, global_index, 0);
            global_index += 1;

            let label = u8::from(rng.random::<f64>() < config.prevalence);
            let u1 = standard_normal(&mut rng);
            let u2 = standard_normal(&mut rng);
            let noise = [u1, config.rho * u1 + cross * u2];

            let probs = config.branches.iter().zip(noise).map(|(branch, e)| {
                let mu = if label == 1 { branch.mu1 } else { branch.mu0 };
                (branch.name.clone(), logistic(mu + config.sigma * e))
            });
            records.push(PredictionRecord::new(
                format!("syn-{split}-{i:06}"),
                split,
                label,
                probs,
            ));
        }
    }
    Ok(records)
}
