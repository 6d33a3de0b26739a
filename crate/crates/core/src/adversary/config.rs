use crate::error::{Error, Result};
use crate::nn::TrainConfig;

use super::AttackKind;

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub seed: u64,
    /// Insertion candidates kept per step, most feature-dissimilar first.
    pub pool_size: usize,
    /// Neighbors perturbed by an influence attack.
    pub influence_neighbors: usize,
    /// Non-targeted budget as a fraction of the clean edge count.
    pub rate: f64,
    /// Non-targeted attack keeps perturbing a node until its surrogate
    /// margin is below `-confidence`.
    pub confidence: f64,
    /// Whether the non-targeted attack may delete edges as well as insert.
    pub global_deletions: bool,
    pub surrogate_hidden: usize,
    pub surrogate_train: TrainConfig,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            kind: AttackKind::Direct,
            seed: 0,
            pool_size: 500,
            influence_neighbors: 5,
            rate: 0.2,
            confidence: 1.0,
            global_deletions: false,
            surrogate_hidden: 16,
            surrogate_train: TrainConfig::default(),
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pool_size == 0 || self.influence_neighbors == 0 || self.surrogate_hidden == 0 {
            return Err(Error::Config("attack sizes must be positive".into()));
        }
        if !self.confidence.is_finite() || self.confidence < 0.0 {
            return Err(Error::Config(format!(
                "attack confidence {} must be finite and nonnegative",
                self.confidence
            )));
        }
        if self.kind == AttackKind::NonTargeted {
            check_rate(self.rate)?;
        }
        Ok(())
    }
}

pub(crate) fn check_rate(rate: f64) -> Result<()> {
    if rate > 0.0 && rate <= 0.25 {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "perturbation rate {rate} outside (0, 0.25]"
        )))
    }
}
