//! Training hyperparameters. Defaults follow the reference protocol.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ablation switches. All enabled is the full method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Toggles {
    pub attract_repel: bool,
    pub self_training: bool,
    pub repel_unrelated: bool,
    pub repel_different: bool,
    /// When off, the context map stays at the identity.
    pub adapt_context: bool,
    /// Whether a sense counts as its own coarse-class sibling in reranking.
    #[serde(default)]
    pub csi_include_self: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Self {
            attract_repel: true,
            self_training: true,
            repel_unrelated: true,
            repel_different: true,
            adapt_context: true,
            csi_include_self: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub alpha: f64,
    pub epsilon: f64,
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Hidden width of both residual maps; `None` means the embedding dim.
    pub hidden: Option<usize>,
    pub seed: u64,
    pub toggles: Toggles,
    pub self_train_fraction: f64,
    /// Cap on hard negatives drawn per anchor.
    pub max_hard_negatives: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            alpha: 0.2,
            epsilon: 0.015,
            beta: 64.0,
            learning_rate: 0.001,
            epochs: 15,
            hidden: None,
            seed: 0,
            toggles: Toggles::default(),
            self_train_fraction: 1.0,
            max_hard_negatives: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be a finite nonnegative number");
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be a finite nonnegative number");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.hidden == Some(0) {
            return bad("hidden width must be positive");
        }
        if !(self.self_train_fraction > 0.0 && self.self_train_fraction <= 1.0) {
            return bad("self-training fraction must lie in (0, 1]");
        }
        if !self.toggles.attract_repel && !self.toggles.self_training {
            return bad("at least one of the two objectives must be enabled");
        }
        Ok(())
    }

    pub fn hidden_for(&self, dim: usize) -> usize {
        self.hidden.unwrap_or(dim)
    }
}
