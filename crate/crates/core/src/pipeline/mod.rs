//! Networks and the training protocols: contrastive pre-training with the
//! auxiliary rule loss, frozen-encoder linear evaluation, and supervised
//! CE / CE+AUX baselines.

mod checkpoint;
mod network;
mod report;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use network::{encode_instance, panel_tensor, rule_head_predict, EncoderKind, NetConfig, NetworkSet};
pub use report::{EpochRecord, Phase, RuleMetric, RunReport};
pub use train::{
    ablate, evaluate_accuracy, linear_eval, pretrain_contrastive, pretrain_loss, run, split_validation, standard_variants,
    train_supervised, AblationCell,
};

use crate::error::{Error, Result};
use crate::losses::{ContrastOptions, LossWeights, NegativeScope, Normalization};
use crate::rpmgen::Layout;
use crate::rules::Scheme;

/// Training protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Contrastive pre-training with two augmented views, then linear eval.
    Mlcl,
    /// As [`Mode::Mlcl`] with one unaugmented view per instance.
    MlclNoAug,
    Ce,
    CeAuxDense,
    CeAuxSparse,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::Mlcl, Mode::MlclNoAug, Mode::Ce, Mode::CeAuxDense, Mode::CeAuxSparse];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Mlcl => "mlcl",
            Mode::MlclNoAug => "mlcl-noaug",
            Mode::Ce => "ce",
            Mode::CeAuxDense => "ce-aux-dense",
            Mode::CeAuxSparse => "ce-aux-sparse",
        }
    }

    pub fn is_contrastive(self) -> bool {
        matches!(self, Mode::Mlcl | Mode::MlclNoAug)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Mode::ALL.iter().map(|m| m.name()).collect();
            Error::InvalidArgument(format!("unknown mode `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub layout: Layout,
    pub encoder: EncoderKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub tau: f64,
    pub gamma: f64,
    pub beta: f64,
    pub augment: bool,
    /// Arbitrary-angle rotations; quarter turns only when false.
    pub free_rotation: bool,
    /// Meta-target encoding for the auxiliary head.
    pub scheme: Scheme,
    pub negatives: NegativeScope,
    pub normalization: Normalization,
    pub seed: u64,
    pub patience: usize,
    pub linear_epochs: usize,
    pub linear_lr: f64,
}

impl TrainConfig {
    pub fn new(layout: Layout) -> Self {
        Self {
            layout,
            encoder: EncoderKind::Patch,
            epochs: 100,
            batch_size: 128,
            learning_rate: 0.002,
            tau: 0.1,
            gamma: 1.0,
            beta: 10.0,
            augment: true,
            free_rotation: true,
            scheme: Scheme::Sparse,
            negatives: NegativeScope::All,
            normalization: Normalization::PositiveCount,
            seed: 0,
            patience: 10,
            linear_epochs: 100,
            linear_lr: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| {
            Err(Error::ConfigValue {
                key: key.into(),
                reason: reason.into(),
            })
        };
        if self.epochs == 0 {
            return bad("epochs", "must be positive");
        }
        if self.batch_size < 2 {
            return bad("batch_size", "must be at least 2");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive");
        }
        if !(self.linear_lr > 0.0 && self.linear_lr.is_finite()) {
            return bad("linear_lr", "must be positive");
        }
        if self.linear_epochs == 0 {
            return bad("linear_epochs", "must be positive");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau", "must be positive");
        }
        if self.patience == 0 {
            return bad("patience", "must be positive");
        }
        LossWeights::new(self.gamma, self.beta).map(|_| ())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            gamma: self.gamma,
            beta: self.beta,
        }
    }

    pub fn contrast_options(&self) -> ContrastOptions {
        ContrastOptions {
            normalization: self.normalization,
            negatives: self.negatives,
        }
    }

    pub fn net_config(&self, panel_size: u16) -> NetConfig {
        NetConfig::new(self.encoder, panel_size, self.layout.grammar().target_len(self.scheme))
    }
}
