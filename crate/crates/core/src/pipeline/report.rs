use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Pretrain,
    Linear,
    Supervised,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Pretrain => "pretrain",
            Phase::Linear => "linear",
            Phase::Supervised => "supervised",
        })
    }
}

/// Scalars of one epoch. Losses are means per anchor (per view for the
/// contrastive and auxiliary terms, per instance for CE).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: Phase,
    /// 1-based within the phase.
    pub epoch: usize,
    pub train_loss: f64,
    pub contrastive: f64,
    pub aux: f64,
    pub ce: f64,
    pub val_loss: f64,
    /// Answer accuracy on the training split; absent during pre-training.
    pub train_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleMetric {
    pub index: usize,
    pub name: String,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: String,
    pub config: TrainConfig,
    pub seed: u64,
    pub train_instances: usize,
    pub val_instances: usize,
    pub test_instances: usize,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept, per phase that ran.
    pub best_epochs: Vec<(Phase, usize)>,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub rule_metrics: Vec<RuleMetric>,
    /// Hex FNV-1a of the final encoder weights.
    pub encoder_fingerprint: String,
    pub wall_clock_seconds: f64,
}

impl RunReport {
    /// Everything except the wall clock, for reproducibility checks.
    pub fn same_scalars(&self, other: &RunReport) -> bool {
        let mut a = self.clone();
        a.wall_clock_seconds = other.wall_clock_seconds;
        bits_eq(&a, other)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Per-epoch scalars as CSV.
    pub fn epochs_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.epochs {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write(&self, json_path: &Path, csv_path: &Path) -> Result<()> {
        std::fs::write(json_path, self.to_json()?).map_err(|e| Error::io(json_path, e))?;
        std::fs::write(csv_path, self.epochs_csv()?).map_err(|e| Error::io(csv_path, e))
    }

    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }
}

fn bits_eq(a: &RunReport, b: &RunReport) -> bool {
    match (serde_json::to_value(a), serde_json::to_value(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}
