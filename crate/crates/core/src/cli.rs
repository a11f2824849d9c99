//! Flat `key = value` configuration, run manifests and the commands behind
//! the `mlcl` binary.
//!
//! Every run writes into `<out>/<command>[-<mode>]-<hash>` where `<hash>` is
//! derived from the manifest, so reports are never overwritten; a rerun of
//! the same manifest lands in a `-r2`, `-r3`, … sibling.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::losses::{NegativeScope, Normalization};
use crate::pipeline::{self, AblationCell, EncoderKind, Mode, RunReport, TrainConfig};
use crate::rpmgen::{self, Dataset, Layout};
use crate::rules::Scheme;

/// Environment variable selecting the worker count (default 1).
pub const WORKERS_ENV: &str = "MLCL_WORKERS";

/// Every recognised key with its default.
const KEYS: &[(&str, &str)] = &[
    ("layout", "center"),
    ("count", "2000"),
    ("seed", "0"),
    ("panel_size", "28"),
    ("encoder", "patch"),
    ("epochs", "100"),
    ("batch_size", "128"),
    ("learning_rate", "0.002"),
    ("tau", "0.1"),
    ("gamma", "1"),
    ("beta", "10"),
    ("augment", "true"),
    ("free_rotation", "true"),
    ("scheme", "sparse"),
    ("negatives", "all"),
    ("normalization", "positive-count"),
    ("patience", "10"),
    ("linear_epochs", "100"),
    ("linear_lr", "0.01"),
    ("test_dataset", ""),
    ("test_count", "500"),
    ("test_seed", "1000003"),
    ("ablate_betas", "0,1,5,10,15"),
    ("ablate_batches", "32,64,128"),
    ("ablate_negatives", "true,false"),
    ("ablate_augment", "true,false"),
];

/// Resolved configuration: defaults overlaid by the file, then overrides.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

fn valid_keys() -> String {
    KEYS.iter().map(|(k, _)| *k).collect::<Vec<_>>().join(", ")
}

fn value_error(key: &str, reason: impl Into<String>) -> Error {
    Error::ConfigValue {
        key: key.into(),
        reason: reason.into(),
    }
}

impl Config {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("config line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(Error::UnknownConfigKey {
                key: key.into(),
                valid: valid_keys(),
            }),
        }
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("override `{spec}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("known key")
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    fn parse_as<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key).parse::<T>().map_err(|e| value_error(key, e.to_string()))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        let items = self
            .get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<T>().map_err(|e| value_error(key, e.to_string())))
            .collect::<Result<Vec<T>>>()?;
        if items.is_empty() {
            return Err(value_error(key, "empty list"));
        }
        Ok(items)
    }

    pub fn layout(&self) -> Result<Layout> {
        self.get("layout").parse().map_err(|e: Error| value_error("layout", e.to_string()))
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse_as("seed")
    }

    pub fn panel_size(&self) -> Result<u16> {
        let s: u16 = self.parse_as("panel_size")?;
        if s < 8 {
            return Err(value_error("panel_size", "must be at least 8"));
        }
        Ok(s)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let negatives = match self.get("negatives") {
            "all" => NegativeScope::All,
            "others" => NegativeScope::Others,
            "off" => NegativeScope::Off,
            other => return Err(value_error("negatives", format!("`{other}` (all, others or off)"))),
        };
        let normalization = match self.get("normalization") {
            "positive-count" => Normalization::PositiveCount,
            "doubled" => Normalization::Doubled,
            other => return Err(value_error("normalization", format!("`{other}` (positive-count or doubled)"))),
        };
        let cfg = TrainConfig {
            layout: self.layout()?,
            encoder: self.get("encoder").parse::<EncoderKind>().map_err(|e| value_error("encoder", e.to_string()))?,
            epochs: self.parse_as("epochs")?,
            batch_size: self.parse_as("batch_size")?,
            learning_rate: self.parse_as("learning_rate")?,
            tau: self.parse_as("tau")?,
            gamma: self.parse_as("gamma")?,
            beta: self.parse_as("beta")?,
            augment: self.parse_as("augment")?,
            free_rotation: self.parse_as("free_rotation")?,
            scheme: self.get("scheme").parse::<Scheme>().map_err(|e| value_error("scheme", e.to_string()))?,
            negatives,
            normalization,
            seed: self.seed()?,
            patience: self.parse_as("patience")?,
            linear_epochs: self.parse_as("linear_epochs")?,
            linear_lr: self.parse_as("linear_lr")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Number of workers from [`WORKERS_ENV`].
pub fn workers() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::InvalidArgument(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

/// Maps an error to the process exit code: 1 usage, 2 data, 3 divergence.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Diverged { .. } => 3,
        Error::Io { .. }
        | Error::BadMagic
        | Error::Version { .. }
        | Error::Truncated(_)
        | Error::Checksum { .. }
        | Error::Corrupt { .. }
        | Error::DatasetMismatch(_)
        | Error::Json(_)
        | Error::Csv(_)
        | Error::Generation { .. } => 2,
        _ => 1,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub mode: Option<String>,
    pub config: BTreeMap<String, String>,
    /// SHA-256 of the input dataset file, hex.
    pub dataset_checksum: Option<String>,
    pub version: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn version() -> String {
    format!(
        "mlcl-core {} (dataset v{}, checkpoint v1)",
        env!("CARGO_PKG_VERSION"),
        rpmgen::FORMAT_VERSION
    )
}

impl RunManifest {
    pub fn new(command: &str, mode: Option<Mode>, config: &Config, dataset_checksum: Option<String>) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            mode: mode.map(|m| m.name().to_string()),
            config: config.entries().clone(),
            dataset_checksum,
            version: version(),
            seed: config.seed()?,
            started_unix: now(),
            finished_unix: 0,
        })
    }

    /// First 12 hex digits of the SHA-256 over everything but the timestamps.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        let mut field = |s: &str| {
            h.update((s.len() as u64).to_le_bytes());
            h.update(s.as_bytes());
        };
        field(&self.command);
        field(self.mode.as_deref().unwrap_or(""));
        for (k, v) in &self.config {
            field(k);
            field(v);
        }
        field(self.dataset_checksum.as_deref().unwrap_or(""));
        field(&self.version);
        field(&self.seed.to_string());
        hex::encode(h.finalize())[..12].to_string()
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Creates a fresh run directory, never reusing an existing one.
fn fresh_dir(out: &Path, stem: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut n = 1;
    loop {
        let name = if n == 1 { stem.to_string() } else { format!("{stem}-r{n}") };
        let dir = out.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => n += 1,
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenerateSummary {
    pub count: usize,
    pub layout: Layout,
    pub checksum: String,
}

/// Generates a dataset from `config` and writes it to `out`.
pub fn cmd_generate(config: &Config, out: &Path) -> Result<GenerateSummary> {
    let layout = config.layout()?;
    let count: usize = config.parse_as("count")?;
    let data = rpmgen::generate_dataset(layout, count, config.seed()?, config.panel_size()?, workers()?)?;
    let bytes = rpmgen::encode_dataset(&data)?;
    std::fs::write(out, &bytes).map_err(|e| Error::io(out, e))?;
    Ok(GenerateSummary {
        count,
        layout,
        checksum: sha256_hex(&bytes),
    })
}

fn load_dataset(path: &Path) -> Result<(Dataset, String)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let data = rpmgen::decode_dataset(&bytes)?;
    Ok((data, sha256_hex(&bytes)))
}

/// The held-out test set: `test_dataset` if given, otherwise generated from
/// `test_seed` and `test_count` with the training set's layout and size.
fn test_set(config: &Config, train: &Dataset) -> Result<Dataset> {
    let path = config.get("test_dataset");
    let test = if path.is_empty() {
        let count: usize = config.parse_as("test_count")?;
        rpmgen::generate_dataset(train.layout, count, config.parse_as("test_seed")?, train.panel_size, workers()?)?
    } else {
        load_dataset(Path::new(path))?.0
    };
    if test.layout != train.layout || test.panel_size != train.panel_size {
        return Err(Error::DatasetMismatch(format!(
            "test set is {} at {}px, training set is {} at {}px",
            test.layout, test.panel_size, train.layout, train.panel_size
        )));
    }
    if test.is_empty() {
        return Err(Error::DatasetMismatch("test set is empty".into()));
    }
    Ok(test)
}

fn check_layout(config: &Config, data: &Dataset) -> Result<()> {
    let layout = config.layout()?;
    if layout != data.layout {
        return Err(Error::DatasetMismatch(format!(
            "config layout is {layout}, dataset layout is {}",
            data.layout
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub report: RunReport,
}

/// Trains under `mode`, writing `manifest.json`, `report.json`,
/// `epochs.csv` and `checkpoint.mlck` into a fresh directory below `out`.
pub fn cmd_train(config: &Config, dataset: &Path, mode: Mode, out: &Path) -> Result<TrainOutcome> {
    let (data, checksum) = load_dataset(dataset)?;
    check_layout(config, &data)?;
    let cfg = config.train_config()?;
    let test = test_set(config, &data)?;
    let mut manifest = RunManifest::new("train", Some(mode), config, Some(checksum))?;
    let (net, report) = pipeline::run(mode, &data, &test, &cfg)?;
    manifest.finished_unix = now();
    let dir = fresh_dir(out, &format!("train-{mode}-{}", manifest.hash()))?;
    manifest.write(&dir)?;
    report.write(&dir.join("report.json"), &dir.join("epochs.csv"))?;
    pipeline::save_checkpoint(&net, &dir.join("checkpoint.mlck"))?;
    Ok(TrainOutcome { dir, manifest, report })
}

/// One row of the ablation summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub cell: String,
    pub beta: f64,
    pub batch_size: usize,
    pub negatives: bool,
    pub augment: bool,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub pretrain_epochs: usize,
    pub manifest: String,
}

/// The grid from the `ablate_*` keys: β × batch × negatives × augment.
pub fn ablation_grid(config: &Config) -> Result<Vec<AblationCell>> {
    let gamma: f64 = config.parse_as("gamma")?;
    let mut cells = Vec::new();
    for beta in config.list::<f64>("ablate_betas")? {
        for batch_size in config.list::<usize>("ablate_batches")? {
            for negatives in config.list::<bool>("ablate_negatives")? {
                for augment in config.list::<bool>("ablate_augment")? {
                    cells.push(AblationCell {
                        name: format!(
                            "beta{beta}-b{batch_size}-{}-{}",
                            if negatives { "neg" } else { "noneg" },
                            if augment { "aug" } else { "noaug" }
                        ),
                        gamma,
                        beta,
                        batch_size,
                        negatives,
                        augment,
                    });
                }
            }
        }
    }
    Ok(cells)
}

#[derive(Clone, Debug)]
pub struct AblateOutcome {
    pub dir: PathBuf,
    pub rows: Vec<AblationRow>,
}

fn cell_overrides(cell: &AblationCell) -> [(&'static str, String); 4] {
    [
        ("beta", cell.beta.to_string()),
        ("batch_size", cell.batch_size.to_string()),
        ("negatives", if cell.negatives { "all" } else { "off" }.to_string()),
        ("augment", cell.augment.to_string()),
    ]
}

/// Runs every grid cell (fanned out over [`workers`]), one report directory
/// per cell plus `summary.csv`.
pub fn cmd_ablate(config: &Config, dataset: &Path, out: &Path) -> Result<AblateOutcome> {
    let (data, checksum) = load_dataset(dataset)?;
    check_layout(config, &data)?;
    config.train_config()?;
    let test = test_set(config, &data)?;
    let cells = ablation_grid(config)?;
    let mut parent = RunManifest::new("ablate", None, config, Some(checksum.clone()))?;
    let dir = fresh_dir(out, &format!("ablate-{}", parent.hash()))?;

    let run_cell = |cell: &AblationCell| -> Result<AblationRow> {
        let mut cell_config = config.clone();
        for (k, v) in cell_overrides(cell) {
            cell_config.set(k, &v)?;
        }
        let cfg = cell_config.train_config()?;
        let mode = if cfg.augment { Mode::Mlcl } else { Mode::MlclNoAug };
        let mut manifest = RunManifest::new("train", Some(mode), &cell_config, Some(checksum.clone()))?;
        let (_, report) = pipeline::run(mode, &data, &test, &cfg)?;
        manifest.finished_unix = now();
        let cell_dir = dir.join(format!("{}-{}", cell.name, manifest.hash()));
        std::fs::create_dir_all(&cell_dir).map_err(|e| Error::io(&cell_dir, e))?;
        manifest.write(&cell_dir)?;
        report.write(&cell_dir.join("report.json"), &cell_dir.join("epochs.csv"))?;
        let pretrain_epochs = report.epochs.iter().filter(|e| e.phase == pipeline::Phase::Pretrain).count();
        Ok(AblationRow {
            cell: cell.name.clone(),
            beta: cell.beta,
            batch_size: cell.batch_size,
            negatives: cell.negatives,
            augment: cell.augment,
            val_accuracy: report.val_accuracy,
            test_accuracy: report.test_accuracy,
            pretrain_epochs,
            manifest: manifest.hash(),
        })
    };

    let n_workers = workers()?.min(cells.len()).max(1);
    let mut results: Vec<Option<Result<AblationRow>>> = (0..cells.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..n_workers)
            .map(|w| {
                let cells = &cells;
                let run_cell = &run_cell;
                s.spawn(move || {
                    (w..cells.len())
                        .step_by(n_workers)
                        .map(|i| (i, run_cell(&cells[i])))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("ablation worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    let rows = results.into_iter().map(|r| r.expect("every cell ran")).collect::<Result<Vec<_>>>()?;

    let path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    parent.finished_unix = now();
    parent.write(&dir)?;
    Ok(AblateOutcome { dir, rows })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyFailure {
    pub index: usize,
    pub seed: u64,
    pub correct_index: u8,
    /// 1-based choices satisfying every rule.
    pub satisfying: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub count: usize,
    pub failures: Vec<VerifyFailure>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks that every instance has exactly its recorded answer.
pub fn cmd_verify(dataset: &Path) -> Result<VerifyReport> {
    let (data, _) = load_dataset(dataset)?;
    let mut failures = Vec::new();
    for (index, inst) in data.instances.iter().enumerate() {
        let satisfying = rpmgen::verify(inst)?;
        if satisfying != [inst.correct_index] {
            failures.push(VerifyFailure {
                index,
                seed: inst.seed,
                correct_index: inst.correct_index,
                satisfying,
            });
        }
    }
    Ok(VerifyReport {
        count: data.len(),
        failures,
    })
}

/// Human-readable summary of a run directory, an ablation directory or a
/// `report.json` file.
pub fn cmd_report(path: &Path) -> Result<String> {
    let summary = path.join("summary.csv");
    if summary.is_file() {
        let mut r = csv::Reader::from_path(&summary)?;
        let rows = r.deserialize::<AblationRow>().collect::<std::result::Result<Vec<_>, _>>()?;
        let mut s = format!("{} ablation cells\n", rows.len());
        for row in rows {
            let _ = writeln!(
                s,
                "{:<28} test {:.4} val {:.4} epochs {}",
                row.cell, row.test_accuracy, row.val_accuracy, row.pretrain_epochs
            );
        }
        return Ok(s);
    }
    let file = if path.is_dir() { path.join("report.json") } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    let report = RunReport::from_json(&text)?;
    let mut s = String::new();
    let _ = writeln!(s, "mode {}  seed {}  layout {}", report.mode, report.seed, report.config.layout);
    let _ = writeln!(
        s,
        "instances: train {} val {} test {}",
        report.train_instances, report.val_instances, report.test_instances
    );
    for (phase, epoch) in &report.best_epochs {
        let ran = report.epochs.iter().filter(|e| e.phase == *phase).count();
        let _ = writeln!(s, "{phase}: {ran} epochs, best {epoch}");
    }
    let _ = writeln!(s, "val accuracy {:.4}  test accuracy {:.4}", report.val_accuracy, report.test_accuracy);
    if !report.rule_metrics.is_empty() {
        let with_support: Vec<_> = report.rule_metrics.iter().filter(|m| m.support > 0).collect();
        let mean = |f: fn(&pipeline::RuleMetric) -> f64| {
            with_support.iter().map(|m| f(m)).sum::<f64>() / with_support.len().max(1) as f64
        };
        let _ = writeln!(
            s,
            "rule head: mean precision {:.4}, mean recall {:.4} over {} rules present",
            mean(|m| m.precision),
            mean(|m| m.recall),
            with_support.len()
        );
    }
    let _ = writeln!(s, "wall clock {:.1}s", report.wall_clock_seconds);
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_build_a_valid_train_config() {
        let cfg = Config::default().train_config().unwrap();
        assert_eq!(cfg, TrainConfig::new(Layout::Center));
    }

    #[test]
    fn parse_comments_and_overrides() {
        let mut c = Config::parse("# test\nlayout = 2x2grid\n\nbeta=5 # inline\n").unwrap();
        c.apply_override("tau=0.5").unwrap();
        assert_eq!(c.get("layout"), "2x2grid");
        assert_eq!(c.get("beta"), "5");
        assert_eq!(c.train_config().unwrap().tau, 0.5);
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let err = Config::parse("bogus = 1").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus") && msg.contains("learning_rate") && msg.contains("layout"), "{msg}");
        assert_eq!(exit_code(&err), 1);
    }

    #[test]
    fn bad_values_are_reported_by_key() {
        let mut c = Config::default();
        c.set("epochs", "zero").unwrap();
        assert!(matches!(c.train_config(), Err(Error::ConfigValue { key, .. }) if key == "epochs"));
        let mut c = Config::default();
        c.set("layout", "hexagon").unwrap();
        assert!(matches!(c.layout(), Err(Error::ConfigValue { key, .. }) if key == "layout"));
    }

    #[test]
    fn manifest_hash_ignores_timestamps() {
        let c = Config::default();
        let a = RunManifest::new("train", Some(Mode::Ce), &c, Some("ab".into())).unwrap();
        let mut b = a.clone();
        b.started_unix += 100;
        b.finished_unix = 7;
        assert_eq!(a.hash(), b.hash());
        b.config.insert("beta".into(), "1".into());
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn grid_has_sixty_cells_by_default() {
        let cells = ablation_grid(&Config::default()).unwrap();
        assert_eq!(cells.len(), 60);
        assert!(cells.iter().any(|c| c.beta == 10.0));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::BadMagic), 2);
        assert_eq!(
            exit_code(&Error::Diverged {
                epoch: 1,
                reason: "nan".into()
            }),
            3
        );
        assert_eq!(exit_code(&Error::InvalidArgument("x".into())), 1);
    }
}
