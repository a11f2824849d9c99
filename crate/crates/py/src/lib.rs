//! Python bindings: dataset generation and verification, rule encodings,
//! the contrastive losses and the training commands.

use std::collections::HashMap;
use std::path::PathBuf;

use mlcl_core::cli::{self, Config};
use mlcl_core::losses::{self, ContrastBatch};
use mlcl_core::numerics::Tensor;
use mlcl_core::pipeline::Mode;
use mlcl_core::rpmgen::{self, Layout};
use mlcl_core::rules::{self, Grammar, Scheme};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

fn err(e: mlcl_core::Error) -> PyErr {
    match cli::exit_code(&e) {
        1 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn layout(name: &str) -> PyResult<Layout> {
    name.parse().map_err(err)
}

fn grammar(name: &str) -> PyResult<Grammar> {
    match name {
        "pair" | "pair-style" => Ok(Grammar::PairStyle),
        "triple" | "triple-style" => Ok(Grammar::TripleStyle),
        _ => Err(PyValueError::new_err(format!("unknown grammar `{name}` (pair or triple)"))),
    }
}

/// All rules of a grammar ("pair" or "triple"), in sparse-index order.
#[pyfunction]
fn rule_space(grammar_name: &str) -> PyResult<Vec<String>> {
    Ok(rules::enumerate_rule_space(grammar(grammar_name)?).iter().map(|r| r.to_string()).collect())
}

/// One generated instance as a dict.
#[pyfunction]
#[pyo3(signature = (layout_name, seed, panel_size = 28))]
fn generate_instance<'py>(py: Python<'py>, layout_name: &str, seed: u64, panel_size: u16) -> PyResult<Bound<'py, PyDict>> {
    let inst = rpmgen::generate_instance(layout(layout_name)?, seed, panel_size).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("layout", inst.layout.to_string())?;
    d.set_item("seed", inst.seed)?;
    d.set_item("correct_index", inst.correct_index)?;
    d.set_item("rules", inst.structure.rules().iter().map(|r| r.to_string()).collect::<Vec<_>>())?;
    d.set_item("sparse", rules::encode(&inst.structure, Scheme::Sparse).map_err(err)?.to_bit_string())?;
    d.set_item("dense", rules::encode(&inst.structure, Scheme::Dense).map_err(err)?.to_bit_string())?;
    d.set_item("panel_size", panel_size)?;
    let rasters: Vec<Bound<'py, PyBytes>> = inst.rasters.iter().map(|r| PyBytes::new(py, r.pixels())).collect();
    d.set_item("rasters", rasters)?;
    d.set_item("satisfying", rpmgen::verify(&inst).map_err(err)?.into_iter().map(usize::from).collect::<Vec<_>>())?;
    Ok(d)
}

fn to_config(config: Option<HashMap<String, String>>) -> PyResult<Config> {
    let mut c = Config::default();
    for (k, v) in config.unwrap_or_default() {
        c.set(&k, &v).map_err(err)?;
    }
    Ok(c)
}

/// Writes a dataset file; returns (count, sha256).
#[pyfunction]
#[pyo3(signature = (out, config = None))]
fn generate_dataset(out: PathBuf, config: Option<HashMap<String, String>>) -> PyResult<(usize, String)> {
    let s = cli::cmd_generate(&to_config(config)?, &out).map_err(err)?;
    Ok((s.count, s.checksum))
}

/// Returns (count, indices of instances without a unique answer).
#[pyfunction]
fn verify_dataset(path: PathBuf) -> PyResult<(usize, Vec<usize>)> {
    let r = cli::cmd_verify(&path).map_err(err)?;
    Ok((r.count, r.failures.iter().map(|f| f.index).collect()))
}

fn batch(z: Vec<Vec<f64>>, zneg: Option<Vec<Vec<f64>>>, labelsets: Vec<Vec<usize>>, tau: f64) -> PyResult<ContrastBatch> {
    let b = z.len();
    let z = Tensor::from_rows(&z).map_err(err)?;
    let zneg = match zneg {
        Some(rows) => {
            if b == 0 || rows.len() % b != 0 {
                return Err(PyValueError::new_err("zneg must hold K rows per instance"));
            }
            let k = rows.len() / b;
            let p = z.cols();
            Some(Tensor::from_rows(&rows).and_then(|t| t.reshape(&[b, k, p])).map_err(err)?)
        }
        None => None,
    };
    ContrastBatch::new(z, zneg, labelsets, tau).map_err(err)
}

/// Multi-label contrastive loss; with `zneg` (K rows per instance,
/// instance-major) the incorrect completions join every denominator.
#[pyfunction]
#[pyo3(signature = (z, labelsets, tau, zneg = None))]
fn mlc_loss(z: Vec<Vec<f64>>, labelsets: Vec<Vec<usize>>, tau: f64, zneg: Option<Vec<Vec<f64>>>) -> PyResult<f64> {
    let with_neg = zneg.is_some();
    let b = batch(z, zneg, labelsets, tau)?;
    if with_neg {
        losses::mlc_loss_with_negatives(&b).map_err(err)
    } else {
        losses::mlc_loss(&b).map_err(err)
    }
}

/// Supervised contrastive loss over singleton labelsets.
#[pyfunction]
fn supcon_loss(z: Vec<Vec<f64>>, labels: Vec<usize>, tau: f64) -> PyResult<f64> {
    let b = batch(z, None, labels.into_iter().map(|l| vec![l]).collect(), tau)?;
    losses::supcon_loss(&b).map_err(err)
}

/// Trains under `mode` and returns (run directory, report JSON).
#[pyfunction]
#[pyo3(signature = (dataset, mode, out, config = None))]
fn train(dataset: PathBuf, mode: &str, out: PathBuf, config: Option<HashMap<String, String>>) -> PyResult<(String, String)> {
    let mode: Mode = mode.parse().map_err(err)?;
    let o = cli::cmd_train(&to_config(config)?, &dataset, mode, &out).map_err(err)?;
    Ok((o.dir.display().to_string(), o.report.to_json().map_err(err)?))
}

/// Text summary of a run or ablation directory.
#[pyfunction]
fn report(path: PathBuf) -> PyResult<String> {
    cli::cmd_report(&path).map_err(err)
}

#[pymodule]
pub fn mlcl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(rule_space, m)?)?;
    m.add_function(wrap_pyfunction!(generate_instance, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(verify_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(mlc_loss, m)?)?;
    m.add_function(wrap_pyfunction!(supcon_loss, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
