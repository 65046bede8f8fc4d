//! File formats emitted and consumed by the commands: JSONL datasets, the
//! dataset manifest, metrics CSVs, and parameter JSON.

use crate::CliError;
use nalgebra::DVector;
use qreforge::families::FamilySpec;
use qreforge::learning::{EpochMetrics, ObservationMask, ObservationRecord};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// Records the provenance of a generated dataset: the family, the exact
/// ground truth, and the seeds, so training runs can score themselves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub family: FamilySpec,
    pub mask: ObservationMask,
    pub sizes: Vec<usize>,
    pub truth_raw: Vec<f64>,
    pub truth_natural: Vec<f64>,
    pub data_seed: u64,
}

impl Manifest {
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::input(format!("manifest serialization: {e}")))?;
        fs::write(path, text + "\n")
            .map_err(|e| CliError::input(format!("writing {}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("reading {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::input(format!("bad manifest {}: {e}", path.display())))
    }
}

pub fn dataset_filename(spec: &FamilySpec, size: usize) -> String {
    format!("{}_n{}.jsonl", spec.name(), size)
}

pub fn write_records(path: &Path, records: &[ObservationRecord]) -> Result<(), CliError> {
    let mut text = String::new();
    for record in records {
        let line = serde_json::to_string(record)
            .map_err(|e| CliError::input(format!("record serialization: {e}")))?;
        text.push_str(&line);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CliError::input(format!("writing {}: {e}", path.display())))
}

pub fn read_records(path: &Path) -> Result<Vec<ObservationRecord>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("reading {}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line)
                .map_err(|e| CliError::input(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn write_metrics_csv(path: &Path, metrics: &[EpochMetrics]) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::input(format!("writing {}: {e}", path.display())))?;
    writer
        .write_record([
            "epoch",
            "train_loss",
            "test_loss",
            "param_mse",
            "strategy_mse",
        ])
        .map_err(|e| CliError::input(format!("csv: {e}")))?;
    for m in metrics {
        writer
            .write_record([
                m.epoch.to_string(),
                m.train_loss.to_string(),
                m.test_loss.to_string(),
                m.param_mse.to_string(),
                m.strategy_mse.to_string(),
            ])
            .map_err(|e| CliError::input(format!("csv: {e}")))?;
    }
    writer
        .flush()
        .map_err(|e| CliError::input(format!("csv: {e}")))
}

#[derive(Debug, Serialize)]
pub struct ParamsFile<'a> {
    pub family: &'a FamilySpec,
    pub raw: Vec<f64>,
    pub natural: Vec<f64>,
}

pub fn write_params_json(
    path: &Path,
    spec: &FamilySpec,
    raw: &DVector<f64>,
) -> Result<(), CliError> {
    let file = ParamsFile {
        family: spec,
        raw: raw.iter().copied().collect(),
        natural: spec.natural_params(raw).iter().copied().collect(),
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| CliError::input(format!("params serialization: {e}")))?;
    fs::write(path, text + "\n")
        .map_err(|e| CliError::input(format!("writing {}: {e}", path.display())))
}

/// The solution JSON printed by `solve`.
pub fn solution_json(u: &[f64], v: &[f64], residual: f64, iterations: usize) -> String {
    serde_json::json!({
        "u": u,
        "v": v,
        "residual": residual,
        "iterations": iterations,
    })
    .to_string()
}

pub fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path)
        .map_err(|e| CliError::input(format!("creating {}: {e}", path.display())))
}
