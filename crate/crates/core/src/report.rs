//! CSV rows and JSON summaries for experiment results.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// One row per model for the texture-modulation experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulationRow {
    pub model: String,
    pub lambda: Option<f64>,
    pub mean_index: f64,
    pub responsive_fraction: f64,
    pub pairs: usize,
    pub entries: usize,
}

/// One row per (model, deletion size) for patch completion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionRow {
    pub model: String,
    pub deletion: usize,
    pub patches: usize,
    pub mean_mse: f64,
    pub std_mse: f64,
    pub mean_mse_to_corrupted: f64,
}

/// One row per (model, task) for classification.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifyRow {
    pub model: String,
    pub task: String,
    pub classes: usize,
    pub samples: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub chance: f64,
    pub binomial_p: f64,
}

/// One row per model for response statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsRow {
    pub model: String,
    pub units: usize,
    pub silent_units: usize,
    pub kurtosis_q1: f64,
    pub kurtosis_median: f64,
    pub kurtosis_q3: f64,
    pub mean_active: f64,
    pub mean_l1: f64,
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
