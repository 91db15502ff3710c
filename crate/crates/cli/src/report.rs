//! Delimited result tables and run manifests.
//!
//! Every table starts with `#` comment lines carrying the schema version, the
//! command and the full resolved configuration, followed by a CSV header and
//! rows. Files are rewritten from scratch on every run.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use eqv::analysis::accuracy_stats;
use eqv::ensemble::Strategy;
use serde::Serialize;

use crate::config::{ExperimentConfig, Task};

pub const SCHEMA_VERSION: u32 = 1;

/// `(mean, std, n_runs)` cells for a list of per-seed accuracies.
pub fn stat_cells(accuracies: &[f64]) -> Result<[String; 3]> {
    let r = accuracy_stats(accuracies)?;
    Ok([
        format!("{:.4}", r.mean),
        r.std.map(|s| format!("{s:.4}")).unwrap_or_default(),
        r.n_runs.to_string(),
    ])
}

/// Per-seed values joined with `;`.
pub fn runs_cell(accuracies: &[f64]) -> String {
    accuracies.iter().map(|a| format!("{a:.4}")).collect::<Vec<_>>().join(";")
}

pub fn summary(accuracies: &[f64]) -> Result<String> {
    Ok(accuracy_stats(accuracies)?.to_string())
}

fn header_lines(command: &str, config: &ExperimentConfig) -> String {
    let mut s = format!("# eqv results schema {SCHEMA_VERSION}\n# command: {command}\n# config:\n");
    for line in config.to_toml().lines() {
        s.push_str("#   ");
        s.push_str(line);
        s.push('\n');
    }
    s
}

/// Writes one table to `dir/name` and returns its path.
pub fn write_table(
    dir: &Path,
    name: &str,
    command: &str,
    config: &ExperimentConfig,
    columns: &[&str],
    rows: &[Vec<String>],
) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    file.write_all(header_lines(command, config).as_bytes())?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(columns)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(path)
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    command: &'a str,
    files: Vec<String>,
    config: &'a ExperimentConfig,
}

/// Writes `manifest-<command>.toml` listing the files produced by a run.
pub fn write_manifest(dir: &Path, command: &str, config: &ExperimentConfig, files: &[PathBuf]) -> Result<PathBuf> {
    let path = dir.join(format!("manifest-{command}.toml"));
    let files = files
        .iter()
        .map(|f| f.strip_prefix(dir).unwrap_or(f).display().to_string())
        .collect();
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        command,
        files,
        config,
    };
    std::fs::write(&path, toml::to_string(&manifest)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Published noiseless accuracy for a task.
pub fn reference_simulation(task: Task) -> &'static str {
    match task {
        Task::Mnist2 => "0.91",
        Task::Mnist4 => "0.71",
    }
}

/// Published single-classifier accuracy on MNIST-2 by machine and width.
pub fn reference_qubit_sweep(machine: &str, n_qubits: usize) -> Option<&'static str> {
    let row: [Option<&str>; 3] = match machine {
        "ibmq_lima" => [Some("0.65 ± 0.032"), Some("0.79 ± 0.025"), None],
        "ibmq_quito" => [Some("0.67 ± 0.019"), Some("0.82 ± 0.021"), None],
        "ibmq_belem" => [Some("0.64 ± 0.030"), Some("0.81 ± 0.045"), None],
        "ibm_oslo" => [Some("0.62 ± 0.038"), Some("0.77 ± 0.028"), Some("0.83 ± 0.017")],
        "ibm_nairobi" => [Some("0.61 ± 0.034"), Some("0.80 ± 0.037"), Some("0.81 ± 0.025")],
        _ => return None,
    };
    match n_qubits {
        2 => row[0],
        4 => row[1],
        6 => row[2],
        _ => None,
    }
}

/// Published comparison rows.
pub fn reference_compare(task: Task, setting: &str) -> Option<&'static str> {
    let v = match (task, setting) {
        (Task::Mnist2, "EQV") => "0.87 ± 0.020",
        (Task::Mnist2, "ibmq_lima") => "0.81 ± 0.038",
        (Task::Mnist2, "ibmq_quito") => "0.83 ± 0.052",
        (Task::Mnist2, "ibmq_belem") => "0.78 ± 0.027",
        (Task::Mnist4, "EQV") => "0.451 ± 0.027",
        (Task::Mnist4, "ibmq_lima") => "0.416 ± 0.046",
        (Task::Mnist4, "ibmq_quito") => "0.413 ± 0.057",
        (Task::Mnist4, "ibmq_belem") => "0.406 ± 0.021",
        (t, "simulation") => reference_simulation(t),
        _ => return None,
    };
    Some(v)
}

/// Published best ensemble size and accuracy.
pub fn reference_ensemble(task: Task, size: usize, strategy: Strategy) -> Option<&'static str> {
    match (task, size, strategy) {
        (Task::Mnist2, 7, Strategy::Plurality) => Some("0.87 (best size)"),
        (Task::Mnist4, 11, Strategy::Plurality) => Some("0.45 (best size)"),
        _ => None,
    }
}
