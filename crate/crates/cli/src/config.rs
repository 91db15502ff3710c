//! Experiment configuration: a TOML file with sections, overridable from
//! the command line.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use eqv::ensemble::Strategy;
use eqv::noise::{find_profile, load_profiles, load_profiles_file, MachineProfile};
use eqv::vqc::{Optimizer, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Mnist2,
    Mnist4,
}

impl Task {
    pub fn digits(self) -> Vec<u8> {
        match self {
            Task::Mnist2 => vec![1, 9],
            Task::Mnist4 => vec![1, 4, 7, 9],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Mnist2 => "mnist2",
            Task::Mnist4 => "mnist4",
        }
    }

    /// Default number of entangling blocks.
    pub fn n_blocks(self) -> usize {
        match self {
            Task::Mnist2 => 4,
            Task::Mnist4 => 6,
        }
    }

    /// Ensemble size used for the machine comparison.
    pub fn compare_size(self) -> usize {
        match self {
            Task::Mnist2 => 7,
            Task::Mnist4 => 11,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "mnist2" => Ok(Task::Mnist2),
            "mnist4" => Ok(Task::Mnist4),
            _ => bail!("unknown task {s:?} (expected mnist2 or mnist4)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub images: PathBuf,
    pub labels: PathBuf,
    pub n_train: usize,
    pub n_test: usize,
    /// Trailing training samples used to score classifiers for accuracy weights.
    pub validation: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            images: "data/mnist5k-images-idx3-ubyte".into(),
            labels: "data/mnist5k-labels-idx1-ubyte".into(),
            n_train: 300,
            n_test: 30,
            validation: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 100,
            learning_rate: 0.05,
            optimizer: Optimizer::Adam,
        }
    }
}

impl TrainSettings {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
            optimizer: self.optimizer,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    /// Width of the classifiers for train, compare, sweep-ensemble and impact.
    pub n_qubits: usize,
    /// Widths visited by sweep-qubits.
    pub qubit_counts: Vec<usize>,
    /// Entangling blocks per circuit; defaults per task.
    pub n_blocks: Option<usize>,
    pub n_variants: usize,
    pub ensemble_sizes: Vec<usize>,
    /// Ensemble size for compare; defaults per task.
    pub compare_size: Option<usize>,
    /// Machines the ensemble runs on.
    pub machines: Vec<String>,
    /// Machines visited by sweep-qubits.
    pub sweep_machines: Vec<String>,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    pub impact_bins: usize,
    pub out: PathBuf,
    /// Optional TOML file of extra `[[machine]]` profiles.
    pub profiles: Option<PathBuf>,
    pub data: DataConfig,
    pub train: TrainSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let names = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            task: Task::Mnist2,
            n_qubits: 4,
            qubit_counts: vec![2, 4, 6],
            n_blocks: None,
            n_variants: 3,
            ensemble_sizes: vec![3, 5, 7, 9, 11],
            compare_size: None,
            machines: names(&["ibmq_lima", "ibmq_quito", "ibmq_belem"]),
            sweep_machines: names(&["ibmq_lima", "ibmq_quito", "ibmq_belem", "ibm_oslo", "ibm_nairobi"]),
            strategies: Strategy::ALL.to_vec(),
            seeds: vec![0, 1, 2, 3, 4],
            impact_bins: 20,
            out: "results".into(),
            profiles: None,
            data: DataConfig::default(),
            train: TrainSettings::default(),
        }
    }
}

/// Command-line values that replace config keys when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub task: Option<Task>,
    pub qubits: Option<Vec<usize>>,
    pub sizes: Option<Vec<usize>>,
    pub machines: Option<Vec<String>>,
    pub strategies: Option<Vec<Strategy>>,
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(task) = o.task {
            self.task = task;
        }
        if let Some(q) = o.qubits {
            if let Some(&first) = q.first() {
                self.n_qubits = first;
            }
            self.qubit_counts = q;
        }
        if let Some(s) = o.sizes {
            self.ensemble_sizes = s;
        }
        if let Some(m) = o.machines {
            self.sweep_machines = m.clone();
            self.machines = m;
        }
        if let Some(s) = o.strategies {
            self.strategies = s;
        }
        if let Some(s) = o.seeds {
            self.seeds = s;
        }
        if let Some(out) = o.out {
            self.out = out;
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks.unwrap_or_else(|| self.task.n_blocks())
    }

    pub fn compare_size(&self) -> usize {
        self.compare_size.unwrap_or_else(|| self.task.compare_size())
    }

    /// Built-in profiles followed by any from the profiles file.
    pub fn all_profiles(&self) -> Result<Vec<MachineProfile>> {
        let mut profiles = load_profiles();
        if let Some(path) = &self.profiles {
            for p in load_profiles_file(path).with_context(|| format!("loading {}", path.display()))? {
                profiles.retain(|q| q.name != p.name);
                profiles.push(p);
            }
        }
        Ok(profiles)
    }

    pub fn resolve_profiles(&self, names: &[String]) -> Result<Vec<MachineProfile>> {
        let all = self.all_profiles()?;
        names.iter().map(|n| Ok(find_profile(&all, n)?.clone())).collect()
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.seeds.is_empty(), "seeds must not be empty");
        ensure!(self.n_qubits >= 2, "n_qubits must be at least 2");
        ensure!(self.qubit_counts.iter().all(|&q| q >= 2), "qubit_counts entries must be at least 2");
        ensure!(self.n_blocks() >= 1, "n_blocks must be at least 1");
        ensure!(self.n_variants >= 1, "n_variants must be at least 1");
        ensure!(!self.machines.is_empty(), "machines must not be empty");
        ensure!(!self.strategies.is_empty(), "strategies must not be empty");
        ensure!(
            self.ensemble_sizes.iter().all(|&s| s >= 1),
            "ensemble sizes must be at least 1"
        );
        ensure!(self.impact_bins >= 1, "impact_bins must be at least 1");
        ensure!(
            self.data.validation <= self.data.n_train,
            "validation split larger than the training set"
        );
        self.train.train_config(0).validate()?;
        self.resolve_profiles(&self.machines)?;
        self.resolve_profiles(&self.sweep_machines)?;
        Ok(())
    }
}
