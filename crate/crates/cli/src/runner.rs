//! Experiment execution: data splits, trained models and the measurements
//! behind each report.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use eqv::analysis::{impact_distribution, impact_factor, mean_impacts, ImpactDensity, ImpactRecord};
use eqv::ansatz::{build_hea_with, enumerate_layouts, generate_variants, HeaOptions};
use eqv::data::{build_subset, load_idx, DatasetSplit, RawImage};
use eqv::ensemble::{accuracy_weights, allocate_variants, collect_votes, score_votes, Backend, SampleVotes, Strategy};
use eqv::noise::MachineProfile;
use eqv::rng::derive_seed;
use eqv::vqc::{accuracy, train, ClassifierModel, Executor};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Task, TrainSettings};

const STREAM_INIT: u64 = 1;
const STREAM_TRAIN: u64 = 2;
const STREAM_SINGLE: u64 = 3;
const STREAM_ALLOCATION: u64 = 4;
const STREAM_VOTES: u64 = 5;
const STREAM_WEIGHTS: u64 = 6;

/// Identifies a trained model file; a cached file is reused only when its
/// key matches exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelKey {
    task: Task,
    n_qubits: usize,
    n_blocks: usize,
    seed: u64,
    variant_id: usize,
    n_train: usize,
    n_test: usize,
    images: PathBuf,
    train: TrainSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    key: ModelKey,
    model: ClassifierModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRow {
    pub seed: u64,
    pub variant_id: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// Per-seed accuracies of one setting; `None` when the circuit does not fit
/// on the machine.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitCell {
    pub setting: String,
    pub n_qubits: usize,
    pub accuracies: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRow {
    pub size: usize,
    pub strategy: Strategy,
    pub accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettingRow {
    pub setting: String,
    pub accuracies: Vec<f64>,
}

/// Vote records of one ensemble run.
#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub seed: u64,
    pub allocation: Vec<usize>,
    pub votes: Vec<SampleVotes>,
    pub weights: Option<Vec<f64>>,
}

impl EnsembleRun {
    pub fn accuracy(&self, strategy: Strategy) -> Result<f64> {
        let weights = match strategy {
            Strategy::AccuracyWeighted => Some(self.weights.as_deref().context("weights were not computed")?),
            _ => None,
        };
        Ok(score_votes(&self.votes, strategy, weights)?.accuracy)
    }

    pub fn predictions(&self, strategy: Strategy) -> Result<Vec<u8>> {
        let weights = match strategy {
            Strategy::AccuracyWeighted => Some(self.weights.as_deref().context("weights were not computed")?),
            _ => None,
        };
        Ok(score_votes(&self.votes, strategy, weights)?.predictions)
    }
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub size: usize,
    pub machines: Vec<String>,
    /// EQV (plurality), each single machine, then noiseless simulation.
    pub rows: Vec<SettingRow>,
    /// Every configured strategy scored on the same vote records.
    pub strategies: Vec<(Strategy, Vec<f64>)>,
    pub runs: Vec<EnsembleRun>,
}

#[derive(Debug, Clone)]
pub struct ImpactSeed {
    pub seed: u64,
    pub records: Vec<ImpactRecord>,
    pub mean_correct: Option<f64>,
    pub mean_wrong: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ImpactReport {
    pub per_seed: Vec<ImpactSeed>,
    /// Densities over the records of all seeds.
    pub density: ImpactDensity,
}

pub struct Experiment {
    config: ExperimentConfig,
    images: Vec<RawImage>,
    profiles: Vec<MachineProfile>,
    model_dir: Option<PathBuf>,
    splits: HashMap<(usize, u64), DatasetSplit>,
    models: HashMap<(usize, u64), Vec<ClassifierModel>>,
}

impl Experiment {
    /// Loads the dataset; trained models are cached under `<out>/models`.
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let images = load_idx(&config.data.images, &config.data.labels).with_context(|| {
            format!(
                "loading {} / {}",
                config.data.images.display(),
                config.data.labels.display()
            )
        })?;
        let profiles = config.all_profiles()?;
        let model_dir = Some(config.out.join("models"));
        Ok(Self {
            config,
            images,
            profiles,
            model_dir,
            splits: HashMap::new(),
            models: HashMap::new(),
        })
    }

    /// Keeps trained models in memory only.
    pub fn without_model_files(mut self) -> Self {
        self.model_dir = None;
        self
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    fn profile(&self, name: &str) -> Result<&MachineProfile> {
        Ok(eqv::noise::find_profile(&self.profiles, name)?)
    }

    fn machine_index(&self, name: &str) -> u64 {
        self.profiles.iter().position(|p| p.name == name).unwrap_or(usize::MAX) as u64
    }

    pub fn split(&mut self, n_qubits: usize, seed: u64) -> Result<DatasetSplit> {
        if let Some(s) = self.splits.get(&(n_qubits, seed)) {
            return Ok(s.clone());
        }
        let d = &self.config.data;
        let split = build_subset(&self.images, &self.config.task.digits(), d.n_train, d.n_test, n_qubits, seed)?;
        self.splits.insert((n_qubits, seed), split.clone());
        Ok(split)
    }

    /// Variant count actually used at this width.
    pub fn variant_count(&self, n_qubits: usize) -> Result<usize> {
        let base = build_hea_with(n_qubits, self.hea_options())?;
        if n_qubits > 7 {
            return Ok(self.config.n_variants);
        }
        Ok(self.config.n_variants.min(enumerate_layouts(&base).len()))
    }

    fn hea_options(&self) -> HeaOptions {
        HeaOptions {
            n_blocks: self.config.n_blocks(),
            ..HeaOptions::default()
        }
    }

    fn model_path(&self, dir: &Path, n_qubits: usize, seed: u64, variant_id: usize) -> PathBuf {
        dir.join(format!(
            "{}-q{}-b{}-s{}-v{}.toml",
            self.config.task, n_qubits, self.config.n_blocks(), seed, variant_id
        ))
    }

    fn model_key(&self, n_qubits: usize, seed: u64, variant_id: usize) -> ModelKey {
        ModelKey {
            task: self.config.task,
            n_qubits,
            n_blocks: self.config.n_blocks(),
            seed,
            variant_id,
            n_train: self.config.data.n_train,
            n_test: self.config.data.n_test,
            images: self.config.data.images.clone(),
            train: self.config.train.clone(),
        }
    }

    /// Trained variants for one width and seed, from cache when possible.
    pub fn models(&mut self, n_qubits: usize, seed: u64) -> Result<Vec<ClassifierModel>> {
        if let Some(m) = self.models.get(&(n_qubits, seed)) {
            return Ok(m.clone());
        }
        let split = self.split(n_qubits, seed)?;
        let base = build_hea_with(n_qubits, self.hea_options())?;
        let variants = generate_variants(&base, self.variant_count(n_qubits)?, seed)?;
        if let Some(dir) = &self.model_dir {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let digits = self.config.task.digits();
        let models = variants
            .into_par_iter()
            .map(|variant| {
                let id = variant.variant_id;
                let key = self.model_key(n_qubits, seed, id);
                let path = self.model_dir.as_ref().map(|d| self.model_path(d, n_qubits, seed, id));
                if let Some(cached) = path.as_ref().and_then(|p| read_model(p, &key)) {
                    return Ok(cached);
                }
                let init = ClassifierModel::init(variant, digits.clone(), derive_seed(seed, &[STREAM_INIT, id as u64]))?;
                let cfg = self.config.train.train_config(derive_seed(seed, &[STREAM_TRAIN, id as u64]));
                let model = train(&init, &split.train, &cfg)?;
                if let Some(p) = &path {
                    let file = ModelFile { key, model: model.clone() };
                    std::fs::write(p, toml::to_string(&file)?).with_context(|| format!("writing {}", p.display()))?;
                }
                Ok(model)
            })
            .collect::<Result<Vec<_>>>()?;
        self.models.insert((n_qubits, seed), models.clone());
        Ok(models)
    }

    /// Files holding the models of one width and seed.
    pub fn model_files(&self, n_qubits: usize, seed: u64) -> Result<Vec<PathBuf>> {
        let Some(dir) = &self.model_dir else {
            return Ok(Vec::new());
        };
        Ok((0..self.variant_count(n_qubits)?)
            .map(|v| self.model_path(dir, n_qubits, seed, v))
            .collect())
    }

    pub fn train_report(&mut self) -> Result<Vec<TrainRow>> {
        let n = self.config.n_qubits;
        let mut rows = Vec::new();
        for seed in self.config.seeds.clone() {
            let split = self.split(n, seed)?;
            for model in self.models(n, seed)? {
                rows.push(TrainRow {
                    seed,
                    variant_id: model.variant.variant_id,
                    train_accuracy: accuracy(&model, &split.train, &Executor::Noiseless)?,
                    test_accuracy: accuracy(&model, &split.test, &Executor::Noiseless)?,
                });
            }
        }
        Ok(rows)
    }

    /// Mean test accuracy of single classifiers over the variants on one
    /// machine, or noiselessly when `machine` is `None`.
    fn single_accuracy(&mut self, n_qubits: usize, seed: u64, machine: Option<&str>) -> Result<f64> {
        let models = self.models(n_qubits, seed)?;
        let split = self.split(n_qubits, seed)?;
        let executor = match machine {
            None => Executor::Noiseless,
            Some(name) => Executor::noisy(
                self.profile(name)?.clone(),
                derive_seed(seed, &[STREAM_SINGLE, n_qubits as u64, self.machine_index(name)]),
            ),
        };
        let accs = models
            .iter()
            .map(|m| accuracy(m, &split.test, &executor.reseeded(&[m.variant.variant_id as u64])))
            .collect::<eqv::Result<Vec<f64>>>()?;
        Ok(accs.iter().sum::<f64>() / accs.len() as f64)
    }

    /// Single-classifier accuracy per machine and width, plus a noiseless
    /// `simulation` row.
    pub fn sweep_qubits(&mut self) -> Result<Vec<QubitCell>> {
        let mut cells = Vec::new();
        let settings: Vec<Option<String>> = self
            .config
            .sweep_machines
            .iter()
            .cloned()
            .map(Some)
            .chain(std::iter::once(None))
            .collect();
        for setting in settings {
            for n in self.config.qubit_counts.clone() {
                let fits = match &setting {
                    Some(name) => self.profile(name)?.n_qubits >= n,
                    None => true,
                };
                let accuracies = if fits {
                    let mut accs = Vec::new();
                    for seed in self.config.seeds.clone() {
                        accs.push(self.single_accuracy(n, seed, setting.as_deref())?);
                    }
                    Some(accs)
                } else {
                    None
                };
                cells.push(QubitCell {
                    setting: setting.clone().unwrap_or_else(|| "simulation".into()),
                    n_qubits: n,
                    accuracies,
                });
            }
        }
        Ok(cells)
    }

    /// Votes of a size-`size` ensemble on the configured machines.
    pub fn ensemble_run(&mut self, seed: u64, size: usize, with_weights: bool) -> Result<EnsembleRun> {
        let n = self.config.n_qubits;
        let models = self.models(n, seed)?;
        let split = self.split(n, seed)?;
        let allocation = allocate_variants(size, models.len(), derive_seed(seed, &[STREAM_ALLOCATION, size as u64]))?;
        let members: Vec<ClassifierModel> = allocation.iter().map(|&v| models[v].clone()).collect();
        let backends = self
            .config
            .machines
            .iter()
            .map(|name| Ok(Backend::Machine(self.profile(name)?.clone())))
            .collect::<Result<Vec<_>>>()?;
        let votes = collect_votes(&members, &backends, &split.test, derive_seed(seed, &[STREAM_VOTES, size as u64]))?;
        let weights = if with_weights {
            let (_, validation) = split.holdout(self.config.data.validation);
            Some(accuracy_weights(
                &members,
                &backends,
                validation,
                derive_seed(seed, &[STREAM_WEIGHTS, size as u64]),
            )?)
        } else {
            None
        };
        Ok(EnsembleRun {
            seed,
            allocation,
            votes,
            weights,
        })
    }

    fn wants_weights(&self) -> bool {
        self.config.strategies.contains(&Strategy::AccuracyWeighted)
    }

    pub fn sweep_ensemble(&mut self) -> Result<Vec<EnsembleRow>> {
        let strategies = self.config.strategies.clone();
        let mut rows: Vec<EnsembleRow> = Vec::new();
        for size in self.config.ensemble_sizes.clone() {
            let mut per_strategy = vec![Vec::new(); strategies.len()];
            for seed in self.config.seeds.clone() {
                let run = self.ensemble_run(seed, size, self.wants_weights())?;
                for (accs, &s) in per_strategy.iter_mut().zip(&strategies) {
                    accs.push(run.accuracy(s)?);
                }
            }
            rows.extend(strategies.iter().zip(per_strategy).map(|(&strategy, accuracies)| EnsembleRow {
                size,
                strategy,
                accuracies,
            }));
        }
        Ok(rows)
    }

    pub fn compare(&mut self) -> Result<CompareReport> {
        let n = self.config.n_qubits;
        let size = self.config.compare_size();
        let seeds = self.config.seeds.clone();
        let machines = self.config.machines.clone();
        let strategies = self.config.strategies.clone();

        let mut runs = Vec::new();
        for &seed in &seeds {
            runs.push(self.ensemble_run(seed, size, self.wants_weights())?);
        }
        let mut rows = vec![SettingRow {
            setting: "EQV".into(),
            accuracies: runs.iter().map(|r| r.accuracy(Strategy::Plurality)).collect::<Result<_>>()?,
        }];
        for name in machines.iter().map(String::as_str).map(Some).chain(std::iter::once(None)) {
            let mut accuracies = Vec::new();
            for &seed in &seeds {
                accuracies.push(self.single_accuracy(n, seed, name)?);
            }
            rows.push(SettingRow {
                setting: name.unwrap_or("simulation").to_string(),
                accuracies,
            });
        }
        let strategies = strategies
            .into_iter()
            .map(|s| Ok((s, runs.iter().map(|r| r.accuracy(s)).collect::<Result<Vec<_>>>()?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(CompareReport {
            size,
            machines,
            rows,
            strategies,
            runs,
        })
    }

    /// Impact factors of every classifier in the comparison ensemble.
    pub fn impact(&mut self) -> Result<ImpactReport> {
        let size = self.config.compare_size();
        let mut per_seed = Vec::new();
        for seed in self.config.seeds.clone() {
            let run = self.ensemble_run(seed, size, false)?;
            let records = impact_records(&run.votes);
            let (mean_correct, mean_wrong) = mean_impacts(&records);
            per_seed.push(ImpactSeed {
                seed,
                records,
                mean_correct,
                mean_wrong,
            });
        }
        let all: Vec<ImpactRecord> = per_seed.iter().flat_map(|s| s.records.iter().cloned()).collect();
        let density = impact_distribution(&all, self.config.impact_bins)?;
        Ok(ImpactReport { per_seed, density })
    }
}

fn read_model(path: &Path, key: &ModelKey) -> Option<ClassifierModel> {
    let text = std::fs::read_to_string(path).ok()?;
    let file: ModelFile = toml::from_str(&text).ok()?;
    (file.key == *key && file.model.validate().is_ok()).then_some(file.model)
}

/// One record per classifier vote.
pub fn impact_records(votes: &[SampleVotes]) -> Vec<ImpactRecord> {
    votes
        .iter()
        .flat_map(|sv| {
            sv.tally.per_classifier().iter().map(move |v| ImpactRecord {
                impact: impact_factor(&v.confidence),
                correct: v.predicted == sv.true_label,
                sample_id: sv.sample_id,
                classifier_id: v.classifier.to_string(),
            })
        })
        .collect()
}
