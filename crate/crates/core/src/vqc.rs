//! A single variational quantum classifier.
//!
//! Classes are read from the first `⌈log₂K⌉` qubits: class `c` (in label
//! order) owns the readout bitstring with value `c`. Mass on bitstrings that
//! name no class is dropped and the remaining `K` entries are renormalized.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{embed_features, Variant};
use crate::data::Sample;
use crate::noise::{noisy_execute, MachineProfile, NoisyExecutionConfig};
use crate::rng::{derive_seed, substream};
use crate::simcore::{born_probabilities, run_circuit, Circuit};
use crate::{Error, Result};

/// Probability floor inside the cross-entropy.
pub const PROB_FLOOR: f64 = 1e-12;

const CONF_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceVector {
    values: Vec<f64>,
    labels: Vec<u8>,
}

impl ConfidenceVector {
    pub fn new(values: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "confidence vector needs at least 2 classes, got {}",
                values.len()
            )));
        }
        if labels.len() != values.len() {
            return Err(Error::LengthMismatch {
                what: "confidence labels",
                expected: values.len(),
                actual: labels.len(),
            });
        }
        if let Some(&v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidProbability(v));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > CONF_TOL {
            return Err(Error::InvalidDistribution(sum));
        }
        Ok(Self { values, labels })
    }

    /// Binary confidence for labels `(0, 1)` given the mass on label 1.
    pub fn binary(p_one: f64) -> Result<Self> {
        Self::new(vec![1.0 - p_one, p_one], vec![0, 1])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, label: u8) -> Result<f64> {
        self.position(label).map(|i| self.values[i])
    }

    pub(crate) fn position(&self, label: u8) -> Result<usize> {
        self.labels
            .iter()
            .position(|&l| l == label)
            .ok_or(Error::UnknownLabel(label))
    }

    /// Index of the largest entry, first one on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.values)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// How circuits are evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum Executor {
    /// Exact Born probabilities from the statevector.
    Noiseless,
    /// Trajectory sampling on a machine profile.
    Noisy(NoisyExecutionConfig),
}

impl Executor {
    pub fn noisy(profile: MachineProfile, seed: u64) -> Self {
        Executor::Noisy(NoisyExecutionConfig::new(profile, seed))
    }

    /// Same executor with its seed moved to the substream `path`.
    pub fn reseeded(&self, path: &[u64]) -> Self {
        match self {
            Executor::Noiseless => Executor::Noiseless,
            Executor::Noisy(cfg) => Executor::Noisy(NoisyExecutionConfig {
                seed: derive_seed(cfg.seed, path),
                ..cfg.clone()
            }),
        }
    }

    /// Outcome distribution over all basis states.
    pub fn distribution(&self, circuit: &Circuit, params: &[f64], angles: &[f64]) -> Result<Vec<f64>> {
        match self {
            Executor::Noiseless => born_probabilities(&run_circuit(circuit, params, angles)?),
            Executor::Noisy(cfg) => Ok(noisy_execute(circuit, params, angles, cfg)?.frequencies()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub variant: Variant,
    pub params: Vec<f64>,
    pub class_labels: Vec<u8>,
    pub readout_qubits: Vec<usize>,
}

/// Number of readout qubits needed to name `n_classes` classes.
pub fn readout_width(n_classes: usize) -> usize {
    n_classes.next_power_of_two().trailing_zeros() as usize
}

impl ClassifierModel {
    /// A model with parameters drawn uniformly from `[-π, π]` under `seed`.
    pub fn init(variant: Variant, class_labels: Vec<u8>, seed: u64) -> Result<Self> {
        let mut rng = substream(seed, &[0x1417]);
        let params = (0..variant.n_params())
            .map(|_| rng.gen_range(-PI..=PI))
            .collect();
        Self::with_params(variant, class_labels, params)
    }

    pub fn with_params(variant: Variant, class_labels: Vec<u8>, params: Vec<f64>) -> Result<Self> {
        let readout_qubits = (0..readout_width(class_labels.len())).collect();
        let model = Self {
            variant,
            params,
            class_labels,
            readout_qubits,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.class_labels.len();
        if k < 2 {
            return Err(Error::InvalidConfig("a classifier needs at least 2 classes".into()));
        }
        let mut sorted = self.class_labels.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != k {
            return Err(Error::InvalidConfig("duplicate class labels".into()));
        }
        if (1usize << self.readout_qubits.len()) < k {
            return Err(Error::InvalidConfig(format!(
                "{} readout qubits cannot name {k} classes",
                self.readout_qubits.len()
            )));
        }
        if let Some(&q) = self.readout_qubits.iter().find(|&&q| q >= self.variant.n_qubits()) {
            return Err(Error::QubitOutOfRange {
                index: q,
                n_qubits: self.variant.n_qubits(),
            });
        }
        if self.params.len() != self.variant.n_params() {
            return Err(Error::LengthMismatch {
                what: "params",
                expected: self.variant.n_params(),
                actual: self.params.len(),
            });
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        m.variant.spec.validate()?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Marginal mass of each class bitstring, before renormalization.
fn class_masses(model: &ClassifierModel, dist: &[f64]) -> Vec<f64> {
    let mut masses = vec![0.0; 1 << model.readout_qubits.len()];
    for (i, &p) in dist.iter().enumerate() {
        let key = model
            .readout_qubits
            .iter()
            .enumerate()
            .fold(0, |acc, (j, &q)| acc | (((i >> q) & 1) << j));
        masses[key] += p;
    }
    masses.truncate(model.n_classes());
    masses
}

fn normalize_masses(masses: &[f64]) -> Vec<f64> {
    let total: f64 = masses.iter().sum();
    if total > 0.0 {
        masses.iter().map(|m| (m / total).clamp(0.0, 1.0)).collect()
    } else {
        vec![1.0 / masses.len() as f64; masses.len()]
    }
}

struct Prepared {
    circuit: Circuit,
}

impl Prepared {
    fn new(model: &ClassifierModel) -> Result<Self> {
        Ok(Self {
            circuit: model.variant.circuit()?,
        })
    }

    fn masses(&self, model: &ClassifierModel, params: &[f64], angles: &[f64], executor: &Executor) -> Result<Vec<f64>> {
        Ok(class_masses(model, &executor.distribution(&self.circuit, params, angles)?))
    }
}

fn angles_for(model: &ClassifierModel, features: &[f64]) -> Result<Vec<f64>> {
    if features.len() != model.variant.n_features() {
        return Err(Error::LengthMismatch {
            what: "features",
            expected: model.variant.n_features(),
            actual: features.len(),
        });
    }
    embed_features(features)
}

/// Per-class confidence for one input with features in `[0, 1]`.
pub fn confidence(model: &ClassifierModel, features: &[f64], executor: &Executor) -> Result<ConfidenceVector> {
    let angles = angles_for(model, features)?;
    let prepared = Prepared::new(model)?;
    let masses = prepared.masses(model, &model.params, &angles, executor)?;
    ConfidenceVector::new(normalize_masses(&masses), model.class_labels.clone())
}

/// Cross-entropy of `conf` against `true_label`.
pub fn loss(conf: &ConfidenceVector, true_label: u8) -> Result<f64> {
    Ok(-conf.get(true_label)?.max(PROB_FLOOR).ln())
}

/// Label with the largest confidence; ties go to the earliest label.
pub fn predict(conf: &ConfidenceVector) -> u8 {
    conf.labels[conf.argmax()]
}

fn label_index(model: &ClassifierModel, label: u8) -> Result<usize> {
    model
        .class_labels
        .iter()
        .position(|&l| l == label)
        .ok_or(Error::UnknownLabel(label))
}

/// Gradient of the mean batch cross-entropy with respect to every trainable
/// parameter.
///
/// Class masses are expectation values of projectors, so each mass
/// derivative is `(m(θ + π/2) - m(θ - π/2)) / 2`. The renormalization and the
/// logarithm are differentiated analytically. Per-sample gradients are
/// summed in batch order, so the result does not depend on scheduling.
pub fn parameter_shift_gradient(model: &ClassifierModel, batch: &[Sample], executor: &Executor) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let prepared = Prepared::new(model)?;
    let n_params = model.params.len();
    let per_sample: Vec<Result<Vec<f64>>> = batch
        .par_iter()
        .enumerate()
        .map(|(i, sample)| {
            let target = label_index(model, sample.label)?;
            let angles = angles_for(model, &sample.features)?;
            let exec = executor.reseeded(&[i as u64]);
            let masses = prepared.masses(model, &model.params, &angles, &exec)?;
            let total: f64 = masses.iter().sum();
            let conf = if total > 0.0 { masses[target] / total } else { 0.0 };
            if conf <= PROB_FLOOR {
                return Ok(vec![0.0; n_params]);
            }
            let mut grad = vec![0.0; n_params];
            let mut shifted = model.params.clone();
            for j in 0..n_params {
                shifted[j] = model.params[j] + FRAC_PI_2;
                let plus = prepared.masses(model, &shifted, &angles, &exec.reseeded(&[j as u64, 0]))?;
                shifted[j] = model.params[j] - FRAC_PI_2;
                let minus = prepared.masses(model, &shifted, &angles, &exec.reseeded(&[j as u64, 1]))?;
                shifted[j] = model.params[j];

                let d_mass: Vec<f64> = plus.iter().zip(&minus).map(|(p, m)| (p - m) / 2.0).collect();
                let d_total: f64 = d_mass.iter().sum();
                let d_conf = (d_mass[target] * total - masses[target] * d_total) / (total * total);
                grad[j] = -d_conf / conf;
            }
            Ok(grad)
        })
        .collect();

    let mut sum = vec![0.0; n_params];
    for g in per_sample {
        for (s, v) in sum.iter_mut().zip(g?) {
            *s += v;
        }
    }
    let n = batch.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

/// Mean cross-entropy over `samples`.
pub fn mean_loss(model: &ClassifierModel, samples: &[Sample], executor: &Executor) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    let losses: Vec<Result<f64>> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| loss(&confidence(model, &s.features, &executor.reseeded(&[i as u64]))?, s.label))
        .collect();
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / samples.len() as f64)
}

/// Fraction of `samples` whose predicted label matches.
pub fn accuracy(model: &ClassifierModel, samples: &[Sample], executor: &Executor) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    let hits: Vec<Result<bool>> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| Ok(predict(&confidence(model, &s.features, &executor.reseeded(&[i as u64]))?) == s.label))
        .collect();
    let mut correct = 0usize;
    for h in hits {
        correct += h? as usize;
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Where training circuits run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TrainExecutor {
    /// Exact statevector with parameter-shift gradients.
    #[default]
    Noiseless,
    /// Noisy trajectories on a machine, optimized with SPSA.
    Machine(MachineProfile),
}

/// Update rule for noiseless (parameter-shift) training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// `θ ← θ − lr·g`
    #[default]
    GradientDescent,
    /// Adam with β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    Adam,
}

#[derive(Debug, Clone)]
struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamState {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (i, (p, g)) in params.iter_mut().zip(grad).enumerate() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            *p -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// SPSA gain schedules `a / (k+1)^0.602` and `c / (k+1)^0.101`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpsaGains {
    pub a: f64,
    pub c: f64,
}

impl Default for SpsaGains {
    fn default() -> Self {
        Self { a: 0.3, c: 0.2 }
    }
}

impl SpsaGains {
    pub fn step(&self, k: usize) -> f64 {
        self.a / ((k + 1) as f64).powf(0.602)
    }

    pub fn perturbation(&self, k: usize) -> f64 {
        self.c / ((k + 1) as f64).powf(0.101)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default)]
    pub executor: TrainExecutor,
    #[serde(default)]
    pub spsa: SpsaGains,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 100,
            learning_rate: 0.05,
            seed: 0,
            optimizer: Optimizer::GradientDescent,
            executor: TrainExecutor::Noiseless,
            spsa: SpsaGains::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Trains `model` and returns the updated model.
pub fn train(model: &ClassifierModel, train_set: &[Sample], config: &TrainConfig) -> Result<ClassifierModel> {
    train_inner(model, train_set, config, false).map(|(m, _)| m)
}

/// Like [`train`], also returning the mean training loss before the first
/// epoch and after each epoch (evaluated noiselessly).
pub fn train_with_history(
    model: &ClassifierModel,
    train_set: &[Sample],
    config: &TrainConfig,
) -> Result<(ClassifierModel, Vec<f64>)> {
    train_inner(model, train_set, config, true)
}

fn train_inner(
    model: &ClassifierModel,
    train_set: &[Sample],
    config: &TrainConfig,
    track: bool,
) -> Result<(ClassifierModel, Vec<f64>)> {
    config.validate()?;
    model.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if train_set.iter().any(|s| !model.class_labels.contains(&s.label)) {
        return Err(Error::LabelMismatch);
    }

    let mut current = model.clone();
    let mut history = Vec::new();
    if track {
        history.push(mean_loss(&current, train_set, &Executor::Noiseless)?);
    }
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut step = 0usize;
    let mut adam = AdamState::new(current.params.len());
    for epoch in 0..config.epochs {
        let mut rng = substream(config.seed, &[epoch as u64]);
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Sample> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            match &config.executor {
                TrainExecutor::Noiseless => {
                    let grad = parameter_shift_gradient(&current, &batch, &Executor::Noiseless)?;
                    match config.optimizer {
                        Optimizer::GradientDescent => {
                            for (p, g) in current.params.iter_mut().zip(grad) {
                                *p -= config.learning_rate * g;
                            }
                        }
                        Optimizer::Adam => adam.step(&mut current.params, &grad, config.learning_rate),
                    }
                }
                TrainExecutor::Machine(profile) => {
                    let exec = Executor::noisy(profile.clone(), derive_seed(config.seed, &[0x5995, step as u64]));
                    spsa_step(&mut current, &batch, &exec, &config.spsa, step, &mut rng)?;
                }
            }
            step += 1;
        }
        if track {
            history.push(mean_loss(&current, train_set, &Executor::Noiseless)?);
        }
    }
    Ok((current, history))
}

fn spsa_step(
    model: &mut ClassifierModel,
    batch: &[Sample],
    executor: &Executor,
    gains: &SpsaGains,
    k: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    let ck = gains.perturbation(k);
    let ak = gains.step(k);
    let delta: Vec<f64> = (0..model.params.len())
        .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let shifted = |sign: f64| {
        let mut m = model.clone();
        for (p, d) in m.params.iter_mut().zip(&delta) {
            *p += sign * ck * d;
        }
        m
    };
    let plus = mean_loss(&shifted(1.0), batch, &executor.reseeded(&[0]))?;
    let minus = mean_loss(&shifted(-1.0), batch, &executor.reseeded(&[1]))?;
    let scale = (plus - minus) / (2.0 * ck);
    for (p, d) in model.params.iter_mut().zip(&delta) {
        *p -= ak * scale * d;
    }
    Ok(())
}
