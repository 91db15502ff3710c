//! Ensembles of classifiers spread over several machines.
//!
//! Every allocated variant copy runs on every machine, so the vote pool has
//! `copies × machines` members; a member is identified by
//! `(copy index, machine index)`. Each member emits one confidence vector per
//! input, and an aggregation strategy folds the pool into one label.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::noise::MachineProfile;
use crate::rng::{derive_seed, substream};
use crate::vqc::{argmax, confidence, predict, ClassifierModel, ConfidenceVector, Executor};
use crate::data::Sample;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Plurality,
    Average,
    AccuracyWeighted,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Plurality, Strategy::Average, Strategy::AccuracyWeighted];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Plurality => "plurality",
            Strategy::Average => "average",
            Strategy::AccuracyWeighted => "accuracy_weighted",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s || (s == "weighted" && *st == Strategy::AccuracyWeighted))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub ensemble_size: usize,
    pub n_variants: usize,
    pub machines: Vec<MachineProfile>,
    pub allocation_seed: u64,
    pub strategy: Strategy,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_variants == 0 || self.ensemble_size < self.n_variants {
            return Err(Error::InvalidConfig(format!(
                "ensemble size {} must be at least the variant count {}",
                self.ensemble_size, self.n_variants
            )));
        }
        if self.machines.is_empty() {
            return Err(Error::Empty("machine list"));
        }
        Ok(())
    }
}

/// Copies of each variant: every variant once, then rounds in which a seeded
/// choice of distinct variants each receive one more copy.
///
/// Returns the multiset as sorted variant ids, e.g. `[0, 1, 1, 2, 2]`.
pub fn allocate_variants(ensemble_size: usize, n_variants: usize, seed: u64) -> Result<Vec<usize>> {
    if n_variants == 0 || ensemble_size < n_variants {
        return Err(Error::InvalidConfig(format!(
            "ensemble size {ensemble_size} is smaller than the variant count {n_variants}"
        )));
    }
    let mut counts = vec![1usize; n_variants];
    let mut remaining = ensemble_size - n_variants;
    let mut round = 0u64;
    let mut ids: Vec<usize> = (0..n_variants).collect();
    while remaining > 0 {
        let take = remaining.min(n_variants);
        ids.shuffle(&mut substream(seed, &[round]));
        for &v in &ids[..take] {
            counts[v] += 1;
        }
        remaining -= take;
        round += 1;
    }
    Ok(counts
        .iter()
        .enumerate()
        .flat_map(|(v, &c)| std::iter::repeat_n(v, c))
        .collect())
}

/// Copies per variant id for an allocation.
pub fn variant_counts(allocation: &[usize], n_variants: usize) -> Vec<usize> {
    let mut counts = vec![0; n_variants];
    for &v in allocation {
        counts[v] += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassifierId {
    pub copy: usize,
    pub machine: usize,
}

impl fmt::Display for ClassifierId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}m{}", self.copy, self.machine)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vote {
    pub classifier: ClassifierId,
    pub confidence: ConfidenceVector,
    pub predicted: u8,
}

/// Votes of one ensemble on one input.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteTally {
    labels: Vec<u8>,
    votes: Vec<usize>,
    confidence_sums: Vec<f64>,
    per_classifier: Vec<Vote>,
}

impl VoteTally {
    /// Builds a tally from per-classifier confidence vectors; each classifier
    /// votes for its own argmax.
    pub fn from_confidences(entries: Vec<(ClassifierId, ConfidenceVector)>) -> Result<Self> {
        let labels = entries
            .first()
            .ok_or(Error::Empty("vote tally"))?
            .1
            .labels()
            .to_vec();
        let mut votes = vec![0; labels.len()];
        let mut confidence_sums = vec![0.0; labels.len()];
        let mut per_classifier = Vec::with_capacity(entries.len());
        for (classifier, conf) in entries {
            if conf.labels() != labels.as_slice() {
                return Err(Error::LabelMismatch);
            }
            let predicted = predict(&conf);
            votes[conf.argmax()] += 1;
            for (s, v) in confidence_sums.iter_mut().zip(conf.values()) {
                *s += v;
            }
            per_classifier.push(Vote {
                classifier,
                confidence: conf,
                predicted,
            });
        }
        Ok(Self {
            labels,
            votes,
            confidence_sums,
            per_classifier,
        })
    }

    /// A tally known only by its vote counts; ties fall back to label order.
    pub fn from_counts(labels: Vec<u8>, counts: &[(u8, usize)]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("label set"));
        }
        let mut votes = vec![0; labels.len()];
        for &(label, n) in counts {
            let i = labels
                .iter()
                .position(|&l| l == label)
                .ok_or(Error::UnknownLabel(label))?;
            votes[i] += n;
        }
        Ok(Self {
            confidence_sums: vec![0.0; labels.len()],
            labels,
            votes,
            per_classifier: Vec::new(),
        })
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn votes(&self) -> &[usize] {
        &self.votes
    }

    pub fn votes_for(&self, label: u8) -> usize {
        self.labels
            .iter()
            .position(|&l| l == label)
            .map_or(0, |i| self.votes[i])
    }

    pub fn total_votes(&self) -> usize {
        self.votes.iter().sum()
    }

    pub fn per_classifier(&self) -> &[Vote] {
        &self.per_classifier
    }

    pub fn confidences(&self) -> Vec<ConfidenceVector> {
        self.per_classifier.iter().map(|v| v.confidence.clone()).collect()
    }
}

/// The label with the most votes; no majority is needed. Ties go to the
/// larger summed confidence among the tied labels, then to label order.
pub fn plurality_vote(tally: &VoteTally) -> u8 {
    let mut best = 0;
    for i in 1..tally.labels.len() {
        let more_votes = tally.votes[i] > tally.votes[best];
        let tie_break = tally.votes[i] == tally.votes[best] && tally.confidence_sums[i] > tally.confidence_sums[best];
        if more_votes || tie_break {
            best = i;
        }
    }
    tally.labels[best]
}

fn check_same_labels(confidences: &[ConfidenceVector]) -> Result<&[u8]> {
    let labels = confidences.first().ok_or(Error::Empty("confidence list"))?.labels();
    if confidences.iter().any(|c| c.labels() != labels) {
        return Err(Error::LabelMismatch);
    }
    Ok(labels)
}

/// Elementwise mean of the confidence vectors, then argmax.
pub fn average_aggregate(confidences: &[ConfidenceVector]) -> Result<(u8, ConfidenceVector)> {
    let weights = vec![1.0; confidences.len()];
    weighted_aggregate(confidences, &weights)
}

/// Weight-normalized elementwise mean, then argmax.
pub fn weighted_aggregate(confidences: &[ConfidenceVector], weights: &[f64]) -> Result<(u8, ConfidenceVector)> {
    let labels = check_same_labels(confidences)?.to_vec();
    if weights.len() != confidences.len() {
        return Err(Error::LengthMismatch {
            what: "weights",
            expected: confidences.len(),
            actual: weights.len(),
        });
    }
    if weights.iter().any(|w| w.is_nan() || *w < 0.0) {
        return Err(Error::InvalidWeights("weights must be non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidWeights("weights are all zero".into()));
    }
    let mut mean = vec![0.0; labels.len()];
    for (conf, w) in confidences.iter().zip(weights) {
        for (m, v) in mean.iter_mut().zip(conf.values()) {
            *m += w * v;
        }
    }
    for m in &mut mean {
        *m = (*m / total).clamp(0.0, 1.0);
    }
    let label = labels[argmax(&mean)];
    Ok((label, ConfidenceVector::new(mean, labels)?))
}

/// Applies `strategy` to one tally. `weights` is indexed like the tally's
/// classifiers and only read by [`Strategy::AccuracyWeighted`].
pub fn aggregate(tally: &VoteTally, strategy: Strategy, weights: Option<&[f64]>) -> Result<u8> {
    match strategy {
        Strategy::Plurality => Ok(plurality_vote(tally)),
        Strategy::Average => average_aggregate(&tally.confidences()).map(|(l, _)| l),
        Strategy::AccuracyWeighted => {
            let w = weights.ok_or_else(|| Error::InvalidWeights("accuracy weights not supplied".into()))?;
            weighted_aggregate(&tally.confidences(), w).map(|(l, _)| l)
        }
    }
}

/// A device an ensemble member runs on.
#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    /// Exact statevector probabilities.
    Ideal,
    Machine(MachineProfile),
}

impl Backend {
    pub fn name(&self) -> &str {
        match self {
            Backend::Ideal => "ideal",
            Backend::Machine(p) => &p.name,
        }
    }

    pub fn executor(&self, seed: u64) -> Executor {
        match self {
            Backend::Ideal => Executor::Noiseless,
            Backend::Machine(p) => Executor::noisy(p.clone(), seed),
        }
    }
}

/// Votes of the whole ensemble on one labeled input.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleVotes {
    pub sample_id: usize,
    pub true_label: u8,
    pub tally: VoteTally,
}

/// Runs every model copy on every backend for every sample.
///
/// The executor seed for `(machine m, sample s, copy c)` is derived from
/// `seed` along the path `[m, s, c]`.
pub fn collect_votes(
    models: &[ClassifierModel],
    backends: &[Backend],
    samples: &[Sample],
    seed: u64,
) -> Result<Vec<SampleVotes>> {
    if models.is_empty() {
        return Err(Error::Empty("model list"));
    }
    if backends.is_empty() {
        return Err(Error::Empty("machine list"));
    }
    samples
        .par_iter()
        .enumerate()
        .map(|(s, sample)| {
            let mut entries = Vec::with_capacity(models.len() * backends.len());
            for (m, backend) in backends.iter().enumerate() {
                for (c, model) in models.iter().enumerate() {
                    let exec = backend.executor(derive_seed(seed, &[m as u64, s as u64, c as u64]));
                    let conf = confidence(model, &sample.features, &exec)?;
                    entries.push((ClassifierId { copy: c, machine: m }, conf));
                }
            }
            Ok(SampleVotes {
                sample_id: s,
                true_label: sample.label,
                tally: VoteTally::from_confidences(entries)?,
            })
        })
        .collect()
}

/// Validation accuracy of each `(variant, machine)` pair, expanded to one
/// weight per ensemble member in [`collect_votes`] order.
pub fn accuracy_weights(
    models: &[ClassifierModel],
    backends: &[Backend],
    validation: &[Sample],
    seed: u64,
) -> Result<Vec<f64>> {
    if validation.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let mut weights = Vec::with_capacity(models.len() * backends.len());
    for (m, backend) in backends.iter().enumerate() {
        let mut per_variant: Vec<(usize, f64)> = Vec::new();
        for model in models {
            let id = model.variant.variant_id;
            let w = match per_variant.iter().find(|(v, _)| *v == id) {
                Some(&(_, w)) => w,
                None => {
                    let exec = backend.executor(derive_seed(seed, &[0x3a11, m as u64, id as u64]));
                    let w = crate::vqc::accuracy(model, validation, &exec)?;
                    per_variant.push((id, w));
                    w
                }
            };
            weights.push(w);
        }
    }
    Ok(weights)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutcome {
    pub predictions: Vec<u8>,
    pub accuracy: f64,
}

/// Aggregates pre-collected votes with one strategy.
pub fn score_votes(votes: &[SampleVotes], strategy: Strategy, weights: Option<&[f64]>) -> Result<EnsembleOutcome> {
    if votes.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let predictions = votes
        .iter()
        .map(|sv| aggregate(&sv.tally, strategy, weights))
        .collect::<Result<Vec<_>>>()?;
    let correct = predictions
        .iter()
        .zip(votes)
        .filter(|(p, sv)| **p == sv.true_label)
        .count();
    Ok(EnsembleOutcome {
        accuracy: correct as f64 / votes.len() as f64,
        predictions,
    })
}

/// Collects votes on `test_set` and aggregates them with `strategy`.
pub fn run_ensemble(
    models: &[ClassifierModel],
    backends: &[Backend],
    test_set: &[Sample],
    strategy: Strategy,
    weights: Option<&[f64]>,
    seed: u64,
) -> Result<EnsembleOutcome> {
    if test_set.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let votes = collect_votes(models, backends, test_set, seed)?;
    score_votes(&votes, strategy, weights)
}
