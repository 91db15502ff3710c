//! Impact factors, their densities, and run statistics.

use std::fmt;

use crate::vqc::ConfidenceVector;
use crate::{Error, Result};

/// Gap between the largest and second-largest confidence. For two classes
/// this is `|c₁ - c₂|`.
pub fn impact_factor(conf: &ConfidenceVector) -> f64 {
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &v in conf.values() {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    (first - second).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpactRecord {
    pub impact: f64,
    pub correct: bool,
    pub sample_id: usize,
    pub classifier_id: String,
}

/// Histogram densities of impact factors on `[0, 1]`, split by correctness.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactDensity {
    pub bin_centers: Vec<f64>,
    pub correct: Vec<f64>,
    pub wrong: Vec<f64>,
    pub correct_counts: Vec<usize>,
    pub wrong_counts: Vec<usize>,
}

impl ImpactDensity {
    pub fn bin_width(&self) -> f64 {
        1.0 / self.bin_centers.len() as f64
    }
}

fn bin_of(impact: f64, bins: usize) -> usize {
    ((impact * bins as f64) as usize).min(bins - 1)
}

fn density(counts: &[usize]) -> Vec<f64> {
    let n: usize = counts.iter().sum();
    let width = 1.0 / counts.len() as f64;
    counts.iter().map(|&c| c as f64 / (n as f64 * width)).collect()
}

pub fn impact_distribution(records: &[ImpactRecord], bins: usize) -> Result<ImpactDensity> {
    if bins == 0 {
        return Err(Error::InvalidConfig("need at least one bin".into()));
    }
    let mut correct_counts = vec![0; bins];
    let mut wrong_counts = vec![0; bins];
    for r in records {
        if !(0.0..=1.0).contains(&r.impact) {
            return Err(Error::InvalidProbability(r.impact));
        }
        let b = bin_of(r.impact, bins);
        if r.correct {
            correct_counts[b] += 1;
        } else {
            wrong_counts[b] += 1;
        }
    }
    if correct_counts.iter().sum::<usize>() == 0 {
        return Err(Error::Empty("correct-prediction group"));
    }
    if wrong_counts.iter().sum::<usize>() == 0 {
        return Err(Error::Empty("wrong-prediction group"));
    }
    Ok(ImpactDensity {
        bin_centers: (0..bins).map(|b| (b as f64 + 0.5) / bins as f64).collect(),
        correct: density(&correct_counts),
        wrong: density(&wrong_counts),
        correct_counts,
        wrong_counts,
    })
}

/// Mean impact of the `(correct, wrong)` groups.
pub fn mean_impacts(records: &[ImpactRecord]) -> (Option<f64>, Option<f64>) {
    let mean = |correct: bool| {
        let xs: Vec<f64> = records.iter().filter(|r| r.correct == correct).map(|r| r.impact).collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    };
    (mean(true), mean(false))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyReport {
    pub mean: f64,
    /// Sample standard deviation; absent for a single run.
    pub std: Option<f64>,
    pub n_runs: usize,
}

impl fmt::Display for AccuracyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.std {
            Some(std) => write!(f, "{:.3} ± {:.3}", self.mean, std),
            None => write!(f, "{:.3}", self.mean),
        }
    }
}

/// Sample mean and sample standard deviation (n − 1 denominator).
pub fn accuracy_stats(run_accuracies: &[f64]) -> Result<AccuracyReport> {
    let n = run_accuracies.len();
    if n == 0 {
        return Err(Error::Empty("run accuracies"));
    }
    let mean = run_accuracies.iter().sum::<f64>() / n as f64;
    let std = (n >= 2).then(|| {
        let ss: f64 = run_accuracies.iter().map(|a| (a - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    });
    Ok(AccuracyReport { mean, std, n_runs: n })
}
