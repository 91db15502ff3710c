//! Subcommands: run an experiment, write its tables and manifest, and print
//! a short summary.

use std::path::PathBuf;

use anyhow::{Context, Result};
use eqv::ensemble::Strategy;

use crate::config::ExperimentConfig;
use crate::report::{
    reference_compare, reference_ensemble, reference_qubit_sweep, reference_simulation, runs_cell, stat_cells, summary, write_manifest,
    write_table,
};
use crate::runner::Experiment;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Train,
    SweepQubits,
    SweepEnsemble,
    Compare,
    Impact,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::SweepQubits => "sweep-qubits",
            Command::SweepEnsemble => "sweep-ensemble",
            Command::Compare => "compare",
            Command::Impact => "impact",
        }
    }
}

/// Runs `command` and returns the files it wrote, manifest last.
pub fn run(command: Command, config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let out = config.out.clone();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut exp = Experiment::new(config.clone())?;
    let mut files = match command {
        Command::Train => train(&mut exp)?,
        Command::SweepQubits => sweep_qubits(&mut exp)?,
        Command::SweepEnsemble => sweep_ensemble(&mut exp)?,
        Command::Compare => compare(&mut exp)?,
        Command::Impact => impact(&mut exp)?,
    };
    files.push(write_manifest(&out, command.name(), config, &files)?);
    Ok(files)
}

fn f4(x: f64) -> String {
    format!("{x:.4}")
}

fn train(exp: &mut Experiment) -> Result<Vec<PathBuf>> {
    let config = exp.config().clone();
    let rows = exp.train_report()?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.seed.to_string(),
                r.variant_id.to_string(),
                f4(r.train_accuracy),
                f4(r.test_accuracy),
                reference_simulation(config.task).to_string(),
            ]
        })
        .collect();
    let mut files = Vec::new();
    for &seed in &config.seeds {
        files.extend(exp.model_files(config.n_qubits, seed)?);
    }
    files.push(write_table(
        &config.out,
        "train.csv",
        "train",
        &config,
        &["seed", "variant", "train_accuracy", "test_accuracy", "reference_simulation"],
        &table,
    )?);
    for r in &rows {
        println!(
            "seed {} variant {}: noiseless test accuracy {:.3}",
            r.seed, r.variant_id, r.test_accuracy
        );
    }
    let tests: Vec<f64> = rows.iter().map(|r| r.test_accuracy).collect();
    println!(
        "{} {}-qubit noiseless: {} (reference {})",
        config.task,
        config.n_qubits,
        summary(&tests)?,
        reference_simulation(config.task)
    );
    Ok(files)
}

fn sweep_qubits(exp: &mut Experiment) -> Result<Vec<PathBuf>> {
    let config = exp.config().clone();
    let cells = exp.sweep_qubits()?;
    let mut table = Vec::new();
    for c in &cells {
        let reference = reference_qubit_sweep(&c.setting, c.n_qubits)
            .or_else(|| (c.setting == "simulation" && c.n_qubits == 4).then(|| reference_simulation(config.task)))
            .unwrap_or("");
        let row = match &c.accuracies {
            Some(accs) => {
                let [mean, std, n] = stat_cells(accs)?;
                println!("{:<12} {}-qubit {} (reference {})", c.setting, c.n_qubits, summary(accs)?, or_dash(reference));
                vec![c.setting.clone(), c.n_qubits.to_string(), "ok".into(), mean, std, n, runs_cell(accs), reference.into()]
            }
            None => {
                println!("{:<12} {}-qubit -", c.setting, c.n_qubits);
                vec![c.setting.clone(), c.n_qubits.to_string(), "n/a".into(), String::new(), String::new(), "0".into(), String::new(), reference.into()]
            }
        };
        table.push(row);
    }
    Ok(vec![write_table(
        &config.out,
        "sweep_qubits.csv",
        "sweep-qubits",
        &config,
        &["setting", "n_qubits", "status", "mean", "std", "n_runs", "runs", "reference"],
        &table,
    )?])
}

fn or_dash(s: &str) -> &str {
    if s.is_empty() {
        "-"
    } else {
        s
    }
}

fn sweep_ensemble(exp: &mut Experiment) -> Result<Vec<PathBuf>> {
    let config = exp.config().clone();
    let rows = exp.sweep_ensemble()?;
    let mut table = Vec::new();
    for r in &rows {
        let [mean, std, n] = stat_cells(&r.accuracies)?;
        let reference = reference_ensemble(config.task, r.size, r.strategy).unwrap_or("");
        println!("size {:>2} {:<17} {}", r.size, r.strategy.name(), summary(&r.accuracies)?);
        table.push(vec![
            r.size.to_string(),
            r.strategy.name().into(),
            mean,
            std,
            n,
            runs_cell(&r.accuracies),
            reference.into(),
        ]);
    }
    if let Some(best) = rows
        .iter()
        .filter(|r| r.strategy == Strategy::Plurality)
        .max_by(|a, b| mean(&a.accuracies).total_cmp(&mean(&b.accuracies)).then(b.size.cmp(&a.size)))
    {
        println!("best plurality size: {} ({:.3})", best.size, mean(&best.accuracies));
    }
    Ok(vec![write_table(
        &config.out,
        "sweep_ensemble.csv",
        "sweep-ensemble",
        &config,
        &["size", "strategy", "mean", "std", "n_runs", "runs", "reference"],
        &table,
    )?])
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn compare(exp: &mut Experiment) -> Result<Vec<PathBuf>> {
    let config = exp.config().clone();
    let report = exp.compare()?;
    let mut table = Vec::new();
    for r in &report.rows {
        let [mean, std, n] = stat_cells(&r.accuracies)?;
        let reference = reference_compare(config.task, &r.setting).unwrap_or("");
        println!("{:<12} {} (reference {})", r.setting, summary(&r.accuracies)?, or_dash(reference));
        table.push(vec![r.setting.clone(), mean, std, n, runs_cell(&r.accuracies), reference.into()]);
    }
    let mut files = vec![write_table(
        &config.out,
        "compare.csv",
        "compare",
        &config,
        &["setting", "mean", "std", "n_runs", "runs", "reference"],
        &table,
    )?];

    let mut strategy_table = Vec::new();
    for (s, accs) in &report.strategies {
        let [mean, std, n] = stat_cells(accs)?;
        println!("strategy {:<17} {}", s.name(), summary(accs)?);
        strategy_table.push(vec![s.name().to_string(), report.size.to_string(), mean, std, n, runs_cell(accs)]);
    }
    files.push(write_table(
        &config.out,
        "strategies.csv",
        "compare",
        &config,
        &["strategy", "size", "mean", "std", "n_runs", "runs"],
        &strategy_table,
    )?);

    let mut vote_rows = Vec::new();
    for run in &report.runs {
        let split = exp.split(config.n_qubits, run.seed)?;
        let finals: Vec<(Strategy, Vec<u8>)> = config
            .strategies
            .iter()
            .map(|&s| Ok((s, run.predictions(s)?)))
            .collect::<Result<_>>()?;
        for (i, sv) in run.votes.iter().enumerate() {
            let finals_cell = finals
                .iter()
                .map(|(s, p)| format!("{}={}", s.name(), p[i]))
                .collect::<Vec<_>>()
                .join(";");
            for v in sv.tally.per_classifier() {
                let conf = v
                    .confidence
                    .labels()
                    .iter()
                    .zip(v.confidence.values())
                    .map(|(l, c)| format!("{l}:{c:.6}"))
                    .collect::<Vec<_>>()
                    .join(";");
                vote_rows.push(vec![
                    run.seed.to_string(),
                    sv.sample_id.to_string(),
                    split.test[sv.sample_id].source_index.to_string(),
                    v.classifier.to_string(),
                    run.allocation[v.classifier.copy].to_string(),
                    report.machines[v.classifier.machine].clone(),
                    conf,
                    v.predicted.to_string(),
                    finals_cell.clone(),
                    sv.true_label.to_string(),
                ]);
            }
        }
    }
    files.push(write_table(
        &config.out,
        "votes.csv",
        "compare",
        &config,
        &[
            "seed",
            "sample",
            "source_index",
            "classifier",
            "variant",
            "machine",
            "confidences",
            "vote",
            "final",
            "true_label",
        ],
        &vote_rows,
    )?);
    Ok(files)
}

fn impact(exp: &mut Experiment) -> Result<Vec<PathBuf>> {
    let config = exp.config().clone();
    let report = exp.impact()?;
    let d = &report.density;
    let density_rows: Vec<Vec<String>> = (0..d.bin_centers.len())
        .map(|b| {
            vec![
                format!("{:.4}", d.bin_centers[b]),
                format!("{:.6}", d.correct[b]),
                format!("{:.6}", d.wrong[b]),
            ]
        })
        .collect();
    let opt = |x: Option<f64>| x.map(f4).unwrap_or_default();
    let mut summary_rows = Vec::new();
    for s in &report.per_seed {
        let n_wrong = s.records.iter().filter(|r| !r.correct).count();
        println!(
            "seed {}: {} records, {} wrong, mean impact correct {} wrong {}",
            s.seed,
            s.records.len(),
            n_wrong,
            or_dash(&opt(s.mean_correct)),
            or_dash(&opt(s.mean_wrong))
        );
        summary_rows.push(vec![
            s.seed.to_string(),
            s.records.len().to_string(),
            n_wrong.to_string(),
            opt(s.mean_correct),
            opt(s.mean_wrong),
        ]);
    }
    Ok(vec![
        write_table(
            &config.out,
            "impact_density.csv",
            "impact",
            &config,
            &["bin_center", "density_correct", "density_wrong"],
            &density_rows,
        )?,
        write_table(
            &config.out,
            "impact_summary.csv",
            "impact",
            &config,
            &["seed", "n_records", "n_wrong", "mean_impact_correct", "mean_impact_wrong"],
            &summary_rows,
        )?,
    ])
}
