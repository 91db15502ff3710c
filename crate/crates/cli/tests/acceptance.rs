//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use eqv::analysis::impact_factor;
use eqv::ansatz::{build_hea_with, Entangler, HeaOptions, RotationLayer, Variant};
use eqv::data::Sample;
use eqv::ensemble::{average_aggregate, plurality_vote, ClassifierId, Strategy, VoteTally};
use eqv::noise::load_profiles;
use eqv::rng::substream;
use eqv::simcore::{apply_gate, born_probabilities, sample_shots, AngleSource, GateKind, GateOp, StateVector};
use eqv::vqc::{mean_loss, parameter_shift_gradient, ClassifierModel, ConfidenceVector, Executor};
use eqv_cli::config::{ExperimentConfig, Task};
use eqv_cli::runner::{impact_records, Experiment};
use num_complex::Complex64;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn binary(p_first: f64, labels: [u8; 2]) -> ConfidenceVector {
    ConfidenceVector::new(vec![p_first, 1.0 - p_first], labels.to_vec()).unwrap()
}

fn tally(confs: &[ConfidenceVector]) -> VoteTally {
    VoteTally::from_confidences(
        confs
            .iter()
            .enumerate()
            .map(|(i, c)| (ClassifierId { copy: i, machine: 0 }, c.clone()))
            .collect(),
    )
    .unwrap()
}

fn averaging_versus_voting() -> Check {
    let confs: Vec<_> = [0.6, 0.55, 0.1].iter().map(|&p| binary(p, [1, 2])).collect();
    let (label, avg) = average_aggregate(&confs).unwrap();
    let vote = plurality_vote(&tally(&confs));
    let (a1, a2) = (avg.values()[0], avg.values()[1]);
    ensure(
        (a1 - 0.4167).abs() < 1e-4 && (a2 - 0.5833).abs() < 1e-4 && label == 2 && vote == 1,
        format!("average ({a1:.4}, {a2:.4}) -> class {label}; plurality -> class {vote}"),
    )
}

fn five_classifier_example() -> Check {
    let p = [0.57, 0.63, 0.38, 0.27, 0.61];
    let confs: Vec<_> = p.iter().map(|&x| binary(x, [1, 0])).collect();
    let (label, avg) = average_aggregate(&confs).unwrap();
    let mean = avg.values()[0];
    let t = tally(&confs);
    let vote = plurality_vote(&t);
    ensure(
        (mean - 0.492).abs() < 1e-9 && label == 0 && vote == 1 && t.votes_for(1) == 3 && t.votes_for(0) == 2,
        format!(
            "mean {mean:.9} -> {label}; plurality -> {vote} ({}-{})",
            t.votes_for(1),
            t.votes_for(0)
        ),
    )
}

fn vote_count_example() -> Check {
    let t = VoteTally::from_counts(vec![1, 3, 6, 9], &[(1, 3), (3, 2), (9, 2), (6, 2)]).unwrap();
    let winner = plurality_vote(&t);
    ensure(winner == 1, format!("winner c{winner}"))
}

fn impact_examples() -> Check {
    let cases = [([0.1, 0.9], 0.8), ([0.6, 0.4], 0.2), ([0.55, 0.45], 0.1)];
    let mut ok = true;
    let mut got = Vec::new();
    for (v, want) in cases {
        let f = impact_factor(&ConfidenceVector::new(v.to_vec(), vec![1, 0]).unwrap());
        ok &= (f - want).abs() < 1e-12;
        got.push(format!("{f:.1}"));
    }
    let models: Vec<_> = cases.iter().map(|(v, _)| binary(v[0], [1, 0])).collect();
    let (avg_label, _) = average_aggregate(&models).unwrap();
    let vote = plurality_vote(&tally(&models));
    ok &= avg_label == 0 && vote == 1;
    ensure(
        ok,
        format!("impacts {}; average -> {avg_label}, voting -> {vote}", got.join("/")),
    )
}

fn machine_table() -> Check {
    let table = [
        ("ibmq_lima", 5, "2.734e-2", "1.166e-2", 8),
        ("ibmq_quito", 5, "4.714e-2", "9.675e-3", 16),
        ("ibmq_belem", 5, "3.080e-2", "6.176e-2", 16),
        ("ibm_nairobi", 7, "4.599e-2", "1.015e-2", 32),
        ("ibm_oslo", 7, "2.411e-2", "1.111e-2", 32),
    ];
    let profiles = load_profiles();
    let mut ok = profiles.len() == table.len();
    for (name, n, readout, cnot, qv) in table {
        let Some(p) = profiles.iter().find(|p| p.name == name) else {
            return Err(format!("{name} missing"));
        };
        ok &= p.n_qubits == n
            && p.readout_error == readout.parse::<f64>().unwrap()
            && p.cnot_error == cnot.parse::<f64>().unwrap()
            && p.quantum_volume == qv
            && p.shots == 1024;
    }
    ensure(ok, format!("{} profiles", profiles.len()))
}

fn random_state(n: usize, rng: &mut impl Rng) -> StateVector {
    let raw: Vec<Complex64> = (0..1 << n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let norm = raw.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    StateVector::from_amplitudes(raw.into_iter().map(|a| a / norm).collect()).unwrap()
}

fn simulator_suite() -> Check {
    let mut rng = substream(6, &[]);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let n = 2 + case % 3;
        let state = random_state(n, &mut rng);
        let q = rng.gen_range(0..n);
        let theta = rng.gen_range(-7.0..7.0);
        for kind in [GateKind::Rx, GateKind::Ry, GateKind::Rz] {
            let g = GateOp::rotation(kind, q, AngleSource::Param(0));
            let fwd = apply_gate(&state, &g, Some(theta)).unwrap();
            worst = worst.max((fwd.norm_sqr() - 1.0).abs());
            let back = apply_gate(&fwd, &g, Some(-theta)).unwrap();
            for (a, b) in back.amplitudes().iter().zip(state.amplitudes()) {
                worst = worst.max((a - b).norm());
            }
        }
        let cx = GateOp::cnot((q + 1) % n, q);
        let twice = apply_gate(&apply_gate(&state, &cx, None).unwrap(), &cx, None).unwrap();
        for (a, b) in twice.amplitudes().iter().zip(state.amplitudes()) {
            worst = worst.max((a - b).norm());
        }
        let p = born_probabilities(&state).unwrap();
        worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
    }

    let crit = ChiSquared::new(7.0).unwrap().inverse_cdf(0.99);
    let mut rejections = 0;
    for run in 0..100u64 {
        let raw: Vec<f64> = (0..8).map(|_| rng.gen_range(0.2..1.2)).collect();
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let hist = sample_shots(&probs, 1024, run).unwrap();
        let stat: f64 = hist
            .counts()
            .iter()
            .zip(&probs)
            .map(|(&o, &p)| (o as f64 - 1024.0 * p).powi(2) / (1024.0 * p))
            .sum();
        rejections += usize::from(stat > crit);
    }

    let h = 1e-5;
    let mut grad_err: f64 = 0.0;
    for case in 0..20u64 {
        let (n, labels) = if case % 2 == 0 { (2, vec![1, 9]) } else { (4, vec![1, 4, 7, 9]) };
        let options = HeaOptions {
            n_blocks: 1 + case as usize % 3,
            rotations: RotationLayer::RyRz,
            entangler: Entangler::Chain,
        };
        let variant = Variant {
            variant_id: 0,
            spec: build_hea_with(n, options).unwrap(),
        };
        let model = ClassifierModel::init(variant, labels.clone(), case).unwrap();
        let batch: Vec<Sample> = (0..4)
            .map(|i| Sample::new((0..n).map(|_| rng.gen_range(0.0..1.0)).collect(), labels[i % labels.len()], i))
            .collect();
        let grad = parameter_shift_gradient(&model, &batch, &Executor::Noiseless).unwrap();
        for (j, g) in grad.iter().enumerate() {
            let at = |d: f64| {
                let mut p = model.params.clone();
                p[j] += d;
                let m = ClassifierModel::with_params(model.variant.clone(), labels.clone(), p).unwrap();
                mean_loss(&m, &batch, &Executor::Noiseless).unwrap()
            };
            grad_err = grad_err.max((g - (at(h) - at(-h)) / (2.0 * h)).abs());
        }
    }
    ensure(
        worst < 1e-10 && rejections <= 5 && grad_err < 1e-6,
        format!("max deviation {worst:.1e}; chi-square rejections {rejections}/100; gradient error {grad_err:.1e}"),
    )
}

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn base_config(task: Task) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        task,
        ..ExperimentConfig::default()
    };
    c.data.images = data_dir().join("mnist5k-images-idx3-ubyte");
    c.data.labels = data_dir().join("mnist5k-labels-idx1-ubyte");
    c
}

fn experiment(config: ExperimentConfig) -> Experiment {
    Experiment::new(config).unwrap().without_model_files()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn noiseless_target(task: Task, threshold: f64, reference: f64) -> Check {
    let mut exp = experiment(base_config(task));
    let rows = exp.train_report().unwrap();
    let acc = mean(&rows.iter().map(|r| r.test_accuracy).collect::<Vec<_>>());
    ensure(
        acc >= threshold,
        format!("{task} mean test accuracy {acc:.3} (need >= {threshold}, reference {reference})"),
    )
}

fn noise_ordering() -> Check {
    let mut config = base_config(Task::Mnist2);
    config.qubit_counts = vec![2, 4];
    config.strategies = vec![Strategy::Plurality, Strategy::Average];
    let mut exp = experiment(config.clone());
    let cells = exp.sweep_qubits().unwrap();
    let cell = |setting: &str, n: usize| {
        let c = cells.iter().find(|c| c.setting == setting && c.n_qubits == n).unwrap();
        mean(c.accuracies.as_ref().unwrap())
    };
    let mut notes = Vec::new();
    let mut ok = true;
    for n in [2, 4] {
        let ideal = cell("simulation", n);
        for m in &config.sweep_machines {
            let noisy = cell(m, n);
            if noisy > ideal {
                ok = false;
                notes.push(format!("{m} {n}q {noisy:.3} > noiseless {ideal:.3}"));
            }
        }
    }
    for m in &config.sweep_machines {
        let (two, four) = (cell(m, 2), cell(m, 4));
        if four <= two {
            ok = false;
            notes.push(format!("{m} 4q {four:.3} <= 2q {two:.3}"));
        }
    }
    let report = exp.compare().unwrap();
    let row = |s: &str| mean(&report.rows.iter().find(|r| r.setting == s).unwrap().accuracies);
    let eqv = row("EQV");
    for m in &config.machines {
        if eqv < row(m) {
            ok = false;
            notes.push(format!("EQV {eqv:.3} < {m} {:.3}", row(m)));
        }
    }
    let strategy = |s: Strategy| mean(&report.strategies.iter().find(|(x, _)| *x == s).unwrap().1);
    let (plurality, average) = (strategy(Strategy::Plurality), strategy(Strategy::Average));
    if plurality < average {
        ok = false;
        notes.push(format!("plurality {plurality:.3} < average {average:.3}"));
    }
    let summary = format!(
        "EQV {eqv:.3}, best single {:.3}, plurality {plurality:.3} vs average {average:.3}",
        config.machines.iter().map(|m| row(m)).fold(0.0, f64::max)
    );
    if ok {
        Ok(summary)
    } else {
        Err(format!("{summary}; {}", notes.join("; ")))
    }
}

fn impact_ordering() -> Check {
    let mut config = base_config(Task::Mnist2);
    config.n_qubits = 2;
    let mut exp = experiment(config.clone());
    let mut passing = 0;
    let mut notes = Vec::new();
    for seed in config.seeds.clone() {
        let run = exp.ensemble_run(seed, config.compare_size(), false).unwrap();
        let records = impact_records(&run.votes);
        let m = |correct: bool| {
            let xs: Vec<f64> = records.iter().filter(|r| r.correct == correct).map(|r| r.impact).collect();
            (!xs.is_empty()).then(|| mean(&xs))
        };
        let (c, w) = (m(true), m(false));
        let holds = records.len() >= 200 && matches!((c, w), (Some(c), Some(w)) if w > c);
        passing += usize::from(holds);
        notes.push(format!(
            "s{seed} n={} wrong {} correct {}",
            records.len(),
            w.map_or("-".into(), |x| format!("{x:.3}")),
            c.map_or("-".into(), |x| format!("{x:.3}"))
        ));
    }
    ensure(
        passing >= 4,
        format!("{passing}/5 seeds with wrong > correct ({})", notes.join(", ")),
    )
}

struct Criterion {
    id: &'static str,
    name: &'static str,
    limit: Duration,
    run: fn() -> Check,
}

fn main() {
    let criteria = [
        Criterion {
            id: "1",
            name: "averaging vs plurality worked example",
            limit: Duration::from_secs(1),
            run: averaging_versus_voting,
        },
        Criterion {
            id: "2",
            name: "five-classifier binary example",
            limit: Duration::from_secs(1),
            run: five_classifier_example,
        },
        Criterion {
            id: "3",
            name: "vote-count example",
            limit: Duration::from_secs(1),
            run: vote_count_example,
        },
        Criterion {
            id: "4",
            name: "impact factor examples",
            limit: Duration::from_secs(1),
            run: impact_examples,
        },
        Criterion {
            id: "5",
            name: "machine profile table",
            limit: Duration::from_secs(1),
            run: machine_table,
        },
        Criterion {
            id: "6",
            name: "simulator correctness suite",
            limit: Duration::from_secs(120),
            run: simulator_suite,
        },
        Criterion {
            id: "7a",
            name: "noiseless MNIST-2 accuracy >= 0.85",
            limit: Duration::from_secs(600),
            run: || noiseless_target(Task::Mnist2, 0.85, 0.91),
        },
        Criterion {
            id: "7b",
            name: "noiseless MNIST-4 accuracy >= 0.55",
            limit: Duration::from_secs(600),
            run: || noiseless_target(Task::Mnist4, 0.55, 0.71),
        },
        Criterion {
            id: "8",
            name: "noise ordering",
            limit: Duration::from_secs(1800),
            run: noise_ordering,
        },
        Criterion {
            id: "9",
            name: "wrong predictions carry larger impact",
            limit: Duration::from_secs(600),
            run: impact_ordering,
        },
    ];

    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == c.id) {
            continue;
        }
        let start = Instant::now();
        let result = (c.run)();
        let elapsed = start.elapsed();
        let (status, detail) = match (&result, elapsed <= c.limit) {
            (Ok(d), true) => ("PASS", d.clone()),
            (Ok(d), false) => ("FAIL", format!("{d}; took {elapsed:.1?}, limit {:?}", c.limit)),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("{status} criterion {} ({}): {detail} [{elapsed:.1?}]", c.id, c.name);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
