use eqv::noise::{
    apply_cnot_depolarizing, apply_readout_error, noisy_execute, MachineProfile, NoisyExecutionConfig, PauliPair,
};
use eqv::rng::substream;
use eqv::simcore::{
    apply_gate, born_probabilities, run_circuit, sample_shots, AngleSource, Circuit, GateKind, GateOp, StateVector,
};
use num_complex::Complex64;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const TOL: f64 = 1e-10;

fn random_state(n: usize, rng: &mut impl Rng) -> StateVector {
    let raw: Vec<Complex64> = (0..1 << n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let norm = raw.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    StateVector::from_amplitudes(raw.into_iter().map(|a| a / norm).collect()).unwrap()
}

fn max_diff(a: &StateVector, b: &StateVector) -> f64 {
    a.amplitudes()
        .iter()
        .zip(b.amplitudes())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Dense single-qubit matrix for a rotation.
fn rotation_matrix(kind: GateKind, theta: f64) -> [[Complex64; 2]; 2] {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let i = Complex64::i();
    let r = |x: f64| Complex64::new(x, 0.0);
    match kind {
        GateKind::Rx => [[r(c), -i * s], [-i * s, r(c)]],
        GateKind::Ry => [[r(c), r(-s)], [r(s), r(c)]],
        GateKind::Rz => [[(-i * theta / 2.0).exp(), r(0.0)], [r(0.0), (i * theta / 2.0).exp()]],
        GateKind::Cnot => unreachable!(),
    }
}

/// Applies a 2×2 matrix to qubit `q` by explicit index arithmetic.
fn reference_apply(amps: &[Complex64], m: [[Complex64; 2]; 2], q: usize) -> Vec<Complex64> {
    (0..amps.len())
        .map(|i| {
            let bit = (i >> q) & 1;
            let i0 = i & !(1 << q);
            let i1 = i | (1 << q);
            m[bit][0] * amps[i0] + m[bit][1] * amps[i1]
        })
        .collect()
}

#[test]
fn rotations_match_dense_matrices() {
    let mut rng = substream(11, &[]);
    for case in 0..100 {
        let n = 1 + case % 4;
        let state = random_state(n, &mut rng);
        let q = rng.gen_range(0..n);
        let theta = rng.gen_range(-7.0..7.0);
        for kind in [GateKind::Rx, GateKind::Ry, GateKind::Rz] {
            let gate = GateOp::rotation(kind, q, AngleSource::Param(0));
            let got = apply_gate(&state, &gate, Some(theta)).unwrap();
            let want = reference_apply(state.amplitudes(), rotation_matrix(kind, theta), q);
            let want = StateVector::from_amplitudes(want).unwrap();
            assert!(max_diff(&got, &want) < TOL, "{kind:?} on q{q} of {n}");
        }
    }
}

#[test]
fn gates_preserve_norm() {
    let mut rng = substream(12, &[]);
    for case in 0..100 {
        let n = 2 + case % 3;
        let state = random_state(n, &mut rng);
        let theta = rng.gen_range(-7.0..7.0);
        let q = rng.gen_range(0..n);
        let c = (q + 1 + rng.gen_range(0..n - 1)) % n;
        let gates = [
            (GateOp::rx(q, AngleSource::Param(0)), Some(theta)),
            (GateOp::ry(q, AngleSource::Param(0)), Some(theta)),
            (GateOp::rz(q, AngleSource::Param(0)), Some(theta)),
            (GateOp::cnot(c, q), None),
        ];
        for (g, angle) in &gates {
            let out = apply_gate(&state, g, *angle).unwrap();
            assert!((out.norm_sqr() - 1.0).abs() < TOL);
        }
    }
}

#[test]
fn rotations_invert_and_cnot_is_self_inverse() {
    let mut rng = substream(13, &[]);
    for case in 0..100 {
        let n = 2 + case % 3;
        let state = random_state(n, &mut rng);
        let theta = rng.gen_range(-7.0..7.0);
        let q = rng.gen_range(0..n);
        for kind in [GateKind::Rx, GateKind::Ry, GateKind::Rz] {
            let gate = GateOp::rotation(kind, q, AngleSource::Param(0));
            let fwd = apply_gate(&state, &gate, Some(theta)).unwrap();
            let out = apply_gate(&fwd, &gate, Some(-theta)).unwrap();
            assert!(max_diff(&out, &state) < TOL);
        }
        let c = (q + 1) % n;
        let cx = GateOp::cnot(c, q);
        let out = apply_gate(&apply_gate(&state, &cx, None).unwrap(), &cx, None).unwrap();
        assert!(max_diff(&out, &state) < TOL);
    }
}

#[test]
fn cnot_permutes_basis_states() {
    for n in 2..=4 {
        for c in 0..n {
            for t in (0..n).filter(|&t| t != c) {
                for i in 0..1usize << n {
                    let out = apply_gate(&StateVector::basis(n, i), &GateOp::cnot(c, t), None).unwrap();
                    let expect = if (i >> c) & 1 == 1 { i ^ (1 << t) } else { i };
                    assert!((out.amplitudes()[expect].re - 1.0).abs() < TOL);
                }
            }
        }
    }
}

#[test]
fn born_probabilities_sum_to_one() {
    let mut rng = substream(14, &[]);
    for case in 0..100 {
        let state = random_state(1 + case % 5, &mut rng);
        let p = born_probabilities(&state).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < TOL);
        for (pi, a) in p.iter().zip(state.amplitudes()) {
            assert!((pi - a.norm_sqr()).abs() < TOL);
        }
    }
}

/// Pearson statistic of observed counts against expected probabilities.
fn chi_square(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    counts
        .iter()
        .zip(probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&o, &p)| {
            let e = n as f64 * p;
            (o as f64 - e).powi(2) / e
        })
        .sum()
}

fn critical_value(dof: usize) -> f64 {
    ChiSquared::new(dof as f64).unwrap().inverse_cdf(0.99)
}

#[test]
fn shot_sampling_passes_chi_square() {
    let mut rng = substream(15, &[]);
    let crit = critical_value(7);
    let mut rejections = 0;
    for run in 0..100u64 {
        let raw: Vec<f64> = (0..8).map(|_| rng.gen_range(0.2..1.2)).collect();
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let hist = sample_shots(&probs, 1024, 1000 + run).unwrap();
        if chi_square(hist.counts(), &probs) > crit {
            rejections += 1;
        }
    }
    assert!(rejections <= 5, "{rejections} rejections");
}

fn entangling_circuit() -> Circuit {
    Circuit::new(
        3,
        vec![
            GateOp::ry(0, AngleSource::Param(0)),
            GateOp::rx(1, AngleSource::Param(1)),
            GateOp::ry(2, AngleSource::Feature(0)),
            GateOp::cnot(0, 1),
            GateOp::cnot(1, 2),
            GateOp::rz(2, AngleSource::Param(2)),
            GateOp::ry(2, AngleSource::Param(0)),
        ],
        3,
        1,
    )
    .unwrap()
}

#[test]
fn zero_noise_execution_matches_ideal_sampling() {
    let circuit = entangling_circuit();
    let params = [0.7, 1.9, -0.4];
    let features = [1.1];
    let probs = born_probabilities(&run_circuit(&circuit, &params, &features).unwrap()).unwrap();
    let crit = critical_value(probs.iter().filter(|&&p| p > 0.0).count() - 1);
    let mut rejections = 0;
    for run in 0..100u64 {
        let cfg = NoisyExecutionConfig::new(MachineProfile::noiseless(5, 1024), run);
        let hist = noisy_execute(&circuit, &params, &features, &cfg).unwrap();
        assert_eq!(hist.total_shots(), 1024);
        if chi_square(hist.counts(), &probs) > crit {
            rejections += 1;
        }
    }
    assert!(rejections <= 5, "{rejections} rejections");
}

#[test]
fn twelve_of_fifteen_pauli_pairs_alter_a_basis_state() {
    let flipping = PauliPair::non_identity()
        .filter(|p| p.control.flips_bit() || p.target.flips_bit())
        .count();
    assert_eq!(PauliPair::non_identity().count(), 15);
    assert_eq!(flipping, 12);

    let start = StateVector::basis(2, 0b01);
    let ideal = 0b11;
    let mut rng = substream(16, &[]);
    let trials = 20_000;
    let mut altered = 0;
    for _ in 0..trials {
        let (out, event) = apply_cnot_depolarizing(&start, 1.0, 0, 1, &mut rng).unwrap();
        let pair = event.expect("p = 1 always inserts a pair");
        let probs = born_probabilities(&out).unwrap();
        let moved = probs[ideal] < 0.5;
        assert_eq!(moved, pair.control.flips_bit() || pair.target.flips_bit(), "{pair:?}");
        altered += usize::from(moved);
    }
    let p = 12.0 / 15.0;
    let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
    assert!((altered as f64 - trials as f64 * p).abs() < 3.0 * sigma);
}

#[test]
fn depolarizing_event_rate_matches_probability() {
    let p = 0.0117;
    let trials = 100_000;
    let mut rng = substream(17, &[]);
    let state = StateVector::zero(2);
    let events = (0..trials)
        .filter(|_| apply_cnot_depolarizing(&state, p, 0, 1, &mut rng).unwrap().1.is_some())
        .count();
    let expected = trials as f64 * p;
    let sigma = (expected * (1.0 - p)).sqrt();
    assert!((events as f64 - expected).abs() < 3.0 * sigma, "{events}");
}

#[test]
fn readout_flip_rate_matches_per_bit() {
    let p = 0.02734;
    let trials = 100_000;
    let mut rng = substream(18, &[]);
    let mut flips = [0usize; 4];
    for t in 0..trials {
        let bits = t % 16;
        let out = apply_readout_error(bits, 4, p, &mut rng).unwrap();
        for (b, f) in flips.iter_mut().enumerate() {
            *f += ((bits ^ out) >> b) & 1;
        }
    }
    let sigma = (p * (1.0 - p) / trials as f64).sqrt();
    for f in flips {
        assert!((f as f64 / trials as f64 - p).abs() < 3.0 * sigma, "{f}");
    }
}

fn profile(readout: f64, cnot: f64, shots: u64) -> MachineProfile {
    MachineProfile {
        name: "test".into(),
        n_qubits: 5,
        readout_error: readout,
        cnot_error: cnot,
        quantum_volume: 0,
        shots,
    }
}

#[test]
fn single_cnot_survival_follows_depolarizing_rate() {
    // X on qubit 0 then CNOT(0→1) ideally always reads 11.
    let circuit = Circuit::new(
        2,
        vec![GateOp::rx(0, AngleSource::Fixed(std::f64::consts::PI)), GateOp::cnot(0, 1)],
        0,
        0,
    )
    .unwrap();
    let shots = 50_000;
    let mut last = 1.0;
    for p in [0.0, 0.05, 0.1, 0.2, 0.4] {
        let cfg = NoisyExecutionConfig::new(profile(0.0, p, shots), 19);
        let hist = noisy_execute(&circuit, &[], &[], &cfg).unwrap();
        let survival = hist.count_of("11").unwrap() as f64 / shots as f64;
        let expected = 1.0 - p * 12.0 / 15.0;
        let sigma = (expected * (1.0 - expected) / shots as f64).sqrt().max(1e-9);
        assert!((survival - expected).abs() < 3.0 * sigma + 1e-12, "p={p}: {survival}");
        assert!(survival <= last);
        last = survival;
    }
}

#[test]
fn readout_only_survival_is_product_of_bit_survivals() {
    let circuit = Circuit::new(4, vec![GateOp::ry(0, AngleSource::Fixed(0.0))], 0, 0).unwrap();
    let shots = 50_000;
    for p in [0.01, 0.03, 0.1] {
        let cfg = NoisyExecutionConfig::new(profile(p, 0.0, shots), 20);
        let hist = noisy_execute(&circuit, &[], &[], &cfg).unwrap();
        let survival = hist.count_of("0000").unwrap() as f64 / shots as f64;
        let expected = (1.0 - p).powi(4);
        let sigma = (expected * (1.0 - expected) / shots as f64).sqrt();
        assert!((survival - expected).abs() < 3.0 * sigma, "p={p}: {survival}");
    }
}

#[test]
fn too_wide_circuit_is_rejected() {
    let circuit = Circuit::new(6, vec![GateOp::cnot(0, 5)], 0, 0).unwrap();
    let cfg = NoisyExecutionConfig::new(profile(0.0, 0.0, 10), 0);
    assert!(noisy_execute(&circuit, &[], &[], &cfg).is_err());
}
