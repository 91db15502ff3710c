//! Machine profiles and noisy circuit execution.
//!
//! Each machine is described by two scalar error rates. They are realized as
//! a two-qubit depolarizing channel after every CNOT (one of the 15
//! non-identity Pauli pairs, uniformly, with probability `cnot_error`) and an
//! independent symmetric bit flip on every measured bit (`readout_error`).
//! Execution is by trajectories: one stochastic statevector run per shot.

use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{substream, SimRng};
use crate::simcore::{born_probabilities, Circuit, GateKind, Pauli, ShotHistogram, StateVector};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineProfile {
    pub name: String,
    pub n_qubits: usize,
    pub readout_error: f64,
    pub cnot_error: f64,
    pub quantum_volume: u32,
    pub shots: u64,
}

impl MachineProfile {
    pub fn validate(&self) -> Result<()> {
        check_probability(self.readout_error)?;
        check_probability(self.cnot_error)?;
        if self.shots == 0 {
            return Err(Error::ZeroShots);
        }
        if self.n_qubits == 0 {
            return Err(Error::InvalidConfig(format!("machine {} has no qubits", self.name)));
        }
        Ok(())
    }

    /// A perfect device of the given width, sampled with `shots` shots.
    pub fn noiseless(n_qubits: usize, shots: u64) -> Self {
        Self {
            name: "noiseless".into(),
            n_qubits,
            readout_error: 0.0,
            cnot_error: 0.0,
            quantum_volume: 0,
            shots,
        }
    }
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability(p));
    }
    Ok(())
}

/// The five IBM devices used in the experiments.
pub fn load_profiles() -> Vec<MachineProfile> {
    let row = |name: &str, n_qubits, readout_error, cnot_error, quantum_volume| MachineProfile {
        name: name.to_string(),
        n_qubits,
        readout_error,
        cnot_error,
        quantum_volume,
        shots: 1024,
    };
    vec![
        row("ibmq_lima", 5, 2.734e-2, 1.166e-2, 8),
        row("ibmq_quito", 5, 4.714e-2, 9.675e-3, 16),
        row("ibmq_belem", 5, 3.080e-2, 6.176e-2, 16),
        row("ibm_nairobi", 7, 4.599e-2, 1.015e-2, 32),
        row("ibm_oslo", 7, 2.411e-2, 1.111e-2, 32),
    ]
}

/// Looks a profile up by name among `profiles`.
pub fn find_profile<'a>(profiles: &'a [MachineProfile], name: &str) -> Result<&'a MachineProfile> {
    profiles
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::UnknownProfile(name.to_string()))
}

#[derive(Debug, Deserialize, Serialize)]
struct ProfileFile {
    #[serde(default, rename = "machine")]
    machines: Vec<MachineProfile>,
}

/// Parses machine profiles from TOML text with one `[[machine]]` table per
/// device, using the field names of [`MachineProfile`].
pub fn parse_profiles(text: &str) -> Result<Vec<MachineProfile>> {
    let file: ProfileFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    for p in &file.machines {
        p.validate()?;
    }
    Ok(file.machines)
}

pub fn load_profiles_file(path: impl AsRef<Path>) -> Result<Vec<MachineProfile>> {
    parse_profiles(&std::fs::read_to_string(path)?)
}

pub fn profiles_to_toml(profiles: &[MachineProfile]) -> String {
    toml::to_string(&ProfileFile {
        machines: profiles.to_vec(),
    })
    .expect("profiles serialize")
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyExecutionConfig {
    pub profile: MachineProfile,
    pub trajectories: u64,
    pub seed: u64,
}

impl NoisyExecutionConfig {
    /// One trajectory per configured shot of the machine.
    pub fn new(profile: MachineProfile, seed: u64) -> Self {
        let trajectories = profile.shots;
        Self {
            profile,
            trajectories,
            seed,
        }
    }

    pub fn with_trajectories(mut self, trajectories: u64) -> Self {
        self.trajectories = trajectories;
        self
    }
}

/// A two-qubit Pauli error on (control, target).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PauliPair {
    pub control: Pauli,
    pub target: Pauli,
}

impl PauliPair {
    /// The 15 non-identity pairs in a fixed order.
    pub fn non_identity() -> impl Iterator<Item = PauliPair> {
        (1..16).map(Self::from_index)
    }

    fn from_index(i: usize) -> Self {
        Self {
            control: Pauli::ALL[i / 4],
            target: Pauli::ALL[i % 4],
        }
    }

    fn apply(self, state: &mut StateVector, control: usize, target: usize) {
        state.pauli(self.control, control);
        state.pauli(self.target, target);
    }
}

/// Draws the depolarizing event for one CNOT. Always consumes two draws so
/// that stream positions do not depend on `p`.
fn draw_depolarizing(p: f64, rng: &mut SimRng) -> Option<PauliPair> {
    let hit = rng.gen::<f64>() < p;
    let which = rng.gen_range(1..16);
    hit.then(|| PauliPair::from_index(which))
}

/// Ideal CNOT followed by the depolarizing channel. Returns the new state and
/// the Pauli pair that was inserted, if any.
pub fn apply_cnot_depolarizing(
    state: &StateVector,
    p: f64,
    control: usize,
    target: usize,
    rng: &mut SimRng,
) -> Result<(StateVector, Option<PauliPair>)> {
    check_probability(p)?;
    let mut out = state.clone();
    out.apply_gate_mut(&crate::simcore::GateOp::cnot(control, target), None)?;
    let event = draw_depolarizing(p, rng);
    if let Some(pair) = event {
        pair.apply(&mut out, control, target);
    }
    Ok((out, event))
}

/// Flips each of the low `n_qubits` bits of `bits` independently with
/// probability `p_flip`.
pub fn apply_readout_error(bits: usize, n_qubits: usize, p_flip: f64, rng: &mut SimRng) -> Result<usize> {
    check_probability(p_flip)?;
    Ok(flip_bits(bits, n_qubits, p_flip, rng))
}

fn flip_bits(bits: usize, n_qubits: usize, p_flip: f64, rng: &mut SimRng) -> usize {
    (0..n_qubits).fold(bits, |acc, q| {
        if rng.gen::<f64>() < p_flip {
            acc ^ (1 << q)
        } else {
            acc
        }
    })
}

fn simulate_with_events(
    circuit: &Circuit,
    params: &[f64],
    features: &[f64],
    events: &[Option<PauliPair>],
) -> StateVector {
    let mut state = StateVector::zero(circuit.n_qubits());
    let mut cnot_index = 0;
    for op in circuit.ops() {
        match op.kind() {
            GateKind::Cnot => {
                let control = op.control().expect("validated");
                state.cnot(control, op.target());
                if let Some(pair) = events[cnot_index] {
                    pair.apply(&mut state, control, op.target());
                }
                cnot_index += 1;
            }
            kind => {
                let theta = Circuit::resolve(op, params, features).expect("validated");
                state.rotate(kind, op.target(), theta);
            }
        }
    }
    state
}

/// Runs `config.trajectories` noisy shots of the circuit.
///
/// Shot `s` uses the substream `(config.seed, s)`: it first draws the
/// depolarizing event for every CNOT, then one Born-rule outcome from the
/// resulting state, then the readout flips. Shots without a depolarizing
/// event reuse the ideal output distribution.
pub fn noisy_execute(
    circuit: &Circuit,
    params: &[f64],
    features: &[f64],
    config: &NoisyExecutionConfig,
) -> Result<ShotHistogram> {
    let profile = &config.profile;
    profile.validate()?;
    if config.trajectories == 0 {
        return Err(Error::ZeroShots);
    }
    if circuit.n_qubits() > profile.n_qubits {
        return Err(Error::CircuitTooWide {
            machine: profile.name.clone(),
            needed: circuit.n_qubits(),
            available: profile.n_qubits,
        });
    }
    circuit.check_inputs(params, features)?;

    let n = circuit.n_qubits();
    let ideal = born_probabilities(&simulate_with_events(
        circuit,
        params,
        features,
        &vec![None; circuit.cnot_count()],
    ))?;
    let ideal_index = WeightedIndex::new(&ideal).expect("normalized");

    let mut hist = ShotHistogram::new(n);
    let mut events = vec![None; circuit.cnot_count()];
    for shot in 0..config.trajectories {
        let mut rng = substream(config.seed, &[shot]);
        for e in events.iter_mut() {
            *e = draw_depolarizing(profile.cnot_error, &mut rng);
        }
        let outcome = if events.iter().all(Option::is_none) {
            ideal_index.sample(&mut rng)
        } else {
            let state = simulate_with_events(circuit, params, features, &events);
            let probs = born_probabilities(&state)?;
            WeightedIndex::new(&probs).expect("normalized").sample(&mut rng)
        };
        hist.record(flip_bits(outcome, n, profile.readout_error, &mut rng));
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simcore::{apply_gate, AngleSource, GateOp, NORM_TOL};

    fn profile(readout: f64, cnot: f64) -> MachineProfile {
        MachineProfile {
            readout_error: readout,
            cnot_error: cnot,
            ..MachineProfile::noiseless(5, 1024)
        }
    }

    #[test]
    fn table_values() {
        let profiles = load_profiles();
        assert_eq!(profiles.len(), 5);
        let lima = find_profile(&profiles, "ibmq_lima").unwrap();
        assert_eq!(
            (lima.n_qubits, lima.readout_error, lima.cnot_error, lima.quantum_volume, lima.shots),
            (5, 2.734e-2, 1.166e-2, 8, 1024)
        );
        let oslo = find_profile(&profiles, "ibm_oslo").unwrap();
        assert_eq!(
            (oslo.n_qubits, oslo.readout_error, oslo.cnot_error, oslo.quantum_volume),
            (7, 2.411e-2, 1.111e-2, 32)
        );
        assert!(profiles.iter().all(|p| p.shots == 1024));
        assert!(matches!(find_profile(&profiles, "ibmq_x"), Err(Error::UnknownProfile(_))));
    }

    #[test]
    fn profile_file_round_trip() {
        let text = profiles_to_toml(&load_profiles());
        assert_eq!(parse_profiles(&text).unwrap(), load_profiles());

        let custom = r#"
            [[machine]]
            name = "hypothetical"
            n_qubits = 3
            readout_error = 0.5
            cnot_error = 0.0
            quantum_volume = 4
            shots = 10
        "#;
        assert_eq!(parse_profiles(custom).unwrap()[0].name, "hypothetical");
        assert!(matches!(
            parse_profiles(&custom.replace("0.5", "1.5")),
            Err(Error::InvalidProbability(_))
        ));
        assert!(parse_profiles(&custom.replace("shots = 10", "")).is_err());
    }

    #[test]
    fn depolarizing_zero_is_ideal_cnot() {
        let s = apply_gate(&StateVector::zero(2), &GateOp::ry(0, AngleSource::Fixed(0.7)), Some(0.7)).unwrap();
        let ideal = apply_gate(&s, &GateOp::cnot(0, 1), None).unwrap();
        for seed in 0..50 {
            let (out, ev) = apply_cnot_depolarizing(&s, 0.0, 0, 1, &mut substream(seed, &[])).unwrap();
            assert_eq!(out, ideal);
            assert!(ev.is_none());
        }
    }

    #[test]
    fn depolarizing_rejects_bad_probability() {
        let s = StateVector::zero(2);
        let mut rng = substream(0, &[]);
        assert!(apply_cnot_depolarizing(&s, -0.1, 0, 1, &mut rng).is_err());
        assert!(apply_cnot_depolarizing(&s, 1.1, 0, 1, &mut rng).is_err());
        assert!(apply_readout_error(0, 2, 2.0, &mut rng).is_err());
    }

    #[test]
    fn readout_limits() {
        let mut rng = substream(9, &[]);
        for bits in 0..16 {
            assert_eq!(apply_readout_error(bits, 4, 0.0, &mut rng).unwrap(), bits);
            assert_eq!(apply_readout_error(bits, 4, 1.0, &mut rng).unwrap(), bits ^ 0b1111);
        }
    }

    #[test]
    fn too_wide_circuit_rejected() {
        let ops = (0..6).map(|q| GateOp::ry(q, AngleSource::Feature(q))).collect();
        let c = Circuit::new(6, ops, 0, 6).unwrap();
        let cfg = NoisyExecutionConfig::new(load_profiles()[0].clone(), 1);
        assert!(matches!(
            noisy_execute(&c, &[], &[0.0; 6], &cfg),
            Err(Error::CircuitTooWide { needed: 6, available: 5, .. })
        ));
    }

    #[test]
    fn readout_only_noise_on_zero_output() {
        let c = Circuit::new(1, vec![GateOp::ry(0, AngleSource::Param(0))], 1, 0).unwrap();
        let cfg = NoisyExecutionConfig::new(profile(0.1, 0.0), 2024);
        let h = noisy_execute(&c, &[0.0], &[], &cfg).unwrap();
        assert_eq!(h.total_shots(), 1024);
        let ones = h.count(1) as f64;
        // 102.4 ± 3σ, σ = sqrt(1024 · 0.1 · 0.9)
        assert!((ones - 102.4).abs() <= 3.0 * (1024.0f64 * 0.09).sqrt(), "ones = {ones}");
    }

    #[test]
    fn noisy_execute_is_deterministic_and_conserves_shots() {
        let c = Circuit::new(
            2,
            vec![
                GateOp::ry(0, AngleSource::Feature(0)),
                GateOp::cnot(0, 1),
                GateOp::ry(1, AngleSource::Param(0)),
            ],
            1,
            1,
        )
        .unwrap();
        let cfg = NoisyExecutionConfig::new(profile(0.05, 0.2), 77).with_trajectories(333);
        let a = noisy_execute(&c, &[0.4], &[1.1], &cfg).unwrap();
        let b = noisy_execute(&c, &[0.4], &[1.1], &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.total_shots(), 333);
        assert_eq!(a.counts().iter().sum::<u64>(), 333);
    }

    #[test]
    fn pauli_insertion_preserves_norm() {
        let s = apply_gate(&StateVector::zero(3), &GateOp::rx(2, AngleSource::Fixed(0.3)), Some(0.3)).unwrap();
        for seed in 0..30 {
            let (out, _) = apply_cnot_depolarizing(&s, 1.0, 2, 0, &mut substream(seed, &[1])).unwrap();
            assert!((out.norm_sqr() - 1.0).abs() < NORM_TOL);
        }
    }
}
