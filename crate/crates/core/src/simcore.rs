//! Exact statevector simulation.
//!
//! Conventions:
//! - `RX(θ) = exp(-iθX/2)`, `RY(θ) = exp(-iθY/2)`, `RZ(θ) = exp(-iθZ/2)`.
//! - Basis index `i` encodes qubit `q` in bit `q` (qubit 0 is the least
//!   significant bit). Bitstrings are printed with qubit 0 rightmost.

use num_complex::Complex64;
use rand::distributions::{Distribution, WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::rng::{substream, SimRng};
use crate::{Error, Result};

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 10;

/// Tolerance for single-step exactness checks.
pub const EXACT_TOL: f64 = 1e-10;

/// Tolerance for normalization preconditions, which may carry error
/// accumulated over up to ~100 gates.
pub const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// The all-zeros basis state `|0...0⟩`.
    pub fn zero(n_qubits: usize) -> Self {
        Self::basis(n_qubits, 0)
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(n_qubits: usize, index: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Self {
            n_qubits,
            amplitudes,
        }
    }

    /// Wraps explicit amplitudes; the length must be a power of two and the
    /// vector must be normalized.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() || len > (1 << MAX_QUBITS) {
            return Err(Error::LengthMismatch {
                what: "amplitude vector (power of two)",
                expected: len.next_power_of_two().max(2),
                actual: len,
            });
        }
        let state = Self {
            n_qubits: len.trailing_zeros() as usize,
            amplitudes,
        };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(state)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// In-place variant of [`apply_gate`].
    pub fn apply_gate_mut(&mut self, gate: &GateOp, angle: Option<f64>) -> Result<()> {
        gate.validate(self.n_qubits)?;
        match (gate.kind, angle) {
            (GateKind::Cnot, None) => {
                self.cnot(gate.control.expect("validated"), gate.target);
                Ok(())
            }
            (GateKind::Cnot, Some(_)) => Err(Error::UnexpectedAngle),
            (_, None) => Err(Error::MissingAngle),
            (kind, Some(theta)) => {
                self.rotate(kind, gate.target, theta);
                Ok(())
            }
        }
    }

    fn apply_single(&mut self, q: usize, m: [[Complex64; 2]; 2]) {
        let bit = 1usize << q;
        for i in 0..self.amplitudes.len() {
            if i & bit == 0 {
                let j = i | bit;
                let a = self.amplitudes[i];
                let b = self.amplitudes[j];
                self.amplitudes[i] = m[0][0] * a + m[0][1] * b;
                self.amplitudes[j] = m[1][0] * a + m[1][1] * b;
            }
        }
    }

    pub(crate) fn rotate(&mut self, kind: GateKind, q: usize, theta: f64) {
        let (s, c) = (theta / 2.0).sin_cos();
        let zero = Complex64::new(0.0, 0.0);
        let m = match kind {
            GateKind::Rx => [
                [Complex64::new(c, 0.0), Complex64::new(0.0, -s)],
                [Complex64::new(0.0, -s), Complex64::new(c, 0.0)],
            ],
            GateKind::Ry => [
                [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
                [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
            ],
            GateKind::Rz => [
                [Complex64::new(c, -s), zero],
                [zero, Complex64::new(c, s)],
            ],
            GateKind::Cnot => unreachable!("CNOT is not a rotation"),
        };
        self.apply_single(q, m);
    }

    pub(crate) fn cnot(&mut self, control: usize, target: usize) {
        let (cbit, tbit) = (1usize << control, 1usize << target);
        for i in 0..self.amplitudes.len() {
            if i & cbit != 0 && i & tbit == 0 {
                self.amplitudes.swap(i, i | tbit);
            }
        }
    }

    pub(crate) fn pauli(&mut self, pauli: Pauli, q: usize) {
        let bit = 1usize << q;
        match pauli {
            Pauli::I => {}
            Pauli::X => {
                for i in 0..self.amplitudes.len() {
                    if i & bit == 0 {
                        self.amplitudes.swap(i, i | bit);
                    }
                }
            }
            Pauli::Z => {
                for (i, a) in self.amplitudes.iter_mut().enumerate() {
                    if i & bit != 0 {
                        *a = -*a;
                    }
                }
            }
            Pauli::Y => {
                // Y = [[0, -i], [i, 0]]
                let i_unit = Complex64::new(0.0, 1.0);
                for i in 0..self.amplitudes.len() {
                    if i & bit == 0 {
                        let j = i | bit;
                        let a = self.amplitudes[i];
                        let b = self.amplitudes[j];
                        self.amplitudes[i] = -i_unit * b;
                        self.amplitudes[j] = i_unit * a;
                    }
                }
            }
        }
    }
}

/// Single-qubit Pauli operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    /// True when the operator permutes computational basis states.
    pub fn flips_bit(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    Cnot,
}

impl GateKind {
    pub fn is_rotation(self) -> bool {
        self != GateKind::Cnot
    }
}

/// Where a rotation gate takes its angle from at execution time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngleSource {
    Fixed(f64),
    Param(usize),
    Feature(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateOp {
    kind: GateKind,
    target: usize,
    control: Option<usize>,
    angle: Option<AngleSource>,
}

impl GateOp {
    pub fn rotation(kind: GateKind, target: usize, angle: AngleSource) -> Self {
        assert!(kind.is_rotation(), "use GateOp::cnot for CNOT gates");
        Self {
            kind,
            target,
            control: None,
            angle: Some(angle),
        }
    }

    pub fn rx(target: usize, angle: AngleSource) -> Self {
        Self::rotation(GateKind::Rx, target, angle)
    }

    pub fn ry(target: usize, angle: AngleSource) -> Self {
        Self::rotation(GateKind::Ry, target, angle)
    }

    pub fn rz(target: usize, angle: AngleSource) -> Self {
        Self::rotation(GateKind::Rz, target, angle)
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self {
            kind: GateKind::Cnot,
            target,
            control: Some(control),
            angle: None,
        }
    }

    pub fn kind(&self) -> GateKind {
        self.kind
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn control(&self) -> Option<usize> {
        self.control
    }

    pub fn angle_source(&self) -> Option<AngleSource> {
        self.angle
    }

    /// Checks qubit indices against a register width.
    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        let check = |q: usize| {
            if q >= n_qubits {
                Err(Error::QubitOutOfRange { index: q, n_qubits })
            } else {
                Ok(())
            }
        };
        check(self.target)?;
        if let Some(c) = self.control {
            check(c)?;
            if c == self.target {
                return Err(Error::SameControlTarget(c));
            }
        }
        Ok(())
    }
}

/// Applies one gate, returning a new state. `angle` must be present exactly
/// when the gate is a rotation.
pub fn apply_gate(state: &StateVector, gate: &GateOp, angle: Option<f64>) -> Result<StateVector> {
    let mut out = state.clone();
    out.apply_gate_mut(gate, angle)?;
    Ok(out)
}

/// An ordered gate list with trainable-parameter and feature slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    ops: Vec<GateOp>,
    n_params: usize,
    n_features: usize,
}

impl Circuit {
    pub fn new(n_qubits: usize, ops: Vec<GateOp>, n_params: usize, n_features: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::InvalidCircuit(format!(
                "qubit count {n_qubits} outside 1..={MAX_QUBITS}"
            )));
        }
        let mut param_used = vec![false; n_params];
        let mut feature_used = vec![false; n_features];
        for op in &ops {
            op.validate(n_qubits)?;
            match op.angle {
                Some(AngleSource::Param(k)) => match param_used.get_mut(k) {
                    Some(used) => *used = true,
                    None => {
                        return Err(Error::InvalidCircuit(format!(
                            "parameter slot {k} >= {n_params}"
                        )))
                    }
                },
                Some(AngleSource::Feature(k)) => match feature_used.get_mut(k) {
                    Some(used) => *used = true,
                    None => {
                        return Err(Error::InvalidCircuit(format!(
                            "feature slot {k} >= {n_features}"
                        )))
                    }
                },
                _ => {}
            }
        }
        if let Some(k) = param_used.iter().position(|u| !u) {
            return Err(Error::InvalidCircuit(format!("parameter slot {k} unused")));
        }
        if let Some(k) = feature_used.iter().position(|u| !u) {
            return Err(Error::InvalidCircuit(format!("feature slot {k} unused")));
        }
        Ok(Self {
            n_qubits,
            ops,
            n_params,
            n_features,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn ops(&self) -> &[GateOp] {
        &self.ops
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn cnot_count(&self) -> usize {
        self.ops.iter().filter(|op| op.kind == GateKind::Cnot).count()
    }

    pub(crate) fn check_inputs(&self, params: &[f64], features: &[f64]) -> Result<()> {
        if params.len() != self.n_params {
            return Err(Error::LengthMismatch {
                what: "params",
                expected: self.n_params,
                actual: params.len(),
            });
        }
        if features.len() != self.n_features {
            return Err(Error::LengthMismatch {
                what: "features",
                expected: self.n_features,
                actual: features.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn resolve(op: &GateOp, params: &[f64], features: &[f64]) -> Option<f64> {
        op.angle.map(|src| match src {
            AngleSource::Fixed(a) => a,
            AngleSource::Param(k) => params[k],
            AngleSource::Feature(k) => features[k],
        })
    }
}

/// Runs `circuit` from `|0...0⟩` with the given slot values.
pub fn run_circuit(circuit: &Circuit, params: &[f64], features: &[f64]) -> Result<StateVector> {
    circuit.check_inputs(params, features)?;
    let mut state = StateVector::zero(circuit.n_qubits);
    for op in &circuit.ops {
        match op.kind {
            GateKind::Cnot => state.cnot(op.control.expect("validated"), op.target),
            kind => {
                let theta = Circuit::resolve(op, params, features).expect("validated");
                state.rotate(kind, op.target, theta);
            }
        }
    }
    Ok(state)
}

/// `|amplitude_i|²` for every basis index.
pub fn born_probabilities(state: &StateVector) -> Result<Vec<f64>> {
    let norm = state.norm_sqr();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized(norm));
    }
    Ok(state.amplitudes.iter().map(|a| a.norm_sqr()).collect())
}

/// Measurement outcome counts, indexed by basis index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotHistogram {
    n_qubits: usize,
    counts: Vec<u64>,
    total_shots: u64,
}

impl ShotHistogram {
    pub fn new(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            counts: vec![0; 1 << n_qubits],
            total_shots: 0,
        }
    }

    pub fn record(&mut self, outcome: usize) {
        self.counts[outcome] += 1;
        self.total_shots += 1;
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn total_shots(&self) -> u64 {
        self.total_shots
    }

    pub fn count(&self, outcome: usize) -> u64 {
        self.counts[outcome]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Count for a bitstring written qubit-0-rightmost, e.g. `"10"`.
    pub fn count_of(&self, bits: &str) -> Option<u64> {
        if bits.len() != self.n_qubits {
            return None;
        }
        usize::from_str_radix(bits, 2).ok().map(|i| self.counts[i])
    }

    /// Relative frequencies, summing to 1.
    pub fn frequencies(&self) -> Vec<f64> {
        let total = self.total_shots as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }

    /// Non-zero entries as `(bitstring, count)`.
    pub fn nonzero(&self) -> impl Iterator<Item = (String, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (format_bitstring(i, self.n_qubits), c))
    }
}

/// Formats a basis index as a bitstring, most significant qubit first.
pub fn format_bitstring(index: usize, n_qubits: usize) -> String {
    format!("{index:0n_qubits$b}")
}

pub(crate) fn check_distribution(dist: &[f64]) -> Result<()> {
    if dist.len() < 2 || !dist.len().is_power_of_two() {
        return Err(Error::LengthMismatch {
            what: "distribution (power of two)",
            expected: dist.len().next_power_of_two().max(2),
            actual: dist.len(),
        });
    }
    let sum: f64 = dist.iter().sum();
    if dist.iter().any(|p| p.is_nan() || *p < 0.0) || (sum - 1.0).abs() > NORM_TOL {
        return Err(Error::InvalidDistribution(sum));
    }
    Ok(())
}

pub(crate) fn sample_with(dist: &[f64], shots: u64, rng: &mut SimRng) -> ShotHistogram {
    let n_qubits = dist.len().trailing_zeros() as usize;
    let index = WeightedIndex::new(dist).expect("validated distribution");
    let mut hist = ShotHistogram::new(n_qubits);
    for _ in 0..shots {
        hist.record(index.sample(rng));
    }
    hist
}

/// Draws `shots` independent outcomes from `dist`.
pub fn sample_shots(dist: &[f64], shots: u64, seed: u64) -> Result<ShotHistogram> {
    check_distribution(dist)?;
    if shots == 0 {
        return Err(Error::ZeroShots);
    }
    Ok(sample_with(dist, shots, &mut substream(seed, &[])))
}
