//! Hardware-efficient ansatz and its CNOT-layout variants.
//!
//! Layout: one RY encoding rotation per qubit (feature slot `q` on qubit
//! `q`), followed by `n_blocks` entangled unitaries. Each entangled unitary is
//! a CNOT layer whose undirected graph connects every qubit, followed by a
//! layer of trainable rotations on every qubit.
//!
//! The default CNOT layer is a linear chain that ends on qubit 0, so that
//! the readout qubits (0, 1, ...) sit at the downstream end of the
//! entanglement: `(n-1 → n-2), ..., (1 → 0)`.
//!
//! A variant relabels the qubits of the base CNOT layer by a permutation.
//! Every permutation of a chain is again a chain, so variants keep the
//! qubit count, the gate counts and connectivity; only placement changes.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::substream;
use crate::simcore::{AngleSource, Circuit, GateKind, GateOp, MAX_QUBITS};
use crate::{Error, Result};

pub type CnotPair = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Entangler {
    /// `n - 1` CNOTs along a path through all qubits.
    #[default]
    Chain,
    /// A CNOT on every pair of qubits.
    AllPairs,
}

impl Entangler {
    fn pattern(self, n_qubits: usize) -> Vec<CnotPair> {
        match self {
            Entangler::Chain => (1..n_qubits).rev().map(|q| (q, q - 1)).collect(),
            Entangler::AllPairs => (0..n_qubits)
                .rev()
                .flat_map(|c| (0..c).rev().map(move |t| (c, t)))
                .collect(),
        }
    }
}

/// Rotation kinds applied to every qubit in a trainable layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RotationLayer {
    #[default]
    Ry,
    RyRz,
}

impl RotationLayer {
    pub fn kinds(self) -> &'static [GateKind] {
        match self {
            RotationLayer::Ry => &[GateKind::Ry],
            RotationLayer::RyRz => &[GateKind::Ry, GateKind::Rz],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeaOptions {
    pub n_blocks: usize,
    pub rotations: RotationLayer,
    pub entangler: Entangler,
}

impl Default for HeaOptions {
    fn default() -> Self {
        Self {
            n_blocks: 1,
            rotations: RotationLayer::Ry,
            entangler: Entangler::Chain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntangledUnitary {
    pub cnot_pairs: Vec<CnotPair>,
    pub rotations: RotationLayer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub n_qubits: usize,
    pub entangler: Entangler,
    #[serde(rename = "block")]
    pub blocks: Vec<EntangledUnitary>,
}

/// Undirected connectivity of the CNOT graph over `n_qubits` vertices.
pub fn is_connected(n_qubits: usize, pairs: &[CnotPair]) -> bool {
    if n_qubits == 0 {
        return false;
    }
    let mut parent: Vec<usize> = (0..n_qubits).collect();
    fn root(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(a, b) in pairs {
        if a >= n_qubits || b >= n_qubits {
            return false;
        }
        let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
        parent[ra] = rb;
    }
    let r0 = root(&mut parent, 0);
    (1..n_qubits).all(|q| root(&mut parent, q) == r0)
}

impl AnsatzSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_qubits < 2 || self.n_qubits > MAX_QUBITS {
            return Err(Error::InvalidAnsatz(format!(
                "qubit count {} outside 2..={MAX_QUBITS}",
                self.n_qubits
            )));
        }
        if self.blocks.is_empty() {
            return Err(Error::InvalidAnsatz("no entangled unitary".into()));
        }
        for (i, block) in self.blocks.iter().enumerate() {
            if block.cnot_pairs.iter().any(|(c, t)| c == t) {
                return Err(Error::InvalidAnsatz(format!("block {i} has a CNOT with control = target")));
            }
            if !is_connected(self.n_qubits, &block.cnot_pairs) {
                return Err(Error::InvalidAnsatz(format!(
                    "block {i} CNOTs do not connect all qubits"
                )));
            }
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.n_qubits
    }

    pub fn n_params(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.rotations.kinds().len() * self.n_qubits)
            .sum()
    }

    pub fn encoding_gates(&self) -> Vec<GateOp> {
        (0..self.n_qubits)
            .map(|q| GateOp::ry(q, AngleSource::Feature(q)))
            .collect()
    }

    pub fn cnot_layout(&self) -> Vec<Vec<CnotPair>> {
        self.blocks.iter().map(|b| b.cnot_pairs.clone()).collect()
    }

    /// Lowers the ansatz to a gate list.
    pub fn to_circuit(&self) -> Result<Circuit> {
        self.validate()?;
        let mut ops = self.encoding_gates();
        let mut slot = 0;
        for block in &self.blocks {
            ops.extend(block.cnot_pairs.iter().map(|&(c, t)| GateOp::cnot(c, t)));
            for q in 0..self.n_qubits {
                for &kind in block.rotations.kinds() {
                    ops.push(GateOp::rotation(kind, q, AngleSource::Param(slot)));
                    slot += 1;
                }
            }
        }
        Circuit::new(self.n_qubits, ops, slot, self.n_qubits)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("ansatz serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Builds the default hardware-efficient ansatz: RY encoding, then
/// `n_blocks` chain-CNOT + RY blocks.
pub fn build_hea(n_qubits: usize, n_blocks: usize) -> Result<AnsatzSpec> {
    build_hea_with(
        n_qubits,
        HeaOptions {
            n_blocks,
            ..HeaOptions::default()
        },
    )
}

pub fn build_hea_with(n_qubits: usize, options: HeaOptions) -> Result<AnsatzSpec> {
    if n_qubits < 2 {
        return Err(Error::InvalidAnsatz(format!(
            "need at least 2 qubits to entangle, got {n_qubits}"
        )));
    }
    if options.n_blocks == 0 {
        return Err(Error::InvalidAnsatz("need at least one entangled unitary".into()));
    }
    let block = EntangledUnitary {
        cnot_pairs: options.entangler.pattern(n_qubits),
        rotations: options.rotations,
    };
    let spec = AnsatzSpec {
        n_qubits,
        entangler: options.entangler,
        blocks: vec![block; options.n_blocks],
    };
    spec.validate()?;
    Ok(spec)
}

/// An ansatz whose CNOT placement is rearranged relative to a base.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub variant_id: usize,
    pub spec: AnsatzSpec,
}

impl Variant {
    pub fn n_qubits(&self) -> usize {
        self.spec.n_qubits
    }

    pub fn n_params(&self) -> usize {
        self.spec.n_params()
    }

    pub fn n_features(&self) -> usize {
        self.spec.n_features()
    }

    pub fn circuit(&self) -> Result<Circuit> {
        self.spec.to_circuit()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("variant serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let v: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        v.spec.validate()?;
        Ok(v)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

fn relabel(layout: &[Vec<CnotPair>], perm: &[usize]) -> Vec<Vec<CnotPair>> {
    layout
        .iter()
        .map(|block| block.iter().map(|&(c, t)| (perm[c], perm[t])).collect())
        .collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// Above this width layouts are sampled instead of enumerated.
const ENUMERATION_LIMIT: usize = 7;

/// Distinct CNOT layouts reachable from `base` by qubit relabeling, base first.
pub fn enumerate_layouts(base: &AnsatzSpec) -> Vec<Vec<Vec<CnotPair>>> {
    let layout = base.cnot_layout();
    let mut seen = HashSet::new();
    permutations(base.n_qubits)
        .iter()
        .map(|p| relabel(&layout, p))
        .filter(|l| seen.insert(l.clone()))
        .collect()
}

/// `k` distinct variants of `base`; variant 0 is the base itself and the
/// rest are drawn without replacement under `seed`.
pub fn generate_variants(base: &AnsatzSpec, k: usize, seed: u64) -> Result<Vec<Variant>> {
    base.validate()?;
    if k == 0 {
        return Err(Error::InvalidAnsatz("requested zero variants".into()));
    }
    let mut rng = substream(seed, &[base.n_qubits as u64, k as u64]);
    let layouts = if base.n_qubits <= ENUMERATION_LIMIT {
        let mut all = enumerate_layouts(base);
        if k > all.len() {
            return Err(Error::TooManyVariants {
                requested: k,
                available: all.len(),
            });
        }
        let base_layout = all.remove(0);
        all.shuffle(&mut rng);
        std::iter::once(base_layout).chain(all.into_iter().take(k - 1)).collect()
    } else {
        let base_layout = base.cnot_layout();
        let mut seen = HashSet::from([base_layout.clone()]);
        let mut out = vec![base_layout.clone()];
        let mut perm: Vec<usize> = (0..base.n_qubits).collect();
        let mut attempts = 0;
        while out.len() < k {
            attempts += 1;
            if attempts > 100 * k {
                return Err(Error::TooManyVariants {
                    requested: k,
                    available: out.len(),
                });
            }
            perm.shuffle(&mut rng);
            let l = relabel(&base_layout, &perm);
            if seen.insert(l.clone()) {
                out.push(l);
            }
        }
        out
    };
    Ok(layouts
        .into_iter()
        .enumerate()
        .map(|(variant_id, layout)| {
            let mut spec = base.clone();
            for (block, pairs) in spec.blocks.iter_mut().zip(layout) {
                block.cnot_pairs = pairs;
            }
            Variant { variant_id, spec }
        })
        .collect())
}

/// Maps features in `[0, 1]` to rotation angles in `[0, π]`.
pub fn embed_features(features: &[f64]) -> Result<Vec<f64>> {
    features
        .iter()
        .map(|&f| {
            if (0.0..=1.0).contains(&f) {
                Ok(PI * f)
            } else {
                Err(Error::FeatureOutOfRange(f))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    use crate::simcore::{born_probabilities, run_circuit};

    #[test]
    fn half_ansatz_on_two_qubits() {
        let spec = build_hea(2, 1).unwrap();
        let c = spec.to_circuit().unwrap();
        assert_eq!(c.n_features(), 2);
        assert_eq!(c.n_params(), 2);
        assert_eq!(c.cnot_count(), 1);
    }

    #[test]
    fn four_qubit_block_shape() {
        let spec = build_hea(4, 1).unwrap();
        assert_eq!(spec.n_features(), 4);
        assert_eq!(spec.n_params(), 4);
        assert!(is_connected(4, &spec.blocks[0].cnot_pairs));
        assert_eq!(spec.blocks[0].cnot_pairs, vec![(3, 2), (2, 1), (1, 0)]);
    }

    #[test]
    fn parameter_counting() {
        for n in 2..=6 {
            for b in 1..=3 {
                let spec = build_hea(n, b).unwrap();
                assert_eq!(spec.n_params(), n * b);
                assert_eq!(spec.n_features(), n);
                assert_eq!(spec.to_circuit().unwrap().n_params(), n * b);
            }
        }
        let two_rot = build_hea_with(
            3,
            HeaOptions {
                n_blocks: 2,
                rotations: RotationLayer::RyRz,
                entangler: Entangler::AllPairs,
            },
        )
        .unwrap();
        assert_eq!(two_rot.n_params(), 12);
        assert_eq!(two_rot.blocks[0].cnot_pairs.len(), 3);
    }

    #[test]
    fn build_errors() {
        assert!(build_hea(1, 1).is_err());
        assert!(build_hea(3, 0).is_err());
    }

    #[test]
    fn single_variant_is_base() {
        let base = build_hea(4, 1).unwrap();
        let v = generate_variants(&base, 1, 42).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].spec, base);
        assert_eq!(v[0].variant_id, 0);
    }

    #[test]
    fn distinct_chains_are_both_reachable() {
        let base = build_hea(4, 1).unwrap();
        let layouts = enumerate_layouts(&base);
        assert_eq!(layouts.len(), 24);
        let a = vec![vec![(0, 1), (1, 2), (2, 3)]];
        let b = vec![vec![(0, 2), (2, 1), (1, 3)]];
        assert!(layouts.contains(&a));
        assert!(layouts.contains(&b));
    }

    #[test]
    fn two_qubit_layouts_are_exhausted_at_three() {
        let base = build_hea(2, 1).unwrap();
        assert_eq!(generate_variants(&base, 2, 0).unwrap().len(), 2);
        assert!(matches!(
            generate_variants(&base, 3, 0),
            Err(Error::TooManyVariants { requested: 3, available: 2 })
        ));
    }

    #[test]
    fn wide_registers_sample_layouts() {
        let base = build_hea(9, 1).unwrap();
        let v = generate_variants(&base, 5, 3).unwrap();
        assert_eq!(v.len(), 5);
        for x in &v {
            assert!(is_connected(9, &x.spec.blocks[0].cnot_pairs));
        }
        assert_eq!(v, generate_variants(&base, 5, 3).unwrap());
    }

    #[test]
    fn embedding_examples() {
        assert_eq!(embed_features(&[0.0, 1.0]).unwrap(), vec![0.0, PI]);
        let angle = embed_features(&[0.5]).unwrap()[0];
        assert!((angle - FRAC_PI_2).abs() < 1e-15);
        let c = Circuit::new(1, vec![GateOp::ry(0, AngleSource::Feature(0))], 0, 1).unwrap();
        let p = born_probabilities(&run_circuit(&c, &[], &[angle]).unwrap()).unwrap();
        assert!((p[1] - 0.5).abs() < 1e-10);
        assert!(matches!(embed_features(&[1.01]), Err(Error::FeatureOutOfRange(_))));
        assert!(embed_features(&[-0.1]).is_err());
    }

    #[test]
    fn variant_file_round_trip() {
        let base = build_hea_with(
            4,
            HeaOptions {
                n_blocks: 2,
                rotations: RotationLayer::RyRz,
                entangler: Entangler::Chain,
            },
        )
        .unwrap();
        for v in generate_variants(&base, 3, 5).unwrap() {
            assert_eq!(Variant::from_toml(&v.to_toml()).unwrap(), v);
        }
        assert_eq!(AnsatzSpec::from_toml(&base.to_toml()).unwrap(), base);
    }

    #[test]
    fn disconnected_layout_rejected() {
        let mut spec = build_hea(4, 1).unwrap();
        spec.blocks[0].cnot_pairs = vec![(0, 1), (2, 3)];
        assert!(spec.validate().is_err());
        assert!(AnsatzSpec::from_toml(&spec.to_toml()).is_err());
    }
}
