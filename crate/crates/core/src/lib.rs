//! Ensemble variational quantum classifiers on simulated noisy hardware.
//!
//! The crate is layered bottom-up:
//!
//! - [`simcore`]: exact statevector simulation of RX/RY/RZ/CNOT circuits,
//!   Born-rule probabilities and seeded shot sampling.
//! - [`noise`]: machine profiles and trajectory-based noisy execution
//!   (two-qubit depolarizing after every CNOT, symmetric readout flips).
//! - [`ansatz`]: hardware-efficient ansatz construction and CNOT-layout variants.
//! - [`vqc`]: a single classifier: confidence readout, loss, parameter-shift
//!   gradients, training and prediction.
//! - [`ensemble`]: variant allocation, plurality voting and the averaging baselines.
//! - [`analysis`]: impact factors, densities and accuracy statistics.
//! - [`data`]: MNIST IDX ingestion, class subsets and pooling features.
//!
//! Bit ordering is the same everywhere: qubit 0 is the least significant bit
//! of a basis index, and bitstrings are printed most significant qubit first.

pub mod analysis;
pub mod ansatz;
pub mod data;
pub mod ensemble;
mod error;
pub mod noise;
pub mod rng;
pub mod simcore;
pub mod vqc;

pub use error::{Error, Result};
