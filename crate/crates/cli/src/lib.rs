//! Configuration-driven experiment runner for ensembles of noisy variational
//! quantum classifiers.
//!
//! [`runner::Experiment`] produces the measurements; [`commands`] turns them
//! into result tables and manifests under the configured output directory.

pub mod commands;
pub mod config;
pub mod report;
pub mod runner;
