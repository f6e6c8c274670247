//! Scenario-driven driver for `graphon-sir`.
//!
//! A scenario TOML describes the graphon, sampler, coefficients, initial data,
//! integrator and outputs of an experiment. Each subcommand writes its files
//! under `<out>/<prefix>_*` and a manifest `<prefix>_<command>_manifest.json`
//! that lists them with hashes, the seed chain and the invariant diagnostics.

pub mod build;
pub mod commands;
pub mod config;
pub mod manifest;

pub use commands::{converge, cutnorm_cmd, generate, montecarlo, simulate, Options, Report};
