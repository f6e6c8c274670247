//! Simulation of SIR epidemics on graphs and on their graphon limits.
//!
//! The crate is organised bottom-up:
//!
//! * [`graphon`]: closed-form, step and time-scheduled kernels, cell averages, trims, norms.
//! * [`graphs`]: deterministic and classical random graph families, adjacency matrices.
//! * [`sampling`]: Galerkin and W-random constructions of adjacency matrices from a graphon.
//! * [`sir`]: right-hand sides of the networked SIR systems and fixed-step Runge–Kutta integration.
//! * [`cutnorm`]: exact and heuristic cut norms and permutation cut distances.
//! * [`analysis`]: step-function error norms, convergence studies, Montecarlo ensembles, weak-* pairings.
//! * [`io`]: CSV, binary and JSON formats shared with the command line driver.
//!
//! Vertex and cell indices are zero-based throughout: cell `j` of a uniform
//! partition of size `n` is the interval `(j/n, (j+1)/n)`.

pub mod analysis;
pub mod cutnorm;
pub mod error;
pub mod graphon;
pub mod graphs;
pub mod io;
pub mod quad;
pub mod rng;
pub mod sampling;
pub mod sir;

pub use error::{Error, Result};
pub use graphon::{Bound, Graphon, Norm, StepGraphon, TrimMode};
pub use graphs::AdjacencyMatrix;
pub use sir::{CoefficientField, IntegratorSpec, Method, Network, RhsKind, SirState, SirTrajectory};
