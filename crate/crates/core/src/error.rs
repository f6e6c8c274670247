use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` out of range: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("graphon evaluated at singular point ({x}, {y})")]
    Domain { x: f64, y: f64 },

    #[error("time {t} outside schedule horizon [{start}, {end}]")]
    Schedule { t: f64, start: f64, end: f64 },

    #[error("degenerate partition: {0}")]
    DegeneratePartition(String),

    #[error("quadrature did not converge: achieved {achieved:e}, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("edge probability {value} > 1 at pair ({j}, {k})")]
    Range { j: usize, k: usize, value: f64 },

    #[error("rewiring of edge ({j}, {k}) found no admissible target after {attempts} attempts")]
    RewireExhausted { j: usize, k: usize, attempts: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite state at step {step} (t = {t})")]
    Divergence { step: usize, t: f64 },

    #[error("invalid initial data at node {node}: {reason}")]
    InitialData { node: usize, reason: String },

    #[error("size {n} exceeds the exact solver limit {limit}")]
    Size { n: usize, limit: usize },

    #[error("partitions of size {coarse} and {fine} do not nest")]
    Partition { coarse: usize, fine: usize },

    #[error("time-dependent graphon not allowed here: {0}")]
    TimeDependent(&'static str),

    #[error("unknown test function `{0}`")]
    UnknownTestFunction(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter {
        name,
        reason: reason.into(),
    }
}
