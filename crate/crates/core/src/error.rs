use thiserror::Error;

use crate::operator::BasisTag;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("basis: {0}")]
    Basis(String),

    #[error("basis: cutoff {cutoff} lies below the lowest excitation {minimum}")]
    EmptyBasis { cutoff: String, minimum: String },

    #[error("operator: basis mismatch ({left:?} vs {right:?})")]
    BasisMismatch { left: BasisTag, right: BasisTag },

    #[error("operator: {0}")]
    Operator(String),

    #[error("operator: {what} check failed, relative residual {residual:.3e}")]
    NotHermitian { what: &'static str, residual: f64 },

    #[error("eigensolver: no convergence after {sweeps} sweeps (off-diagonal norm {offdiag:.3e})")]
    NoConvergence { sweeps: usize, offdiag: f64 },

    #[error("deformed-su2: {0}")]
    Deformed(String),

    #[error("lie-transform: off-resonant residual grew from {previous:.3e} to {current:.3e} at step {step}; largest |V/ΔE| = {largest_ratio:.3e} at ({row}, {col})")]
    Divergence {
        step: usize,
        previous: f64,
        current: f64,
        largest_ratio: f64,
        row: usize,
        col: usize,
    },

    #[error("lie-transform: {0}")]
    Transform(String),

    #[error("multilevel: {0}")]
    Model(String),

    #[error("multilevel: resonant denominator for {quantity} at {indices}")]
    Resonance {
        quantity: &'static str,
        indices: String,
    },

    #[error("multilevel: |{quantity}| = {value:.3} exceeds the smallness limit {limit}")]
    NotSmall {
        quantity: String,
        value: f64,
        limit: f64,
    },

    #[error("dynamics: {0}")]
    Dynamics(String),

    #[error("config: line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("config: {field}: {message}")]
    ConfigInvalid { field: String, message: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
