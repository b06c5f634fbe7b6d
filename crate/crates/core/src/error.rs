use thiserror::Error;

use crate::engine::GenealogyTree;
use crate::quadrature::QuadError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("population cap {cap} exceeded at t = {time}")]
    CapExceeded {
        cap: usize,
        time: f64,
        partial: Box<GenealogyTree>,
    },

    #[error("empty population (particles never die, so the snapshot is corrupt)")]
    EmptyPopulation,

    #[error("only {hits} hits in {n} replicates; at least {required} needed")]
    InsufficientHits { hits: u64, n: u64, required: u64 },

    #[error("value {value} at index {index} is not positive")]
    NonPositiveValue { index: usize, value: f64 },

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("cdf is not monotone (or leaves [0, 1]) near x = {at}")]
    NonMonotoneCdf { at: f64 },

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Quadrature(#[from] QuadError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
