use thiserror::Error;

use crate::world::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs are individually well-formed but inconsistent with each other.
    #[error("input error: {0}")]
    Input(String),

    #[error("invalid world: {}", format_violations(.0))]
    InvalidWorld(Vec<Violation>),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("enumeration budget exceeded: {cells}^{n} assignments > {budget}")]
    Budget { cells: usize, n: usize, budget: u64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
