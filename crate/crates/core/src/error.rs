use thiserror::Error;

use crate::system::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),

    #[error("invalid system spec: {}", join(.0))]
    InvalidSpec(Vec<Violation>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("dimension mismatch: distribution over {found} states, matrix over {expected}")]
    Dimension { expected: usize, found: usize },

    #[error("reduction to {b_reduced} bits would empty row {d} of L")]
    Reduction { b_reduced: u32, d: usize },

    #[error("topology: {0}")]
    Topology(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join(issues: &[Violation]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
