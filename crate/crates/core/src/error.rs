//! Error type shared by every module of the crate.

use std::path::PathBuf;

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A model or configuration parameter is outside its admissible range.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("cannot seed {requested} initial cases into a population of {population}")]
    Seeding { requested: u64, population: u64 },

    /// The design matrix cannot identify the requested model.
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("overlap violated: {0}")]
    Overlap(String),

    /// Nothing left to estimate after trimming or subsetting.
    #[error("estimation infeasible: {0}")]
    Infeasible(String),

    #[error("collinear regressors: {0}")]
    Collinear(String),

    #[error("config line {line}: key `{key}`: {reason}")]
    Config {
        line: usize,
        key: String,
        reason: String,
    },

    #[error("missing column `{0}`")]
    Schema(String),

    #[error("{} missing (location, date) observations, first: {}", .0.len(), .0.first().map(|(l, d)| format!("({l}, {d})")).unwrap_or_default())]
    Gap(Vec<(String, String)>),

    #[error("parse error at {context}: {reason}")]
    Parse { context: String, reason: String },

    #[error("series already normalized to per-million units")]
    AlreadyNormalized,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
