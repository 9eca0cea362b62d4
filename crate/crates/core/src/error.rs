use std::path::PathBuf;

use thiserror::Error;

use crate::synth::TrainingLog;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("duplicate claim id `{0}`")]
    DuplicateClaimId(String),

    #[error("point ({x}, {y}) lies outside the grid extent")]
    OutOfExtent { x: f64, y: f64 },

    #[error("feature `{feature}`: unknown categorical level `{level}`")]
    UnknownLevel { feature: String, level: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("k = {k} exceeds the {distinct} distinct point value(s)")]
    TooFewDistinct { k: usize, distinct: usize },

    #[error("training labels contain a single class; at least two are required")]
    SingleClass,

    #[error("class(es) {0:?} absent from labels")]
    MissingClasses(Vec<usize>),

    #[error("no positive examples")]
    NoPositives,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("class {class}: requested {requested} rows but only {available} available")]
    InsufficientRows {
        class: usize,
        requested: usize,
        available: usize,
    },

    #[error("non-finite gradient in {layer}")]
    NonFiniteGradient { layer: String },

    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged { epoch: usize, log: Box<TrainingLog> },

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: u64,
        message: String,
    },

    #[error("missing upstream artifact `{}`", .0.display())]
    MissingArtifact(PathBuf),

    #[error("model format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
