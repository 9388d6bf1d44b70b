use std::path::PathBuf;

/// Errors produced by the calibration pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("person count mismatch: {left} vs {right} humans")]
    CorrespondenceMismatch { left: usize, right: usize },

    #[error("empty motion sequence: {0}")]
    EmptySequence(String),

    #[error("downsampling unsupported: target fps {target_fps} < source fps {source_fps}")]
    DownsampleUnsupported { source_fps: f64, target_fps: f64 },

    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("no overlapping frames between cameras {a} and {b}")]
    NoOverlap { a: usize, b: usize },

    #[error("ray construction failed: {0}")]
    RayConstruction(String),

    #[error("invalid scene spec: {0}")]
    SpecError(String),

    #[error("invalid input: {0}")]
    InputError(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("pairwise alignment of cameras ({a}, {b}) failed: {source}")]
    PairFailed {
        a: usize,
        b: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("failed to read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
