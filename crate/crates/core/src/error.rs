use thiserror::Error;

/// Errors produced by map construction, model fitting and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("fingerprint map is empty")]
    EmptyMap,

    #[error("fingerprint length {got} does not match map AP count {expected}")]
    FingerprintLength { expected: usize, got: usize },

    #[error("RSS value {value} outside [{floor}, 0] dBm at entry {index}")]
    RssOutOfRange { value: f64, floor: f64, index: usize },

    #[error("non-finite coordinate in point ({x}, {y})")]
    BadPoint { x: f64, y: f64 },

    #[error("degenerate bounding box: width {width}, height {height}")]
    DegenerateBbox { width: f64, height: f64 },

    #[error("requested {requested} neighbors but map has {available} distinct points")]
    NotEnoughNeighbors { requested: usize, available: usize },

    #[error("point ({x}, {y}) is not a surveyed point of the map")]
    PointNotFound { x: f64, y: f64 },

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value encountered in {context} (layer {layer})")]
    NonFinite { context: &'static str, layer: usize },

    #[error("non-finite {phase} loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        phase: &'static str,
        epoch: usize,
        batch: usize,
    },

    #[error("Cholesky factorization failed after jitter up to {max_jitter}")]
    Cholesky { max_jitter: f64 },

    #[error("need at least {needed} distinct points, map has {got}")]
    NotEnoughPoints { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("pattern `{0}` selects no held-out points")]
    EmptyPattern(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: u64,
        message: String,
    },

    #[error("missing column `{0}` in dataset")]
    MissingColumn(String),

    #[error("selection (building {building}, floor {floor}) matches no rows")]
    EmptySelection { building: i64, floor: i64 },

    #[error("model file format version {got} not supported (expected {expected})")]
    FormatVersion { expected: u32, got: u32 },

    #[error("model file holds a `{got}` model, expected `{expected}`")]
    ModelKind { expected: String, got: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
