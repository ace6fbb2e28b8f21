use thiserror::Error;

/// Errors raised across the navigation engine.
#[derive(Debug, Error)]
pub enum NavError {
    #[error("world description parse error: {0}")]
    WorldParse(String),

    #[error("grid is not rectangular: row {row} has {found} columns, expected {expected}")]
    NonRectangular {
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("grid boundary is open at cell ({row}, {col})")]
    OpenBoundary { row: usize, col: usize },

    #[error("world has no free cell")]
    NoFreeCell,

    #[error("invalid obstacle event #{index} at step {step}: {reason}")]
    InvalidObstacleEvent {
        index: usize,
        step: usize,
        reason: String,
    },

    #[error("pose ({x:.3}, {y:.3}) lies inside a blocked cell")]
    PoseInWall { x: f64, y: f64 },

    #[error("model has no states")]
    EmptyModel,

    #[error("index {index} out of range for {what} (len {len})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("unknown transition edge {prev} -> {next} under action {action}")]
    UnknownEdge {
        prev: usize,
        next: usize,
        action: usize,
    },

    #[error(
        "signature matches existing class {class} (score {score:.4}); pass force to add anyway"
    )]
    DuplicatePrototype { class: usize, score: f64 },

    #[error("signature length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("relocalisation window too short: {got} < {need}")]
    WindowTooShort { got: usize, need: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("snapshot version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("snapshot checksum mismatch")]
    ChecksumMismatch,

    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NavError>;
