use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T> = std::result::Result<T, MuseError>;

#[derive(Debug, Error)]
pub enum MuseError {
    #[error("invalid system: {0}")]
    InvalidSystem(ValidationReport),
    #[error("no such entity: {0}")]
    NoSuchEntity(String),
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),
    #[error("undefined bearing: points coincide")]
    UndefinedBearing,
    #[error("grid mismatch: expected {expected} cells, found {found}")]
    GridMismatch { expected: usize, found: usize },
    #[error("policy cap {cap} W at cell {cell} is outside [0, {p_cmax}]")]
    CapOutOfRange { cell: usize, cap: f64, p_cmax: f64 },
    #[error("cells {0} and {1} are not adjacent")]
    NotAdjacent(usize, usize),
    #[error("point ({x}, {y}) lies outside the region")]
    OutsideRegion { x: f64, y: f64 },
    #[error("receiver {0} has no serving signal and no explicit margin")]
    MissingMargin(String),
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("parse: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MuseError {
    /// True for failures caused by the filesystem rather than by content.
    pub fn is_io(&self) -> bool {
        matches!(self, MuseError::Io(_))
    }
}
