use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("face {face} is degenerate (zero area)")]
    DegenerateFace { face: usize },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("vertex {vertex} has no incident face")]
    IsolatedVertex { vertex: usize },

    #[error("point {index} has a non-finite coordinate")]
    NonFinitePoint { index: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("size mismatch: expected {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("vertex {vertex} has an empty neighbourhood")]
    EmptyNeighborhood { vertex: usize },

    #[error("output point {point} has no candidate triangles")]
    NoCandidateTriangles { point: usize },

    #[error("simplification target {target} is below the minimum of 4 vertices")]
    TargetTooSmall { target: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
