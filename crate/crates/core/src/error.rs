use std::path::PathBuf;

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum ShapeError {
    #[error("shape parse error: {0}")]
    Parse(String),
    #[error("shape touches or leaves the unit disk")]
    OutsideDomain,
    #[error("circles overlap or touch")]
    Overlapping,
    #[error("degenerate shape (non-positive size or non-finite parameter)")]
    Degenerate,
}

#[derive(thiserror::Error, Debug)]
pub enum MeshError {
    #[error("target edge length must lie in (0, 1), got {0}")]
    InvalidEdgeLength(f64),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("empty output path")]
    EmptyPath,
    #[error("triangle {0} has zero area")]
    ZeroArea(usize),
    #[error("edge ({0}, {1}) is shared by more than two triangles")]
    NonManifold(usize, usize),
    #[error("mesh has no boundary")]
    NoBoundary,
    #[error("boundary is not a single closed loop")]
    BoundaryNotSingleLoop,
    #[error("declared boundary edges do not match the mesh topology")]
    BoundaryMismatch,
    #[error("mesh has no triangles")]
    Empty,
    #[error("triangle {triangle} references vertex {index} out of range")]
    InvalidIndex { triangle: usize, index: usize },
    #[error("vertex {0} is not used by any triangle")]
    UnusedVertex(usize),
    #[error("triangle {0} straddles the shape interface")]
    NonConforming(usize),
    #[error("triangulation failed: {0}")]
    Triangulation(String),
}

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum FemError {
    #[error("non-finite coefficient {value} in triangle {triangle}")]
    NonFiniteCoefficient { triangle: usize, value: f64 },
    #[error("triangle {0} is degenerate")]
    DegenerateTriangle(usize),
    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("boundary weights sum to zero")]
    ZeroBoundaryWeight,
    #[error("non-finite value in field at vertex {0}")]
    NonFiniteValue(usize),
}

#[derive(thiserror::Error, Debug)]
pub enum DataError {
    #[error("electrode count must be even and at least 2, got {0}")]
    OddElectrodeCount(usize),
    #[error("{count} electrodes of width {width} overlap")]
    OverlappingElectrodes { count: usize, width: f64 },
    #[error("expected {expected} measurements, found {found}")]
    MeasurementCount { expected: usize, found: usize },
    #[error("boundary data needs at least 3 samples, found {0}")]
    TooFewSamples(usize),
    #[error("boundary angles must be strictly increasing within [0, 2pi)")]
    BadAngles,
    #[error("cannot scale noise: clean signal has zero norm")]
    ZeroSignal,
    #[error("noise level must be finite and non-negative, got {0}")]
    BadNoiseLevel(f64),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("refusing to reconstruct on the generation mesh (inverse crime)")]
    InverseCrime,
}

/// Top-level error for the reconstruction pipeline.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("state from evaluation {expected} used with evaluation {found}")]
    Stale { expected: u64, found: u64 },
    #[error("line search needs a non-zero gradient")]
    ZeroGradient,
    #[error("no sufficient decrease after {0} backtracks")]
    LineSearchFailed(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
