use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("face {face} references vertex {vertex} out of range")]
    VertexOutOfRange { face: usize, vertex: usize },
    #[error("face {face} repeats a vertex")]
    RepeatedVertex { face: usize },
    #[error("face {face} is degenerate (zero area)")]
    DegenerateFace { face: usize },
    #[error("open boundary at edge ({0},{1})")]
    OpenBoundary(usize, usize),
    #[error("non-manifold edge ({a},{b}) shared by {count} faces")]
    NonManifoldEdge { a: usize, b: usize, count: usize },
    #[error("inconsistent orientation at edge ({0},{1})")]
    InconsistentOrientation(usize, usize),
    #[error("mesh is inside out (signed volume {volume})")]
    InvertedMesh { volume: f64 },
    #[error("mesh has {shells} shells, expected a single shell")]
    MultipleShells { shells: usize },
    #[error("mesh has genus {genus} (Euler characteristic {euler}), expected a sphere")]
    Genus { genus: i64, euler: i64 },
    #[error("cell {cell} references node {index} out of range")]
    CellIndexOutOfRange { cell: usize, index: usize },
    #[error("cell {cell} is inverted (signed volume {volume})")]
    InvertedCell { cell: usize, volume: f64 },
    #[error("cell {cell} is degenerate (zero volume)")]
    DegenerateCell { cell: usize },
    #[error("face ({0},{1},{2}) is shared by more than two cells")]
    NonManifoldFace(usize, usize, usize),
    #[error("point set is degenerate: {0}")]
    DegeneratePointSet(String),
    #[error("insertion of point {point} failed: {reason}")]
    InsertionFailed { point: usize, reason: String },
    #[error("unresolvable parity for point ({0}, {1}, {2})")]
    UnresolvableParity(f64, f64, f64),
    #[error("node {0} is not part of the graph or tree")]
    UnknownNode(usize),
    #[error("tree root {0} lies outside the surface")]
    RootOutside(usize),
    #[error("the medial axis is empty")]
    EmptyAxis,
    #[error("not a subtree: node {0} is missing from the full tree")]
    NotSubtree(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("bundle error: {0}")]
    Bundle(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }

    /// True for failures caused by numerics (predicates, degenerate
    /// geometry) rather than invalid input.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::DegeneratePointSet(_)
            | Error::InsertionFailed { .. }
            | Error::UnresolvableParity(..)
            | Error::RootOutside(_)
            | Error::EmptyAxis => true,
            Error::Stage { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
