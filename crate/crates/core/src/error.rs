use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("triangle index {index} out of range (mesh has {count} triangles)")]
    TriangleIndex { index: usize, count: usize },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("mesh parse error on line {line}: {message}")]
    MeshParse { line: usize, message: String },

    #[error("unsupported polynomial degree {0} (supported: 1, 2, 3)")]
    UnsupportedDegree(usize),

    #[error("meshes are not nested: {0}")]
    NotNested(String),

    #[error("point ({0}, {1}) lies outside the mesh")]
    PointOutside(f64, f64),

    #[error("problem has no exact solution attached")]
    MissingExactSolution,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("singular system at pivot {0}")]
    Singular(usize),

    #[error("system dimension {dim} exceeds the direct-solver cap {cap}")]
    TooLarge { dim: usize, cap: usize },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("{loop_name} loop exceeded its safety cap of {cap} iterations on level {level}")]
    IterationCap {
        loop_name: &'static str,
        cap: usize,
        level: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown problem '{0}'")]
    UnknownProblem(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
