use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("structure constants must be a non-empty d*d*d array, got {len} values")]
    BadStructureShape { len: usize },
    #[error("structure constants contain a non-finite value")]
    NonFinite,
    #[error("structure constants are not antisymmetric: c[{i}][{j}][{k}] + c[{j}][{i}][{k}] = {residual:e}")]
    NotAntisymmetric {
        i: usize,
        j: usize,
        k: usize,
        residual: f64,
    },
    #[error("Jacobi identity fails on basis triple ({i},{j},{k}) with residual {residual:e}")]
    JacobiViolated {
        i: usize,
        j: usize,
        k: usize,
        residual: f64,
    },
    #[error("negative Killing form is not positive definite (smallest eigenvalue {min_eigenvalue:e}); the algebra is not compact semisimple")]
    KillingDegenerate { min_eigenvalue: f64 },
    #[error("unknown built-in algebra `{0}` (expected so3, su2 or so4)")]
    UnknownAlgebra(String),
    #[error("could not parse structure-constant file: {0}")]
    AlgebraParse(String),

    #[error("symmetric degree {requested} exceeds the configured cap {cap}")]
    DegreeCapExceeded { requested: usize, cap: usize },
    #[error("inner product between degrees {left} and {right}")]
    DegreeMismatch { left: usize, right: usize },
    #[error("vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("mesh resolution {0} is below the minimum of 3 cells per axis")]
    ResolutionTooSmall(usize),
    #[error("torus dimension {0} is not supported (expected 1 or 2)")]
    UnsupportedDimension(usize),
    #[error("form degree {degree} is out of range for a {dim}-dimensional mesh")]
    DegreeOutOfRange { degree: usize, dim: usize },
    #[error("weight function is not positive at a sample point (value {0:e})")]
    NonPositiveWeight(f64),

    #[error("constraint covector vanishes at sample point {point:?}")]
    DegenerateLambda { point: Vec<f64> },
    #[error("curvature needs a two-dimensional base, mesh has dimension {0}")]
    CurvatureNeedsSurface(usize),
    #[error("covector xi must be non-zero")]
    ZeroCovector,
    #[error("field table has {got} rows, expected {expected} (one per vertex)")]
    TableShape { expected: usize, got: usize },

    #[error(
        "fit did not reach tolerance within {iterations} iterations (objective {objective:e})"
    )]
    NonConvergence { iterations: usize, objective: f64 },
    #[error("backtracking step collapsed below {step:e} at iteration {iteration}")]
    StepCollapse { iteration: usize, step: f64 },

    #[error("eigensolver failed: {0}")]
    EigensolverFailure(String),
    #[error("linear solver failed: {0}")]
    SolverFailure(String),
    #[error("cochain has {got} entries, degree {degree} expects {expected}")]
    ShapeMismatch {
        degree: usize,
        expected: usize,
        got: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("pipeline step {step} ({stage}) failed: {source}")]
    Pipeline {
        step: u8,
        stage: &'static str,
        source: Box<Error>,
    },
}

impl Error {
    /// Step number of a pipeline failure, if this is one.
    pub fn pipeline_step(&self) -> Option<u8> {
        match self {
            Error::Pipeline { step, .. } => Some(*step),
            _ => None,
        }
    }
}
