use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("grid needs at least 3 nodes per axis, got {0}")]
    ResolutionTooSmall(usize),

    #[error("generating point {0:?} lies in the closed domain")]
    PointInsideDomain(Vec<f64>),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("a non-constant divergence-free field does not exist in one dimension")]
    NonConstantDivergenceFree1d,

    #[error("{field} has sup-norm {value:.6e}, above the admissibility bound {bound:.6e}")]
    BoundExceeded {
        field: &'static str,
        value: f64,
        bound: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("boundary data at t=0 differs from the initial state on the boundary by {0:.3e}")]
    Incompatible(f64),

    #[error("zero pivot at row {0} in the step matrix")]
    SingularStep(usize),

    #[error("need at least {needed} time nodes, got {got}")]
    TooFewTimeNodes { needed: usize, got: usize },

    #[error("odd-conjugate extension needs a purely imaginary t=0 slice; real part is {0:.3e}")]
    NotImaginaryAtZero(f64),

    #[error("time node {0} is not strictly inside (-T, T)")]
    SingularTimeNode(f64),

    #[error("negative normal derivative of the weight ({value:.3e}) at observed node {node}")]
    NegativeWeightFlux { node: usize, value: f64 },

    #[error("test family is empty or contains a member with zero right-hand side")]
    EmptyFamily,

    #[error("member {member} at s = {s}: rhs vanishes while lhs = {lhs:.3e}")]
    Counterexample { member: usize, s: f64, lhs: f64 },

    #[error("probe amplitude below {alpha} at node {node}")]
    ProbeBelowAlpha { alpha: f64, node: usize },

    #[error("{what} cross-check disagrees by {value:.3e} (tolerance {tol:.1e})")]
    CrossCheck {
        what: String,
        value: f64,
        tol: f64,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
