use thiserror::Error;

/// Errors raised by the library. Every variant carries enough context to be
/// reported verbatim by the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    Domain(String),

    #[error("invalid grid request: {0}")]
    Grid(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("kernel sample K({i},{j}) = {value} is negative")]
    NegativeKernel { i: usize, j: usize, value: f64 },

    #[error("weight sample Q({i},{j}) = {value} is negative")]
    NegativeWeight { i: usize, j: usize, value: f64 },

    #[error("principal eigenvalue {0} is not positive")]
    NonpositiveEigenvalue(f64),

    #[error("principal eigenvector is not strictly positive: min/max = {ratio:e} at node {node}")]
    KreinRutmanViolation { node: usize, ratio: f64 },

    #[error("eigensolver did not converge: {0}")]
    EigenSolver(String),

    #[error("regularization exponent {eps} outside (0, {eps0}] (eps0 = N/(2p))")]
    EpsilonOutOfRange { eps: f64, eps0: f64 },

    #[error("state has |u| = {value:e} at node {node}; the Jacobian of |u|^p is singular for p < 1, stay on the positive branch")]
    SingularJacobian { node: usize, value: f64 },

    #[error("(gamma, u) outside the admissible set: gamma * |Phi_u|_inf = {0}")]
    OutsideAdmissibleSet(f64),

    #[error("newton corrector failed: {0}")]
    StepFailure(String),

    #[error("iterate lost positivity at node {node} and damping could not recover it")]
    LostPositivity { node: usize },

    #[error("singular linear system in {0}")]
    SingularSystem(&'static str),

    #[error("hypothesis not certified: {0}")]
    Hypothesis(String),

    #[error("non-Cauchy tail: {0}")]
    NonCauchy(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown preset '{0}'")]
    UnknownPreset(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
