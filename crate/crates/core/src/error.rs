use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("functions live on different meshes")]
    MeshMismatch,

    #[error("inadmissible measure: {0}")]
    Inadmissible(String),

    #[error("coefficient field has no asymptotic pair (a_inf, b_inf)")]
    MissingAsymptotics,

    #[error("non-finite evaluation in cell {cell}: {detail}")]
    NonFinite { cell: usize, detail: String },

    /// Iteration budget exhausted. The best iterate (free dofs) is attached.
    #[error("nonlinear solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("singular Jacobian (damping history {damping:?})")]
    SingularJacobian { damping: Vec<f64> },

    #[error("approximation schedule exhausted; Phi-distances {distances:?}")]
    ScheduleExhausted { distances: Vec<f64> },

    #[error("solution on the region boundary: {0}")]
    BoundarySolution(String),

    #[error("degenerate Jacobian at a solution (|det| = {det:.3e})")]
    DegenerateJacobian { det: f64 },

    #[error("degree did not stabilize within {halvings} truncation halvings")]
    NoStabilization { halvings: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
