use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range (size {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("unsupported expression: {0}")]
    UnsupportedExpression(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("Chow condition fails: rank stalled at {stalled_rank} < {dim} up to bracket length {depth}")]
    ChowFails {
        stalled_rank: usize,
        dim: usize,
        depth: usize,
    },

    #[error("singular Jacobian: numeric rank {rank} < {dim}")]
    SingularJacobian { rank: usize, dim: usize },

    #[error("no nonzero nonholonomic derivative up to order {cap}")]
    ExceedsCap { cap: u32 },

    #[error("frame matrix is singular")]
    SingularFrame,

    #[error("chart is not privileged: {0}")]
    NotPrivileged(String),

    #[error("Newton iteration did not converge (residual {residual:e})")]
    NewtonDiverged { residual: f64 },

    #[error("trajectory blew up (state norm {norm:e})")]
    BlowUp { norm: f64 },

    #[error("no trajectory reaching the target was found (best endpoint error {best_error:e})")]
    NoTrajectoryFound { best_error: f64 },

    #[error("steering failed after {restarts} restarts (best residual {residual:e})")]
    SteeringFailed { restarts: usize, residual: f64 },

    #[error("planner diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("target lies outside the chart validity radius ({norm} > {radius})")]
    OutOfRadius { norm: f64, radius: f64 },

    #[error("budget exhausted: {0}")]
    BudgetExhausted(String),

    #[error("every candidate frame is degenerate at this point")]
    ZeroScore,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
