use thiserror::Error;

/// Errors produced by model evaluation, solvers and scenario handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in equation `{equation}`")]
    NonFinite { equation: String },

    #[error("invalid model definition: {0}")]
    InvalidModel(String),

    #[error("model `{0}` has no analytic jacobian")]
    NoAnalyticJacobian(String),

    #[error("algebraic jacobian g_y is singular (condition estimate {condition:.3e})")]
    SingularAlgebraic { condition: f64 },

    #[error("eigensolver did not converge within {iterations} iterations")]
    EigenNonConvergence { iterations: usize },

    #[error("newton solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("singular iteration matrix at newton iteration {iteration}")]
    SingularIteration { iteration: usize },

    #[error("initial algebraic state is inconsistent (residual {residual:.3e})")]
    InconsistentInitial { residual: f64 },

    #[error("equilibrium at the starting point is not stable (max real part {max_real:.3e})")]
    NotStable { max_real: f64 },

    #[error("augmented fold system is singular: {0}")]
    Degenerate(String),

    #[error("transversality failure: |w^T f_lambda| = {norm:.3e}")]
    Transversality { norm: f64 },

    #[error("scan direction is tangent to the bifurcation surface (k^T N = {value:.3e})")]
    Tangency { value: f64 },

    #[error("no fold within the scan range (stopped at s = {s_end:.6})")]
    NoFold { s_end: f64 },

    #[error("complex pair crossed the imaginary axis before any fold (s = {s:.6}, eigenvalue {re:.4e} + {im:.4e}i)")]
    HopfBeforeFold { s: f64, re: f64, im: f64 },

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::UnknownParameter(_)
                | Error::InvalidParameter { .. }
                | Error::InvalidModel(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
