use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("penalty parameter {gamma} is outside the schedule domain (must exceed 2*Mbar/eta = {threshold})")]
    ScheduleDomain { gamma: f64, threshold: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate gradient at {point:?}: |grad psi| = {norm} <= eta = {eta}")]
    DegenerateGradient { point: Vec<f64>, norm: f64, eta: f64 },

    #[error("certification failed ({reason}) at witness {witness:?}")]
    CertificationFailure { reason: String, witness: Vec<f64> },

    #[error("implicit step failed at t = {t} (state {state:?}): {reason}")]
    StepFailure { t: f64, state: Vec<f64>, reason: String },

    #[error("invariance violated at t = {t}: psi = {psi} exceeds tolerance {tol}")]
    InvarianceViolation { t: f64, psi: f64, tol: f64 },

    #[error("projection onto C did not converge for y = {y:?}")]
    ProjectionFailure { y: Vec<f64> },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("empty endpoint set: {0}")]
    EmptySet(String),

    #[error("optimizer hit the iteration limit ({iterations}) with projected-gradient norm {pg_norm}")]
    MaxIterations { iterations: usize, pg_norm: f64, last: Vec<f64> },

    #[error("line search failed at iteration {iteration} (projected-gradient norm {pg_norm})")]
    LineSearchFailure { iteration: usize, pg_norm: f64, last: Vec<f64> },

    #[error("endpoint constraint still violated by {violation} after penalty continuation")]
    InfeasibleEndpoint { violation: f64, last: Vec<f64> },

    #[error("unsupported set: {0}")]
    UnsupportedSet(String),

    #[error("multiplier regime not supported: {0}")]
    RegimeViolation(String),

    #[error("invalid scenario field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation { field: field.into(), message: message.into() }
    }
}
