use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no root of the implicit equation in [{lo}, {hi}] V")]
    NoRoot { lo: f64, hi: f64 },
    #[error("bisection did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("characteristic is not non-monotone: g1*g2 = {g1g2} < g3 = {g3}")]
    NotNonMonotone { g1g2: f64, g3: f64 },
    #[error("step size underflow at t = {t}")]
    StepFailure { t: f64 },
    #[error("trace too short to classify: {0}")]
    TooShort(String),
    #[error("no transition found on the v_z grid")]
    NoTransition,
    #[error("baseline is not at rest ({0} spikes before the first step)")]
    NotAtRest(usize),
    #[error("no consistent transistor operating mode")]
    NoOperatingPoint,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: unknown SI suffix in '{token}'")]
    UnknownSuffix { line: usize, token: String },
    #[error("line {line}: undeclared model '{model}'")]
    UndeclaredModel { line: usize, model: String },
    #[error("deck does not match the circuit template; unmatched roles: {0:?}")]
    TopologyMismatch(Vec<String>),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
