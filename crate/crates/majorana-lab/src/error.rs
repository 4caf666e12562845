use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("no edge mode: |mu| = {mu} is not below 2J = {two_j}")]
    NoEdgeMode { mu: f64, two_j: f64 },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("resource guard: {what} = {value} exceeds cap {cap}")]
    ResourceGuard {
        what: &'static str,
        value: usize,
        cap: usize,
    },
    #[error("no pairing: V = {0} must be negative")]
    NoPairing(f64),
    #[error("no convergence after {iterations} iterations, last residual {last:e}")]
    NonConvergence {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("no zero mode present")]
    NoZeroMode,
    #[error("regime violation: {0}")]
    Regime(String),
    #[error("no dark frequency: {0}")]
    NoDarkFrequency(String),
    #[error("unsupported gate: {0}")]
    UnsupportedGate(String),
    #[error("no c mode matches the two couplings: best mode {best_mode} has mismatch {mismatch:e}")]
    NoMatchingMode { best_mode: usize, mismatch: f64 },
    #[error("malformed expression: {0}")]
    Malformed(String),
    #[error("division by zero: {0}")]
    DivisionByZero(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonConvergence { .. } | Error::Numerical(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
