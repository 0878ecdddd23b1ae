use thiserror::Error;

use crate::polefit::BarycentricModel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("frequency {omega} is outside the domain of {what}")]
    Domain { what: &'static str, omega: f64 },

    #[error("noise power is singular at omega = 0 for T > 0 and s < 1")]
    SingularAtOrigin,

    #[error("duplicate grid point {0}")]
    DuplicateGridPoint(f64),

    #[error("barycentric fit did not converge after {iterations} support points (error {error:.3e}, tolerance {tolerance:.3e})")]
    NonConvergence {
        iterations: usize,
        error: f64,
        tolerance: f64,
        best: Box<BarycentricModel>,
    },

    #[error("eigenvalue solver failed: {0}")]
    EigenSolver(String),

    #[error("pole filtering broke the fit: error {error:.3e} exceeds tolerance {tolerance:.3e}")]
    UnstableFit { error: f64, tolerance: f64 },

    #[error("lower and upper half-plane poles are not conjugate pairs (mismatch {0:.3e})")]
    ConjugateSymmetry(f64),

    #[error("pole set is empty; nothing to decompose")]
    NoModes,

    #[error("pole {index} at {re} + {im}i is not in the lower half-plane")]
    PoleNotInLowerHalfPlane { index: usize, re: f64, im: f64 },

    #[error("mode {index} has non-positive decay rate {gamma}")]
    NonDecayingMode { index: usize, gamma: f64 },

    #[error("correlation at t = 0 has negative real part {0}")]
    NegativeVariance(f64),

    #[error("correlation requested at negative time {0}")]
    NegativeTime(f64),

    #[error("scan entry delta = {delta:e} failed: {source}")]
    ScanEntry {
        delta: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("hierarchy of ~{estimated} auxiliary operators exceeds the budget of {budget}")]
    BudgetExceeded { estimated: u128, budget: u128 },

    #[error("propagation diverged at t = {time} (|entry| > {bound:e}); high-frequency modes usually need a smaller time step")]
    Divergence { time: f64, bound: f64 },

    #[error("shiba window error: {0}")]
    Window(String),

    #[error("pseudomode Fock truncation not converged: doubling the cut changed the result by {0:.3e}")]
    FockNotConverged(f64),

    #[error("pseudomode self-test failed: oscillator correlation deviates by {0:.3e}")]
    PseudomodeSelfTest(f64),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("{path}, line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
