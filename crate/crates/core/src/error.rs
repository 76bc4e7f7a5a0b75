use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("obstacle undefined for single mode")]
    SingleMode,

    #[error("mode index {index} out of range for {modes} modes")]
    ModeIndex { index: usize, modes: usize },

    #[error("boundary operator at interior node")]
    InteriorBoundaryEval,

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("mode count exceeds validator limit ({0} > 20)")]
    TooManyModes(usize),

    #[error("invalid domain: {0}")]
    Domain(String),

    #[error(
        "unsupported domain family `{0}`: only `interval` and `ball` are accepted, \
         since boxes have corners where the boundary is not C^1 with Lipschitz derivative"
    )]
    UnsupportedDomain(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid problem: {0}")]
    Problem(String),

    #[error("expression `{source_text}`: {message}")]
    Expression { source_text: String, message: String },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("unsupported operator: {0}")]
    UnsupportedOperator(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("CFL violation: dt = {dt} exceeds explicit bound {bound}")]
    Cfl { dt: f64, bound: f64 },

    #[error("obstacle projection did not settle within {0} sweeps")]
    SweepOverflow(usize),

    #[error("Neumann closure root not bracketed (inner value {inner})")]
    ClosureBracket { inner: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("policy iteration did not converge at step {step} after {iterations} iterations")]
    PolicyIteration { step: usize, iterations: usize },

    #[error("barrier constant selection failed: {0}")]
    ConstantSelection(String),

    #[error("exp(kappa * phi) = {value:e} overflows the guard; lower the kappa safety factor or rescale the domain")]
    BarrierOverflow { value: f64 },

    #[error("study: {0}")]
    Study(String),

    #[error("serialization failed: {0}")]
    Serialize(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by malformed input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::UnsupportedDomain(_)
                | Error::Grid(_)
                | Error::Problem(_)
                | Error::Expression { .. }
                | Error::Config { .. }
                | Error::UnsupportedOperator(_)
                | Error::GridMismatch(_)
                | Error::ModeIndex { .. }
                | Error::SingleMode
                | Error::TooManyModes(_)
                | Error::Io(_)
        )
    }
}

pub(crate) fn ensure_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}
