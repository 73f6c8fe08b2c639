use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An input fell outside its admissible range beyond tolerance.
    #[error("{name} = {value} outside [{lo}, {hi}]")]
    Domain {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// Evaluation at a genuine singularity of the model.
    #[error("singularity: {0}")]
    Singular(String),

    /// A documented precondition of the operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// An iterative solver failed to converge.
    #[error("solver failure: {0}")]
    Solver(String),

    /// Continuation step shrank below the minimum without converging.
    #[error("continuation step collapsed below {min_step:.3e} near {context}")]
    StepCollapse { min_step: f64, context: String },

    /// A vessel flow reached zero during simulation.
    #[error("vessel {vessel} starved at t = {t}")]
    StarvedVessel { vessel: char, t: f64 },

    /// A simulation step exceeded the CFL bound.
    #[error("dt = {dt} exceeds CFL bound {bound}")]
    CflViolation { dt: f64, bound: f64 },

    /// Root counting returned an inconsistent equilibrium set.
    #[error("ambiguous equilibrium count: {0}")]
    AmbiguousCount(String),

    /// Configuration parse or validation failure.
    #[error("config: {0}")]
    Config(String),

    /// I/O failure while emitting results.
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
