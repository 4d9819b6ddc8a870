use std::fmt;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("evaluation error: {what} produced a non-finite value at {value}")]
    Evaluation { what: String, value: f64 },

    #[error("solver error: {message} (residual {residual:e})")]
    Solver { message: String, residual: f64 },

    #[error("step {step} failed: {reason}; residual trace {}", Trace(.trace))]
    Step {
        step: usize,
        reason: String,
        trace: Vec<f64>,
    },

    #[error("config error (line {line}): {message}")]
    Config { line: usize, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn solver(msg: impl Into<String>, residual: f64) -> Self {
        Error::Solver {
            message: msg.into(),
            residual,
        }
    }
}

struct Trace<'a>(&'a [f64]);

impl fmt::Display for Trace<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, r) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{r:.3e}")?;
        }
        write!(f, "]")
    }
}
