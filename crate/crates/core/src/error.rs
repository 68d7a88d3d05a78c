use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    Shape {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// `t = 0` was passed to a quantity that divides by `lambda(t)`.
    #[error("singular at t = {0}: lambda(t) = 0")]
    Singular(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss} (last finite loss {last_finite})")]
    Diverged {
        epoch: usize,
        step: usize,
        loss: f64,
        last_finite: f64,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
