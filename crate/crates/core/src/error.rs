use crate::tensor::Width;
use thiserror::Error;

/// Errors raised by the numerical kernels and encoding builders.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{op} produced a non-finite value at ({row}, {col})")]
    NonFinite {
        op: &'static str,
        row: usize,
        col: usize,
    },

    #[error(
        "{what} overflows {width} storage for mu = {mu} and L = {len} (largest exponent argument {arg})"
    )]
    Overflow {
        what: &'static str,
        mu: f64,
        len: usize,
        arg: f64,
        width: Width,
    },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
