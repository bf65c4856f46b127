//! Small differentiable building blocks with hand-written backward passes.
//!
//! Everything is `f64` and single-sample; batches are loops that accumulate
//! into each [`ParamVector`]'s gradient buffer.

pub mod adam;
pub mod checkpoint;
pub mod dense;
pub mod lstm;
pub mod ops;
pub mod params;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, restore, save_checkpoint};
pub use dense::{Activation, Dense, Mlp, MlpCache};
pub use lstm::{Lstm, LstmCache, LstmState};
pub use params::ParamVector;
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("empty input sequence")]
    EmptySequence,
    #[error("not a probability vector")]
    NotADistribution,
    #[error("{0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<(), NnError> {
    if expected == got {
        Ok(())
    } else {
        Err(NnError::ShapeMismatch {
            expected: vec![expected],
            got: vec![got],
        })
    }
}

pub(crate) fn check_finite(xs: &[f64], what: &'static str) -> Result<(), NnError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(NnError::NonFinite(what))
    }
}
