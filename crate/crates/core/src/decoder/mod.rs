//! Grammar-constrained frame-synchronous Viterbi decoding.

mod evaluate;
mod network;
mod search;

use thiserror::Error;

pub use evaluate::{evaluate, EvalRecord, EvalReport, TestItem};
pub use network::{compile_network, DecodingNetwork, InstanceKind, WordInstance};
pub use search::{decode, DecodeResult, Hypothesis, WordSpan};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("no hypothesis survived to the end of the utterance")]
    NoPathSurvived,
    #[error("empty observation sequence")]
    EmptyObservation,
    #[error("n_best must be at least 1")]
    InvalidNBest,
    #[error("codeword at frame {frame} is outside the codebooks")]
    CodewordOutOfRange { frame: usize },
    #[error("grammar word {0} is not in the lexicon")]
    UnknownWord(String),
    #[error("no model for phone {0}")]
    MissingModel(String),
    #[error("phone models disagree on codebook sizes")]
    IncompatibleModels,
    #[error("empty test set")]
    EmptyTestset,
}
