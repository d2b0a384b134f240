//! Desk-scale simulator for streaming two-pass ASR decoding with unified
//! end-of-segment (EOS) prediction.
//!
//! A deterministic synthetic acoustic front-end stands in for the trained
//! neural encoders, so every decoding-side algorithm is executable and
//! testable without audio or model weights:
//!
//! * [`corpus`] — scripted utterances with ground-truth word timings and the
//!   weakly-supervised EOS transcript annotation.
//! * [`acoustics`] — synthetic causal/cascaded encoder features and per-frame
//!   token posteriors, including dummy right-context frame injection.
//! * [`vad`] — voice activity detection state machine and silence frame filter.
//! * [`decoder`] — frame-synchronous beam search with pruning, 2-gram path
//!   merging into a lattice, EOS threshold checks and finalization.
//! * [`pipeline`] — the staggered two-pass event loop with the four 2nd-pass
//!   finalization strategies and latency accounting.
//! * [`metrics`] — WER, lattice oracle WER, EOS latency and segment-length
//!   statistics, diff reports.
//! * [`experiment`] — config-driven experiment runner emitting CSV reports.

pub mod acoustics;
pub mod corpus;
pub mod decoder;
pub mod experiment;
pub mod metrics;
pub mod pipeline;
pub mod vad;

mod hashing;
mod vocab;

pub use vocab::{TokenId, Vocab};

/// Errors produced by library operations.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration fails its own invariants.
    #[error("configuration error: {0}")]
    Config(String),
    /// A documented precondition of an operation was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),
    /// Path enumeration hit the caller-supplied limit.
    #[error("lattice has more than {limit} paths; enumeration truncated")]
    TruncatedPaths { limit: usize },
    /// WER is undefined for an empty reference.
    #[error("empty reference: word error rate is undefined")]
    EmptyReference,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
