//! Speaker-dependent isolated-word command recognition with discrete
//! multi-codebook phoneme HMMs, plus a wake-word command session service.
//!
//! Pipeline: [`frontend`] turns audio into endpointed three-stream mel
//! features, [`vq`] quantizes each stream against its codebook, [`train`]
//! fits 3-state phoneme models by segmental k-means, and [`decoder`] runs
//! grammar-constrained Viterbi beam search over a network built from a
//! [`grammar`]. [`protocol`] exposes the recognizer as a socket service.

pub mod acoustic;
pub mod audio;
pub mod config;
pub mod decoder;
pub mod frontend;
pub mod grammar;
pub mod hmm;
pub mod manifest;
pub mod phones;
pub mod pipeline;
pub mod protocol;
pub mod recognizer;
pub mod synth;
pub mod train;
pub mod vq;
