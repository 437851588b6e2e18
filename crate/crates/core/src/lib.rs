//! Zero-shot online signature verification toolkit.
//!
//! Signatures captured as pen/finger time-series are rendered into
//! pressure-encoded images, compared by a chat-style vision-language model
//! through a two-verdict prompt, and scored from verdict-token
//! log-probabilities and self-reported certainty. A DTW verifier provides
//! a classical baseline and [`eval`] computes EER/DET breakdowns.

pub mod dtw;
pub mod eval;
pub mod ingest;
pub mod render;
pub mod scoring;
pub mod signal;
pub mod vlm;
