//! Single-token cloze probing of masked language models on vehicle complaint text.
//!
//! The pipeline runs in stages:
//!
//! 1. [`corpus`] parses a delimiter-separated complaint file, keeps the configured
//!    source channels, lower-cases narratives, removes duplicates and splits the
//!    result into train and held-out sets.
//! 2. [`dictionary`] splits component descriptions into single-word technical terms
//!    and counts their whole-word frequencies in the train split.
//! 3. [`probes`] masks every dictionary-term occurrence in held-out sentences and
//!    keeps only probes whose term is one token for a given tokenizer.
//! 4. [`evaluator`] ranks the ground truth against the backend's candidate
//!    vocabulary and aggregates Precision@k.
//! 5. [`trainer`] drives continual MLM pre-training and evaluates at fixed
//!    example-count checkpoints.
//!
//! Model access goes through the [`backend::MaskedLm`] trait. Scores and model
//! parameters are generic over [`Scalar`] (`f32` or `f64`); the aliases below fix
//! the common choice.

pub mod backend;
pub mod config;
pub mod corpus;
pub mod dictionary;
pub mod evaluator;
pub mod io;
pub mod probes;
pub mod scalar;
pub mod synthetic;
pub mod trainer;

pub use scalar::Scalar;

/// Score vector with single precision scores.
pub type ScoreVector = backend::MaskScoreVector<f32>;
/// Score vector with double precision scores.
pub type ScoreVector64 = backend::MaskScoreVector<f64>;
/// Two-layer toy masked LM in single precision.
pub type ToyBackend = backend::toy::ToyMlm<f32>;
/// Two-layer toy masked LM in double precision.
pub type ToyBackend64 = backend::toy::ToyMlm<f64>;
/// Table-driven mock backend in single precision.
pub type MockBackend = backend::mock::MockBackend<f32>;
/// Table-driven mock backend in double precision.
pub type MockBackend64 = backend::mock::MockBackend<f64>;
