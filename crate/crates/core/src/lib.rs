//! Dispute outcome prediction: synthetic corpora, text and tabular feature
//! pipelines, tree ensembles and baselines, evaluation, explanations, and
//! behavioral analytics over buyer-seller conversations.

pub mod behavior;
pub mod domain;
pub mod error;
pub mod eval;
pub mod features;
pub mod interpret;
pub mod learners;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod text;

pub use error::{OdrError, Result};
