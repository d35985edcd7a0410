//! Referring-expression generation and comprehension: an LSTM speaker over
//! visual-comparison region representations, trained by maximum likelihood
//! or a discriminative softmax objective, with optional tied decoding of all
//! same-category objects in a scene.

pub mod checkpoint;
pub mod comprehension;
pub mod context;
pub mod dataset;
pub mod error;
pub mod generation;
pub mod geometry;
pub mod gradcheck;
pub mod metrics;
pub mod parallel;
pub mod params;
pub mod speaker;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod training;

pub use error::{Error, IntegrityKind, Result};
