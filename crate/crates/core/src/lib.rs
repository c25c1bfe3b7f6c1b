//! Earnestness analytics for interactive lecture polls.
//!
//! The crate covers the whole offline pipeline: ingesting poll exports into a
//! [`Corpus`], embedding responses, computing non-earnestness indicators and
//! drawing an imbalance-aware annotation sample, aggregating rubric labels,
//! KNN classification with a cross-question non-earnest pool, t-SNE
//! projection, and per-student engagement reporting.
//!
//! Numeric kernels are generic over [`Scalar`] (`f32`/`f64`); the aliases
//! below fix the `f64` instantiations used by the rest of the toolkit.

pub mod annotation;
pub mod classifier;
pub mod corpus;
pub mod embedding;
pub mod engagement;
pub mod error;
pub mod features;
pub mod matrix;
pub mod pipeline;
pub mod projection;
pub mod scalar;
pub mod store;
pub mod synthetic;

pub use corpus::{normalize_text, Corpus, Question, Response, UniqueResponse};
pub use embedding::{EmbeddingProvider, EmbeddingVector, TextHash};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

/// `f64` embedding matrix.
pub type EmbeddingMatrix = Matrix<f64>;
/// Embedded training or evaluation item.
pub type LabeledVector = classifier::LabeledPoint<f64>;
/// t-SNE output in `f64`.
pub type Projection = projection::TsneResult<f64>;
/// t-SNE output in `f32`, for large inputs where memory matters.
pub type ProjectionF32 = projection::TsneResult<f32>;
