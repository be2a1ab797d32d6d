//! Multilingual music-genre tag embeddings.
//!
//! Tag embeddings are composed from aligned word vectors ([`compose`]),
//! refined against a typed genre graph ([`genregraph`], [`retrofit`]), and
//! used to translate tag sets between tag systems ([`translate`]). The
//! [`eval`] module scores translations with macro-AUC over stratified folds.

pub mod compose;
pub mod error;
pub mod eval;
pub mod genregraph;
pub mod retrofit;
pub mod text;
pub mod translate;
pub mod wordvec;

pub use error::{Error, Result};
