//! Token-level editing of human-written corpora under a prior language model.
//!
//! The crate is split by workflow:
//!
//! - [`corpus`]: documents, tokenizers, mixing and splitting, JSON-Lines I/O.
//! - [`prior`]: the [`PriorModel`] interface with an interpolated
//!   absolute-discounting n-gram model, a uniform model and an HTTP client
//!   for remote scorers.
//! - [`editor`]: threshold-gated resampling of high-probability tokens.
//! - [`simulator`]: Gaussian linear-model experiments comparing full
//!   resynthesis against masked label editing.
//! - [`diagnostics`]: perplexity and token-probability histograms, hashed
//!   n-gram profiles and importance-weighted selection.

pub mod corpus;
pub mod diagnostics;
pub mod editor;
mod error;
pub mod fixture;
pub mod hash;
pub mod prior;
pub mod simulator;

pub use corpus::{Corpus, Document, Origin, TokenId, TokenSequence, Tokenizer, TokenizerKind};
pub use error::{Error, Result};
pub use prior::{NgramPrior, PriorModel, SequenceScore, TopKDistribution, UniformPrior};
