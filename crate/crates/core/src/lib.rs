//! Grid-labeling open information extraction.
//!
//! The toolkit extracts `(subject; relation; object)` tuples by treating
//! extraction as a 2-D grid labeling problem: one row per extraction, one
//! column per token. A small trainable transformer fills the grid row by
//! row, feeding the embeddings of already-predicted labels back into the
//! next row, so a sentence is encoded exactly once regardless of how many
//! extractions it yields.
//!
//! The same machinery, with a `{CC, CONJ, N}` alphabet, detects
//! coordination structures; conjunctive sentences are split into simple
//! ones before extraction and the results are merged.
//!
//! Modules:
//! - [`types`] — tokens, sentences, label grids, extractions, coordinations
//! - [`lingo`] — tokenizer, pluggable POS tagger, head-verb masks
//! - [`nnet`] — the trainable grid-labeling network and its optimizer
//! - [`constraints`] — coverage penalties and violation counting
//! - [`decode`] — hard grids to extractions / coordination structures
//! - [`pipeline`] — splitting, end-to-end extraction, gold alignment
//! - [`eval`] — the four benchmark scorers, P-R curves and AUC
//! - [`synth`] — deterministic templated corpora for tests and demos

pub mod constraints;
pub mod decode;
pub mod error;
pub mod eval;
pub mod lingo;
pub mod nnet;
pub mod pipeline;
pub mod synth;
pub mod types;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
