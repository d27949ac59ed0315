//! Multi-label genre tagging from plot summaries.
//!
//! The crate bundles every stage of the tagging pipeline:
//!
//! - [`corpus`]: jsonl ingestion, token-length filtering, seeded splits and
//!   corpus statistics.
//! - [`textproc`]: tokenization, vocabularies with `UNK`/`EOS`, bag-of-words.
//! - [`nb`]: per-genre binary and 20-class multinomial Naive Bayes.
//! - [`embed`]: embedding tables, averaged plot vectors, nearest words.
//! - [`gbt`]: second-order gradient-boosted trees (softmax classifier and
//!   squared-error regressor).
//! - [`gru`]: embedding + stacked GRU / layer-normalized GRU network with
//!   sigmoid, rank and softmax heads, trained with BPTT and Adam.
//! - [`multilabel`]: turning score vectors into genre sets (fixed cut,
//!   top-k, learned per-example thresholds).
//! - [`metrics`]: hit rate, Jaccard, confusion counts, P/R/F and rank loss.

pub mod corpus;
pub mod embed;
pub mod error;
pub mod gbt;
pub mod gru;
pub mod labels;
pub mod metrics;
pub mod multilabel;
pub mod nb;
pub mod textproc;

mod hash;

pub use error::{Error, Result};
pub use labels::{Genre, GenreSet, ScoreKind, ScoreVector, N_GENRES};
