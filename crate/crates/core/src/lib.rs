//! Evaluation engine for open-ended story generation.
//!
//! The crate operates on line-delimited [`schema::EvalRecord`]s and covers the
//! whole measurement suite used to compare generated stories against human
//! text across the top-k decoding spectrum:
//!
//! - lexical and syntactic statistics of a story ([`intrinsic`]),
//! - how strongly a story follows its prompt ([`relatedness`]),
//! - model probes driven by a scorer or stored traces ([`probes`]),
//! - top-k decoding and a reference n-gram language model ([`decoding`]),
//! - aggregation and CSV/SVG emission ([`report`]).
//!
//! [`pipeline`] wires these into batch runs and [`synthetic`] supplies a
//! deterministic toy corpus so every path runs without neural models.

pub mod decoding;
pub mod error;
pub mod intrinsic;
pub mod pipeline;
pub mod probes;
pub mod relatedness;
pub mod report;
pub mod resources;
pub mod rng;
pub mod schema;
pub mod scorer;
pub mod synthetic;
pub mod textops;

pub use error::{Error, Result};
pub use schema::{AnnotatedToken, EvalRecord, TokenTrace, Upos};
pub use scorer::{LmScorer, SequenceScorer};

/// Number of word tokens every story is cut or generated to.
pub const STORY_WORDS: usize = 150;
