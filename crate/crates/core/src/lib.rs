//! Desk-scale toolkit for reasoning-intensive dense retrieval.
//!
//! The crate covers synthetic training data construction (corpus filtering,
//! conditioned query generation, candidate mining, LLM relevance annotation),
//! contrastive training of a linear adapter head over frozen embeddings with
//! reasoning-intensity sample weighting, and evaluation (nDCG@k, dataset
//! statistics, train/test contamination audits).

pub mod annotate;
pub mod contamination;
pub mod corpus;
pub mod error;
pub mod evalx;
pub mod llm;
pub mod retrieval;
pub mod synthesis;
pub mod tasks;
pub mod trainer;
pub mod util;

pub use error::{Error, Result};
