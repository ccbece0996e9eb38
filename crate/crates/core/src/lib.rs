//! Clinical note error flagging by retrieval-grounded expert debate.
//!
//! The crate is organised the way a note flows through the system:
//!
//! - [`kb`] turns raw medical documents into source-labelled chunk collections.
//! - [`retrieval`] runs dense, sparse and online search per sub-query and fuses
//!   the ranked lists with weighted reciprocal rank fusion.
//! - [`llm`] wraps chat and embedding providers, prompt templates and query
//!   decomposition, with a scripted mock for offline runs.
//! - [`debate`] drives the two-expert debate and the blinded judge.
//! - [`safety`] applies the post-hoc rule cascade to the judge's verdict.
//! - [`pipeline`] wires the stages into the full system and its baselines.
//! - [`eval`] loads datasets and computes the metric suite.
//! - [`cli`] backs the `bluemed` binary.
//!
//! Runnable walkthroughs of each capability live in `examples/`.

pub mod cli;
pub mod config;
pub mod debate;
pub mod error;
pub mod eval;
pub mod kb;
pub mod llm;
pub mod pipeline;
pub mod retrieval;
pub mod safety;
pub mod text;
mod types;

pub use error::{Error, Result};
pub use types::{Expert, Label};
