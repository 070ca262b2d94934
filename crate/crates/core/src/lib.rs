//! Catalog extraction from ordered text segments with a transition-based
//! parser.
//!
//! Segments (for example OCR lines of a long document) are consumed one at a
//! time; a scorer ranks four actions that grow a catalog tree of headings and
//! texts under a pseudo root.

pub mod baselines;
pub mod catalog;
pub mod cli;
pub mod corpus;
pub mod document;
pub mod experiment;
pub mod metrics;
pub mod scorer;
pub mod transition;

pub use catalog::{Action, CatalogNode, CatalogTree, EvalTuple, Joiner, NodeKind, Segment, TransitionState};
