//! Versioned RDF graphs synchronized between agents.
//!
//! A document is a set of triples plus its history, kept as a graph of
//! revisions whose edges carry [`Delta`]s. Agents exchange revisions, elect a
//! merge master per document, and move bulk dataset payloads on request.

pub mod agent;
mod bytes;
pub mod codec;
pub mod dataset;
pub mod delta;
pub mod error;
pub mod gor;
pub mod reconcile;
pub mod revision;
pub mod store;
pub mod term;
pub mod transfer;
pub mod wire;

pub use delta::Delta;
pub use gor::GraphOfRevisions;
pub use reconcile::{merge_revision, rebase_revisions, squash, MergeOutcome, RebaseDeltaMode, RebaseOptions};
pub use error::{DeltaError, GraphError, MalformedDelta};
pub use revision::{ParentLink, Revision, RevisionHash, Signer};
pub use term::{Graph, Pattern, Skolemizer, Term, Triple};
