use thiserror::Error;

use crate::revision::RevisionHash;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TermError {
    #[error("IRI is empty")]
    EmptyIri,
    #[error("IRI {iri:?} contains forbidden character {found:?}")]
    InvalidIriChar { iri: String, found: char },
    #[error("{0} must be an IRI")]
    NonIriPosition(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeltaError {
    #[error("triple both inserted and removed: {0}")]
    Overlap(String),
    #[error("cannot combine an empty path")]
    EmptyPath,
}

/// Raised by the delta text parser for anything outside the
/// `PREFIX` / `INSERT DATA` / `DELETE DATA` subset.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed delta at byte {offset}: {reason}")]
pub struct MalformedDelta {
    pub offset: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("revision {0} is not in the graph of revisions")]
    UnknownRevision(RevisionHash),
    #[error("ancestor {0} of the requested revision is not resolved")]
    UnresolvedAncestor(RevisionHash),
    #[error("revision content hashes to {computed}, claimed {claimed}")]
    HashMismatch {
        claimed: RevisionHash,
        computed: RevisionHash,
    },
    #[error("revision {0} has more than two parents")]
    TooManyParents(RevisionHash),
    #[error("branch is not linear at revision {0}")]
    NotLinear(RevisionHash),
    #[error("revision {0} has already been published")]
    NotLocal(RevisionHash),
    #[error("merge paths disagree at revision {0}")]
    PathMismatch(RevisionHash),
    #[error(transparent)]
    Delta(#[from] DeltaError),
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt record at offset {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
    #[error(transparent)]
    Delta(#[from] MalformedDelta),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("frame truncated: needed {needed} more bytes")]
    Truncated { needed: usize },
    #[error("unknown message kind 0x{0:02x}")]
    UnknownKind(u8),
    #[error("invalid utf-8 in {0}")]
    Utf8(&'static str),
    #[error("invalid field {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error(transparent)]
    Delta(#[from] MalformedDelta),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatasetError {
    #[error("rectangle has min > max")]
    InvalidRect,
    #[error("dataset {0} includes itself")]
    SelfInclude(String),
    #[error("dataset {dataset} is missing its {field} triple")]
    Missing { dataset: String, field: &'static str },
    #[error("unparseable geometry literal {0:?}")]
    Geometry(String),
    #[error(transparent)]
    Term(#[from] TermError),
}

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("dataset {0} is not held locally")]
    PayloadMissing(String),
    #[error("no agent holds dataset {0}")]
    NoHolder(String),
    #[error("payload store: {0}")]
    Store(#[from] std::io::Error),
}
