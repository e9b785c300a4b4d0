//! Revisions and their SHA-512 content hash.

use std::fmt;

use sha2::{Digest, Sha512};
use uuid::Uuid;

use crate::codec;
use crate::delta::Delta;
use crate::error::GraphError;

/// 64-byte SHA-512 digest identifying a revision.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RevisionHash(pub [u8; 64]);

impl RevisionHash {
    pub fn as_bytes(&self) -> &[u8; 64] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        Some(RevisionHash(bytes.try_into().ok()?))
    }

    /// First 8 hex digits, for logs.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Debug for RevisionHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RevisionHash({})", self.short())
    }
}

impl fmt::Display for RevisionHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.short())
    }
}

/// An edge to a parent revision, carrying the delta parent -> child.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParentLink {
    pub parent: RevisionHash,
    pub delta: Delta,
}

impl ParentLink {
    pub fn new(parent: RevisionHash, delta: Delta) -> Self {
        ParentLink { parent, delta }
    }
}

/// Computes the revision hash:
/// `SHA512(author, timestamp, ⋃ SHA512(delta bytes, parent hash))`.
///
/// Author is the 16 raw UUID bytes (all zero for the root), the timestamp is
/// big-endian `i64`. Per-parent digests are sorted before concatenation so
/// the parent order does not matter.
pub fn revision_hash(author: Option<Uuid>, timestamp: i64, parents: &[ParentLink]) -> RevisionHash {
    let mut inner: Vec<[u8; 64]> = parents
        .iter()
        .map(|link| {
            let mut h = Sha512::new();
            h.update(codec::canonical_bytes(&link.delta));
            h.update(link.parent.as_bytes());
            h.finalize().into()
        })
        .collect();
    inner.sort_unstable();
    let mut h = Sha512::new();
    h.update(author.unwrap_or_else(Uuid::nil).as_bytes());
    h.update(timestamp.to_be_bytes());
    for d in &inner {
        h.update(d);
    }
    RevisionHash(h.finalize().into())
}

/// Produces an opaque signature over a revision hash.
///
/// Signatures are carried and stored but never verified.
pub trait Signer {
    fn sign(&self, hash: &RevisionHash) -> Vec<u8>;
}

/// A node of the graph of revisions. Immutable once built; the hash covers
/// author, timestamp, parents and deltas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Revision {
    hash: RevisionHash,
    author: Option<Uuid>,
    timestamp: i64,
    parents: Vec<ParentLink>,
    signature: Option<Vec<u8>>,
}

impl Revision {
    /// The null revision every graph of revisions starts from.
    pub fn root() -> Self {
        Revision {
            hash: revision_hash(None, 0, &[]),
            author: None,
            timestamp: 0,
            parents: Vec::new(),
            signature: None,
        }
    }

    pub fn root_hash() -> RevisionHash {
        revision_hash(None, 0, &[])
    }

    /// Builds and hashes a new revision. `timestamp` is in milliseconds.
    pub fn new(author: Uuid, timestamp: i64, parents: Vec<ParentLink>, signer: Option<&dyn Signer>) -> Self {
        assert!(
            (1..=2).contains(&parents.len()),
            "a non-root revision has one or two parents"
        );
        let hash = revision_hash(Some(author), timestamp, &parents);
        Revision {
            hash,
            author: Some(author),
            timestamp,
            signature: signer.map(|s| s.sign(&hash)),
            parents,
        }
    }

    /// Reassembles a revision received from elsewhere, checking its hash.
    pub fn from_parts(
        hash: RevisionHash,
        author: Option<Uuid>,
        timestamp: i64,
        parents: Vec<ParentLink>,
        signature: Option<Vec<u8>>,
    ) -> Result<Self, GraphError> {
        if parents.len() > 2 {
            return Err(GraphError::TooManyParents(hash));
        }
        let computed = revision_hash(author, timestamp, &parents);
        if computed != hash {
            return Err(GraphError::HashMismatch { claimed: hash, computed });
        }
        Ok(Revision {
            hash,
            author,
            timestamp,
            parents,
            signature,
        })
    }

    pub fn hash(&self) -> RevisionHash {
        self.hash
    }

    pub fn author(&self) -> Option<Uuid> {
        self.author
    }

    pub fn timestamp(&self) -> i64 {
        self.timestamp
    }

    pub fn parents(&self) -> &[ParentLink] {
        &self.parents
    }

    pub fn parent_hashes(&self) -> impl Iterator<Item = RevisionHash> + '_ {
        self.parents.iter().map(|p| p.parent)
    }

    pub fn signature(&self) -> Option<&[u8]> {
        self.signature.as_deref()
    }

    pub fn is_root(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn is_merge(&self) -> bool {
        self.parents.len() == 2
    }

    pub fn verify(&self) -> bool {
        revision_hash(self.author, self.timestamp, &self.parents) == self.hash
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::Triple;

    fn delta(n: usize) -> Delta {
        Delta::new([Triple::iris("urn:s", "urn:p", &format!("urn:o{n}")).unwrap()], []).unwrap()
    }

    #[test]
    fn timestamp_changes_hash() {
        let a = Uuid::from_u128(1);
        let link = vec![ParentLink::new(Revision::root_hash(), delta(1))];
        let r1 = Revision::new(a, 10, link.clone(), None);
        let r2 = Revision::new(a, 11, link, None);
        assert_ne!(r1.hash(), r2.hash());
    }

    #[test]
    fn insertion_order_does_not_matter() {
        let t1 = Triple::iris("urn:s", "urn:p", "urn:o1").unwrap();
        let t2 = Triple::iris("urn:s", "urn:p", "urn:o2").unwrap();
        let d1 = Delta::new([t1.clone(), t2.clone()], []).unwrap();
        let d2 = Delta::new([t2, t1], []).unwrap();
        let a = Uuid::from_u128(1);
        let h1 = revision_hash(Some(a), 5, &[ParentLink::new(Revision::root_hash(), d1)]);
        let h2 = revision_hash(Some(a), 5, &[ParentLink::new(Revision::root_hash(), d2)]);
        assert_eq!(h1, h2);
    }

    #[test]
    fn parent_order_does_not_matter() {
        let a = Uuid::from_u128(1);
        let p1 = ParentLink::new(RevisionHash([1; 64]), delta(1));
        let p2 = ParentLink::new(RevisionHash([2; 64]), delta(2));
        assert_eq!(
            revision_hash(Some(a), 1, &[p1.clone(), p2.clone()]),
            revision_hash(Some(a), 1, &[p2, p1])
        );
    }

    #[test]
    fn from_parts_detects_tampering() {
        let a = Uuid::from_u128(3);
        let r = Revision::new(a, 7, vec![ParentLink::new(Revision::root_hash(), delta(1))], None);
        let ok = Revision::from_parts(r.hash(), r.author(), r.timestamp(), r.parents().to_vec(), None);
        assert!(ok.is_ok());
        let bad = Revision::from_parts(r.hash(), r.author(), r.timestamp() + 1, r.parents().to_vec(), None);
        assert!(matches!(bad, Err(GraphError::HashMismatch { .. })));
    }

    struct FixedSigner;
    impl Signer for FixedSigner {
        fn sign(&self, hash: &RevisionHash) -> Vec<u8> {
            hash.0[..8].to_vec()
        }
    }

    #[test]
    fn signature_is_not_hashed() {
        let a = Uuid::from_u128(3);
        let links = vec![ParentLink::new(Revision::root_hash(), delta(1))];
        let signed = Revision::new(a, 7, links.clone(), Some(&FixedSigner));
        let unsigned = Revision::new(a, 7, links, None);
        assert_eq!(signed.hash(), unsigned.hash());
        assert_eq!(signed.signature().unwrap(), &signed.hash().0[..8]);
    }
}
