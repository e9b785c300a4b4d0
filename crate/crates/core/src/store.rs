//! Append-only record log persisting one document's graph of revisions.
//!
//! Each record is `kind: u8 | len: u32 | payload`. Kinds:
//!
//! | kind | payload |
//! |------|---------|
//! | 1 meta | document uri |
//! | 2 triple | subject, predicate, object of the snapshot graph |
//! | 3 revision | hash, author, timestamp, signature |
//! | 4 delta | parent hash, child hash, parent index, delta text |
//! | 5 snapshot | head hash the following triple records belong to |
//!
//! Delta records follow their revision record. Revisions are written in
//! topological order, so a log replays without pending parents.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use uuid::Uuid;

use crate::bytes::{Reader, Writer};
use crate::codec;
use crate::error::{StoreError, WireError};
use crate::gor::GraphOfRevisions;
use crate::revision::{ParentLink, Revision, RevisionHash};
use crate::term::Graph;

const META: u8 = 1;
const TRIPLE: u8 = 2;
const REVISION: u8 = 3;
const DELTA: u8 = 4;
const SNAPSHOT: u8 = 5;

fn record(kind: u8, payload: &[u8]) -> Vec<u8> {
    let mut w = Writer::default();
    w.u8(kind).bytes(payload);
    w.buf
}

fn revision_records(rev: &Revision) -> Vec<u8> {
    let mut out = Vec::new();
    let mut w = Writer::default();
    w.hash(&rev.hash())
        .uuid(&rev.author().unwrap_or_else(Uuid::nil))
        .i64(rev.timestamp())
        .bytes(rev.signature().unwrap_or_default());
    out.extend(record(REVISION, &w.buf));
    for (i, link) in rev.parents().iter().enumerate() {
        let mut w = Writer::default();
        w.hash(&link.parent)
            .hash(&rev.hash())
            .u8(i as u8)
            .bytes(codec::serialize(&link.delta).as_bytes());
        out.extend(record(DELTA, &w.buf));
    }
    out
}

/// An open log file accepting appended records.
pub struct RevisionLog {
    out: BufWriter<File>,
}

impl RevisionLog {
    /// Creates (truncating) a log for `uri`.
    pub fn create(path: &Path, uri: &str) -> Result<Self, StoreError> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&record(META, uri.as_bytes()))?;
        Ok(RevisionLog { out })
    }

    pub fn open_append(path: &Path) -> Result<Self, StoreError> {
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(RevisionLog {
            out: BufWriter::new(file),
        })
    }

    /// Appends a revision; its parents must already be in the log.
    pub fn append_revision(&mut self, rev: &Revision) -> Result<(), StoreError> {
        if !rev.is_root() {
            self.out.write_all(&revision_records(rev))?;
        }
        Ok(())
    }

    /// Appends the triples of `graph` as the materialized state of `head`.
    pub fn append_snapshot(&mut self, head: &RevisionHash, graph: &Graph) -> Result<(), StoreError> {
        self.out.write_all(&record(SNAPSHOT, head.as_bytes()))?;
        for t in graph.triples() {
            let mut w = Writer::default();
            w.triple(t);
            self.out.write_all(&record(TRIPLE, &w.buf))?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), StoreError> {
        self.out.flush()?;
        Ok(())
    }
}

/// Writes the whole graph of revisions, plus a triple snapshot of the
/// latest head.
pub fn save(gor: &GraphOfRevisions, path: &Path) -> Result<(), StoreError> {
    let mut log = RevisionLog::create(path, gor.uri())?;
    for rev in gor.topological() {
        log.append_revision(rev)?;
    }
    if let Some(head) = gor.sorted_heads().last() {
        log.append_snapshot(head, &gor.materialize(head)?)?;
    }
    log.flush()
}

/// A reloaded document.
#[derive(Debug)]
pub struct Loaded {
    pub gor: GraphOfRevisions,
    /// The last snapshot in the log, checked against its head.
    pub snapshot: Option<(RevisionHash, Graph)>,
}

struct OpenRevision {
    hash: RevisionHash,
    author: Option<Uuid>,
    timestamp: i64,
    signature: Option<Vec<u8>>,
    links: Vec<(u8, ParentLink)>,
}

impl OpenRevision {
    fn finish(mut self) -> Result<Revision, StoreError> {
        self.links.sort_by_key(|(i, _)| *i);
        let parents = self.links.into_iter().map(|(_, l)| l).collect();
        Ok(Revision::from_parts(self.hash, self.author, self.timestamp, parents, self.signature)?)
    }
}

/// Replays a log, verifying every revision hash and the snapshot.
pub fn load(path: &Path) -> Result<Loaded, StoreError> {
    let mut data = Vec::new();
    File::open(path)?.read_to_end(&mut data)?;
    let mut r = Reader::new(&data);
    let mut gor: Option<GraphOfRevisions> = None;
    let mut open: Option<OpenRevision> = None;
    let mut snapshot: Option<(RevisionHash, Graph)> = None;

    while r.remaining() > 0 {
        let offset = (data.len() - r.remaining()) as u64;
        let corrupt = |e: WireError| StoreError::Corrupt {
            offset,
            reason: e.to_string(),
        };
        let kind = r.u8().map_err(corrupt)?;
        let payload = r.bytes().map_err(corrupt)?;
        let mut p = Reader::new(payload);
        let Some(g) = gor.as_mut() else {
            if kind != META {
                return Err(StoreError::Corrupt {
                    offset,
                    reason: "log does not start with a meta record".into(),
                });
            }
            gor = Some(GraphOfRevisions::new(String::from_utf8(payload.to_vec()).map_err(|_| corrupt(WireError::Utf8("uri")))?));
            continue;
        };
        if kind != DELTA {
            if let Some(rev) = open.take() {
                g.insert(rev.finish()?)?;
            }
        }
        match kind {
            REVISION => {
                let hash = p.hash().map_err(corrupt)?;
                let author = p.uuid().map_err(corrupt)?;
                let timestamp = p.i64().map_err(corrupt)?;
                let sig = p.bytes().map_err(corrupt)?;
                open = Some(OpenRevision {
                    hash,
                    author: (!author.is_nil()).then_some(author),
                    timestamp,
                    signature: (!sig.is_empty()).then(|| sig.to_vec()),
                    links: Vec::new(),
                });
            }
            DELTA => {
                let parent = p.hash().map_err(corrupt)?;
                let child = p.hash().map_err(corrupt)?;
                let index = p.u8().map_err(corrupt)?;
                let text = std::str::from_utf8(p.bytes().map_err(corrupt)?).map_err(|_| corrupt(WireError::Utf8("delta")))?;
                let delta = codec::parse(text)?;
                match open.as_mut() {
                    Some(o) if o.hash == child => o.links.push((index, ParentLink::new(parent, delta))),
                    _ => {
                        return Err(StoreError::Corrupt {
                            offset,
                            reason: "delta record without its revision".into(),
                        })
                    }
                }
            }
            SNAPSHOT => {
                let head = p.hash().map_err(corrupt)?;
                snapshot = Some((head, Graph::new(g.uri())));
            }
            TRIPLE => {
                let t = p.triple().map_err(corrupt)?;
                match snapshot.as_mut() {
                    Some((_, graph)) => {
                        graph.insert(t);
                    }
                    None => {
                        return Err(StoreError::Corrupt {
                            offset,
                            reason: "triple record outside a snapshot".into(),
                        })
                    }
                }
            }
            META => {
                return Err(StoreError::Corrupt {
                    offset,
                    reason: "duplicate meta record".into(),
                })
            }
            k => {
                return Err(StoreError::Corrupt {
                    offset,
                    reason: format!("unknown record kind {k}"),
                })
            }
        }
    }
    let mut gor = gor.ok_or(StoreError::Corrupt {
        offset: 0,
        reason: "empty log".into(),
    })?;
    if let Some(rev) = open.take() {
        gor.insert(rev.finish()?)?;
    }
    if gor.pending_len() > 0 {
        return Err(StoreError::Corrupt {
            offset: data.len() as u64,
            reason: format!("{} revisions with missing parents", gor.pending_len()),
        });
    }
    if let Some((head, graph)) = &snapshot {
        if gor.materialize(head)?.triples() != graph.triples() {
            return Err(StoreError::Corrupt {
                offset: data.len() as u64,
                reason: format!("snapshot of {head} disagrees with its revisions"),
            });
        }
    }
    Ok(Loaded { gor, snapshot })
}
