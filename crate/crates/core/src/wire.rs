//! Binary message frames.
//!
//! A frame is `len: u32 | kind: u8 | uri: u16-prefixed UTF-8 | body`, where
//! `len` counts every byte after itself. Integers are big-endian, digests
//! are raw 64 bytes, UUIDs raw 16 bytes, deltas travel as update text.

use uuid::Uuid;

use crate::bytes::{Reader, Writer};
use crate::codec;
use crate::error::WireError;
use crate::revision::{ParentLink, Revision, RevisionHash};

pub const KIND_STATUS: u8 = 0x01;
pub const KIND_REVISION: u8 = 0x02;
pub const KIND_REVISION_REQUEST: u8 = 0x03;
pub const KIND_VOTE: u8 = 0x04;
pub const KIND_READY: u8 = 0x10;
pub const KIND_DATA: u8 = 0x11;
pub const KIND_RESEND_REQUEST: u8 = 0x12;
pub const KIND_ERROR: u8 = 0x13;
pub const KIND_THROTTLE_UP: u8 = 0x14;
pub const KIND_THROTTLE_DOWN: u8 = 0x15;
pub const KIND_FINISHED: u8 = 0x16;

/// Identity advertised in status messages.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct AgentId {
    pub uuid: Uuid,
    pub name: String,
    pub public_key: Vec<u8>,
}

impl AgentId {
    pub fn new(uuid: Uuid, name: impl Into<String>) -> Self {
        AgentId {
            uuid,
            name: name.into(),
            public_key: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatusMsg {
    pub sender: AgentId,
    /// Latest revision the sender has published or adopted.
    pub head: RevisionHash,
    pub is_master: bool,
    /// Time (ms) the sender joined the network, used to rank connection age.
    pub up_since: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RevisionRequestMsg {
    pub requester: Uuid,
    pub wanted: Vec<RevisionHash>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoteMsg {
    pub voter: Uuid,
    pub candidate: Uuid,
    pub round: u32,
    pub vote_timestamp: i64,
    pub election_timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransferMsg {
    Ready,
    Data { sequence: u64, data: Vec<u8> },
    ResendRequest(Vec<u64>),
    Error,
    ThrottleUp,
    ThrottleDown,
    /// Last sequence number sent, `-1` for an empty payload.
    Finished(i64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    Status(StatusMsg),
    Revision(Revision),
    RevisionRequest(RevisionRequestMsg),
    Vote(VoteMsg),
    Transfer(TransferMsg),
}

/// A message addressed to one document (or dataset, for transfers).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub uri: String,
    pub body: Body,
}

impl Frame {
    pub fn new(uri: impl Into<String>, body: Body) -> Self {
        Frame { uri: uri.into(), body }
    }

    pub fn kind(&self) -> u8 {
        match &self.body {
            Body::Status(_) => KIND_STATUS,
            Body::Revision(_) => KIND_REVISION,
            Body::RevisionRequest(_) => KIND_REVISION_REQUEST,
            Body::Vote(_) => KIND_VOTE,
            Body::Transfer(t) => match t {
                TransferMsg::Ready => KIND_READY,
                TransferMsg::Data { .. } => KIND_DATA,
                TransferMsg::ResendRequest(_) => KIND_RESEND_REQUEST,
                TransferMsg::Error => KIND_ERROR,
                TransferMsg::ThrottleUp => KIND_THROTTLE_UP,
                TransferMsg::ThrottleDown => KIND_THROTTLE_DOWN,
                TransferMsg::Finished(_) => KIND_FINISHED,
            },
        }
    }

    pub fn kind_name(&self) -> &'static str {
        kind_name(self.kind())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.u8(self.kind()).short_str(&self.uri);
        match &self.body {
            Body::Status(s) => {
                w.uuid(&s.sender.uuid)
                    .short_str(&s.sender.name)
                    .bytes(&s.sender.public_key)
                    .hash(&s.head)
                    .u8(u8::from(s.is_master))
                    .i64(s.up_since);
            }
            Body::Revision(r) => {
                w.hash(&r.hash())
                    .uuid(&r.author().unwrap_or_else(Uuid::nil))
                    .i64(r.timestamp())
                    .bytes(r.signature().unwrap_or_default())
                    .u8(r.parents().len() as u8);
                for link in r.parents() {
                    w.hash(&link.parent).bytes(codec::serialize(&link.delta).as_bytes());
                }
            }
            Body::RevisionRequest(q) => {
                w.uuid(&q.requester).u32(q.wanted.len() as u32);
                for h in &q.wanted {
                    w.hash(h);
                }
            }
            Body::Vote(v) => {
                w.uuid(&v.voter)
                    .uuid(&v.candidate)
                    .u32(v.round)
                    .i64(v.vote_timestamp)
                    .i64(v.election_timestamp);
            }
            Body::Transfer(t) => match t {
                TransferMsg::Data { sequence, data } => {
                    w.u64(*sequence).bytes(data);
                }
                TransferMsg::ResendRequest(seqs) => {
                    w.u32(seqs.len() as u32);
                    for s in seqs {
                        w.u64(*s);
                    }
                }
                TransferMsg::Finished(last) => {
                    w.i64(*last);
                }
                TransferMsg::Ready | TransferMsg::Error | TransferMsg::ThrottleUp | TransferMsg::ThrottleDown => {}
            },
        }
        let mut out = Vec::with_capacity(w.buf.len() + 4);
        out.extend_from_slice(&(w.buf.len() as u32).to_be_bytes());
        out.extend_from_slice(&w.buf);
        out
    }

    /// Decodes exactly one frame. Revision frames are hash-checked.
    pub fn decode(frame: &[u8]) -> Result<Frame, WireError> {
        let mut r = Reader::new(frame);
        let len = r.u32()? as usize;
        if r.remaining() < len {
            return Err(WireError::Truncated {
                needed: len - r.remaining(),
            });
        }
        if r.remaining() > len {
            return Err(WireError::Invalid {
                field: "length",
                reason: format!("{} trailing bytes", r.remaining() - len),
            });
        }
        let kind = r.u8()?;
        let uri = r.short_str("uri")?;
        let body = match kind {
            KIND_STATUS => Body::Status(StatusMsg {
                sender: AgentId {
                    uuid: r.uuid()?,
                    name: r.short_str("name")?,
                    public_key: r.bytes()?.to_vec(),
                },
                head: r.hash()?,
                is_master: r.u8()? != 0,
                up_since: r.i64()?,
            }),
            KIND_REVISION => {
                let hash = r.hash()?;
                let author = r.uuid()?;
                let timestamp = r.i64()?;
                let sig = r.bytes()?.to_vec();
                let n = r.u8()?;
                let mut parents = Vec::with_capacity(n as usize);
                for _ in 0..n {
                    let parent = r.hash()?;
                    let text = std::str::from_utf8(r.bytes()?).map_err(|_| WireError::Utf8("delta"))?;
                    parents.push(ParentLink::new(parent, codec::parse(text)?));
                }
                let rev = Revision::from_parts(
                    hash,
                    (!author.is_nil()).then_some(author),
                    timestamp,
                    parents,
                    (!sig.is_empty()).then_some(sig),
                )
                .map_err(|e| WireError::Invalid {
                    field: "revision",
                    reason: e.to_string(),
                })?;
                Body::Revision(rev)
            }
            KIND_REVISION_REQUEST => {
                let requester = r.uuid()?;
                let n = r.u32()? as usize;
                if n == 0 {
                    return Err(WireError::Invalid {
                        field: "wanted",
                        reason: "empty request".into(),
                    });
                }
                let wanted = (0..n).map(|_| r.hash()).collect::<Result<_, _>>()?;
                Body::RevisionRequest(RevisionRequestMsg { requester, wanted })
            }
            KIND_VOTE => Body::Vote(VoteMsg {
                voter: r.uuid()?,
                candidate: r.uuid()?,
                round: r.u32()?,
                vote_timestamp: r.i64()?,
                election_timestamp: r.i64()?,
            }),
            KIND_READY => Body::Transfer(TransferMsg::Ready),
            KIND_DATA => Body::Transfer(TransferMsg::Data {
                sequence: r.u64()?,
                data: r.bytes()?.to_vec(),
            }),
            KIND_RESEND_REQUEST => {
                let n = r.u32()? as usize;
                let seqs = (0..n).map(|_| r.u64()).collect::<Result<_, _>>()?;
                Body::Transfer(TransferMsg::ResendRequest(seqs))
            }
            KIND_ERROR => Body::Transfer(TransferMsg::Error),
            KIND_THROTTLE_UP => Body::Transfer(TransferMsg::ThrottleUp),
            KIND_THROTTLE_DOWN => Body::Transfer(TransferMsg::ThrottleDown),
            KIND_FINISHED => Body::Transfer(TransferMsg::Finished(r.i64()?)),
            k => return Err(WireError::UnknownKind(k)),
        };
        if r.remaining() != 0 {
            return Err(WireError::Invalid {
                field: "body",
                reason: format!("{} unread bytes", r.remaining()),
            });
        }
        Ok(Frame { uri, body })
    }
}

pub fn kind_name(kind: u8) -> &'static str {
    match kind {
        KIND_STATUS => "status",
        KIND_REVISION => "revision",
        KIND_REVISION_REQUEST => "revision-request",
        KIND_VOTE => "vote",
        KIND_READY => "ready",
        KIND_DATA => "data",
        KIND_RESEND_REQUEST => "resend-request",
        KIND_ERROR => "error",
        KIND_THROTTLE_UP => "throttle-up",
        KIND_THROTTLE_DOWN => "throttle-down",
        KIND_FINISHED => "finished",
        _ => "unknown",
    }
}
