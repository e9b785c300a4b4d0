//! Big-endian field encoding shared by the record log and wire frames.

use uuid::Uuid;

use crate::error::WireError;
use crate::revision::RevisionHash;
use crate::term::{Term, Triple};

#[derive(Debug, Default)]
pub(crate) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u16(&mut self, v: u16) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn i64(&mut self, v: i64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn raw(&mut self, v: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(v);
        self
    }

    pub fn hash(&mut self, h: &RevisionHash) -> &mut Self {
        self.raw(h.as_bytes())
    }

    pub fn uuid(&mut self, u: &Uuid) -> &mut Self {
        self.raw(u.as_bytes())
    }

    /// `u32` length then bytes.
    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.u32(v.len() as u32).raw(v)
    }

    /// `u16` length then UTF-8.
    pub fn short_str(&mut self, s: &str) -> &mut Self {
        self.u16(s.len() as u16).raw(s.as_bytes())
    }

    pub fn term(&mut self, t: &Term) -> &mut Self {
        match t {
            Term::Iri(v) => self.u8(0).bytes(v.as_bytes()),
            Term::Literal { value, datatype: None } => self.u8(1).bytes(value.as_bytes()),
            Term::Literal {
                value,
                datatype: Some(dt),
            } => self.u8(2).bytes(value.as_bytes()).bytes(dt.as_bytes()),
        }
    }

    pub fn triple(&mut self, t: &Triple) -> &mut Self {
        self.term(t.subject()).term(t.predicate()).term(t.object())
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.remaining() < n {
            return Err(WireError::Truncated {
                needed: n - self.remaining(),
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    pub fn i64(&mut self) -> Result<i64, WireError> {
        Ok(i64::from_be_bytes(self.array()?))
    }

    pub fn hash(&mut self) -> Result<RevisionHash, WireError> {
        Ok(RevisionHash(self.array()?))
    }

    pub fn uuid(&mut self) -> Result<Uuid, WireError> {
        Ok(Uuid::from_bytes(self.array()?))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], WireError> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    pub fn string(&mut self, field: &'static str) -> Result<String, WireError> {
        let b = self.bytes()?;
        String::from_utf8(b.to_vec()).map_err(|_| WireError::Utf8(field))
    }

    pub fn short_str(&mut self, field: &'static str) -> Result<String, WireError> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| WireError::Utf8(field))
    }

    pub fn term(&mut self) -> Result<Term, WireError> {
        let kind = self.u8()?;
        let value = self.string("term")?;
        let invalid = |e: crate::error::TermError| WireError::Invalid {
            field: "term",
            reason: e.to_string(),
        };
        match kind {
            0 => Term::iri(value).map_err(invalid),
            1 => Ok(Term::literal(value)),
            2 => {
                let dt = self.string("datatype")?;
                Term::typed_literal(value, dt).map_err(invalid)
            }
            k => Err(WireError::Invalid {
                field: "term",
                reason: format!("unknown term kind {k}"),
            }),
        }
    }

    pub fn triple(&mut self) -> Result<Triple, WireError> {
        let (s, p, o) = (self.term()?, self.term()?, self.term()?);
        Triple::new(s, p, o).map_err(|e| WireError::Invalid {
            field: "triple",
            reason: e.to_string(),
        })
    }
}
