//! RDF terms, triples and graphs.
//!
//! Terms are either IRIs or literals. Blank nodes never reach this layer:
//! they are replaced by minted IRIs at ingestion (see [`Skolemizer`]).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Bound;
use std::sync::Arc;

use uuid::Uuid;

use crate::error::TermError;

/// An RDF term.
///
/// The derived ordering compares the kind tag first (IRIs sort before
/// literals), then the value, then the datatype. Deltas are serialized in
/// this order, so it must stay stable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Iri(Arc<str>),
    Literal {
        value: Arc<str>,
        datatype: Option<Arc<str>>,
    },
}

fn validate_iri(value: &str) -> Result<(), TermError> {
    if value.is_empty() {
        return Err(TermError::EmptyIri);
    }
    if let Some(c) = value
        .chars()
        .find(|c| c.is_whitespace() || matches!(c, '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\'))
    {
        return Err(TermError::InvalidIriChar {
            iri: value.to_owned(),
            found: c,
        });
    }
    Ok(())
}

impl Term {
    pub fn iri(value: impl AsRef<str>) -> Result<Self, TermError> {
        let value = value.as_ref();
        validate_iri(value)?;
        Ok(Term::Iri(Arc::from(value)))
    }

    pub fn literal(value: impl AsRef<str>) -> Self {
        Term::Literal {
            value: Arc::from(value.as_ref()),
            datatype: None,
        }
    }

    pub fn typed_literal(value: impl AsRef<str>, datatype: impl AsRef<str>) -> Result<Self, TermError> {
        let datatype = datatype.as_ref();
        validate_iri(datatype)?;
        Ok(Term::Literal {
            value: Arc::from(value.as_ref()),
            datatype: Some(Arc::from(datatype)),
        })
    }

    pub fn is_iri(&self) -> bool {
        matches!(self, Term::Iri(_))
    }

    /// The IRI text or the literal's lexical value.
    pub fn value(&self) -> &str {
        match self {
            Term::Iri(v) => v,
            Term::Literal { value, .. } => value,
        }
    }

    pub fn as_iri(&self) -> Option<&str> {
        match self {
            Term::Iri(v) => Some(v),
            Term::Literal { .. } => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri(v) => write!(f, "<{v}>"),
            Term::Literal { value, datatype } => {
                f.write_str("\"")?;
                for c in value.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\r' => f.write_str("\\r")?,
                        '\t' => f.write_str("\\t")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")?;
                if let Some(dt) = datatype {
                    write!(f, "^^<{dt}>")?;
                }
                Ok(())
            }
        }
    }
}

/// A (subject, predicate, object) statement. Subject and predicate are IRIs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    subject: Term,
    predicate: Term,
    object: Term,
}

impl Triple {
    pub fn new(subject: Term, predicate: Term, object: Term) -> Result<Self, TermError> {
        if !subject.is_iri() {
            return Err(TermError::NonIriPosition("subject"));
        }
        if !predicate.is_iri() {
            return Err(TermError::NonIriPosition("predicate"));
        }
        Ok(Triple {
            subject,
            predicate,
            object,
        })
    }

    /// Builds a triple of three IRIs.
    pub fn iris(s: &str, p: &str, o: &str) -> Result<Self, TermError> {
        Triple::new(Term::iri(s)?, Term::iri(p)?, Term::iri(o)?)
    }

    pub fn subject(&self) -> &Term {
        &self.subject
    }

    pub fn predicate(&self) -> &Term {
        &self.predicate
    }

    pub fn object(&self) -> &Term {
        &self.object
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} .", self.subject, self.predicate, self.object)
    }
}

/// A triple pattern; `None` slots are wildcards.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Pattern {
    pub subject: Option<Term>,
    pub predicate: Option<Term>,
    pub object: Option<Term>,
}

impl Pattern {
    pub fn any() -> Self {
        Pattern::default()
    }

    pub fn matches(&self, t: &Triple) -> bool {
        self.subject.as_ref().map_or(true, |s| s == &t.subject)
            && self.predicate.as_ref().map_or(true, |p| p == &t.predicate)
            && self.object.as_ref().map_or(true, |o| o == &t.object)
    }
}

/// A set of triples belonging to one document.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Graph {
    uri: String,
    triples: BTreeSet<Triple>,
}

impl Graph {
    pub fn new(uri: impl Into<String>) -> Self {
        Graph {
            uri: uri.into(),
            triples: BTreeSet::new(),
        }
    }

    pub fn from_triples(uri: impl Into<String>, triples: impl IntoIterator<Item = Triple>) -> Self {
        Graph {
            uri: uri.into(),
            triples: triples.into_iter().collect(),
        }
    }

    pub fn uri(&self) -> &str {
        &self.uri
    }

    pub fn triples(&self) -> &BTreeSet<Triple> {
        &self.triples
    }

    pub fn into_triples(self) -> BTreeSet<Triple> {
        self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triples.contains(t)
    }

    /// Returns `false` if the triple was already present.
    pub fn insert(&mut self, t: Triple) -> bool {
        self.triples.insert(t)
    }

    pub fn remove(&mut self, t: &Triple) -> bool {
        self.triples.remove(t)
    }

    pub(crate) fn triples_mut(&mut self) -> &mut BTreeSet<Triple> {
        &mut self.triples
    }

    /// All triples matching every bound slot of `pattern`.
    pub fn matching(&self, pattern: &Pattern) -> BTreeSet<Triple> {
        match &pattern.subject {
            // Triples are ordered by subject first, so a bound subject is a range scan.
            Some(s) => {
                let lo = Triple {
                    subject: s.clone(),
                    predicate: Term::Iri(Arc::from("")),
                    object: Term::Iri(Arc::from("")),
                };
                self.triples
                    .range((Bound::Included(lo), Bound::Unbounded))
                    .take_while(|t| &t.subject == s)
                    .filter(|t| pattern.matches(t))
                    .cloned()
                    .collect()
            }
            None => self.triples.iter().filter(|t| pattern.matches(t)).cloned().collect(),
        }
    }
}

/// Mints `urn:skolem:<agent-uuid>:<counter>` IRIs for blank nodes.
///
/// Labels are scoped to one ingestion: the same label maps to the same IRI
/// until [`Skolemizer::reset_scope`] is called.
#[derive(Debug, Clone)]
pub struct Skolemizer {
    agent: Uuid,
    counter: u64,
    scope: BTreeMap<String, Term>,
}

impl Skolemizer {
    pub fn new(agent: Uuid) -> Self {
        Skolemizer {
            agent,
            counter: 0,
            scope: BTreeMap::new(),
        }
    }

    pub fn term(&mut self, blank_label: &str) -> Term {
        if let Some(t) = self.scope.get(blank_label) {
            return t.clone();
        }
        let t = Term::Iri(Arc::from(format!("urn:skolem:{}:{}", self.agent, self.counter)));
        self.counter += 1;
        self.scope.insert(blank_label.to_owned(), t.clone());
        t
    }

    pub fn reset_scope(&mut self) {
        self.scope.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str, p: &str, o: &str) -> Triple {
        Triple::iris(s, p, o).unwrap()
    }

    #[test]
    fn iri_validation() {
        assert!(Term::iri("").is_err());
        assert!(Term::iri("http://a b").is_err());
        assert!(Term::iri("http://a>b").is_err());
        assert!(Term::iri("urn:x").is_ok());
    }

    #[test]
    fn literal_subject_rejected() {
        let err = Triple::new(Term::literal("x"), Term::iri("urn:p").unwrap(), Term::literal("y"));
        assert!(matches!(err, Err(TermError::NonIriPosition("subject"))));
    }

    #[test]
    fn ordering_puts_iris_before_literals() {
        assert!(Term::iri("urn:z").unwrap() < Term::literal("a"));
        assert!(Term::literal("a") < Term::typed_literal("a", "urn:t").unwrap());
    }

    #[test]
    fn graph_insert_is_idempotent() {
        let mut g = Graph::new("urn:doc");
        assert!(g.insert(t("urn:a", "urn:b", "urn:c")));
        assert!(!g.insert(t("urn:a", "urn:b", "urn:c")));
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn match_bound_prefix() {
        let g = Graph::from_triples(
            "urn:doc",
            [t("urn:a", "urn:b", "urn:c"), t("urn:a", "urn:b", "urn:d"), t("urn:x", "urn:b", "urn:c")],
        );
        let p = Pattern {
            subject: Some(Term::iri("urn:a").unwrap()),
            predicate: Some(Term::iri("urn:b").unwrap()),
            object: None,
        };
        assert_eq!(g.matching(&p).len(), 2);
        assert_eq!(g.matching(&Pattern::any()), *g.triples());
        let by_object = Pattern {
            object: Some(Term::iri("urn:c").unwrap()),
            ..Pattern::any()
        };
        assert_eq!(g.matching(&by_object).len(), 2);
    }

    #[test]
    fn skolem_labels_are_stable_within_scope() {
        let agent = Uuid::from_u128(7);
        let mut sk = Skolemizer::new(agent);
        let a = sk.term("b0");
        assert_eq!(a, sk.term("b0"));
        let b = sk.term("b1");
        assert_ne!(a, b);
        sk.reset_scope();
        let c = sk.term("b0");
        assert_ne!(a, c);
        assert_eq!(c.as_iri().unwrap(), format!("urn:skolem:{agent}:2"));
    }
}
