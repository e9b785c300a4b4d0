//! Text encoding of deltas as a restricted update language:
//! `PREFIX` declarations, `INSERT DATA { ... }` and `DELETE DATA { ... }`.
//!
//! The serializer always writes full IRIs, sorted by the canonical term
//! order, so equal deltas produce identical bytes. The parser accepts
//! prefixed names and rejects everything else (`WHERE`, variables, blank
//! nodes, language tags, property lists).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::delta::Delta;
use crate::error::MalformedDelta;
use crate::term::{Term, Triple};

const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
const XSD_INTEGER: &str = "http://www.w3.org/2001/XMLSchema#integer";

fn write_block(out: &mut String, keyword: &str, triples: &BTreeSet<Triple>) {
    if triples.is_empty() {
        return;
    }
    out.push_str(keyword);
    out.push_str(" {\n");
    for t in triples {
        let _ = writeln!(out, " {t}");
    }
    out.push_str("}\n");
}

/// Serializes a delta; the empty delta serializes to the empty string.
pub fn serialize(d: &Delta) -> String {
    let mut out = String::new();
    write_block(&mut out, "INSERT DATA", d.inserted());
    write_block(&mut out, "DELETE DATA", d.removed());
    out
}

/// Deterministic bytes fed to the revision hash.
pub fn canonical_bytes(d: &Delta) -> Vec<u8> {
    serialize(d).into_bytes()
}

pub fn parse(text: &str) -> Result<Delta, MalformedDelta> {
    Parser::new(text).run()
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    PName(String, String),
    Iri(String),
    Literal(String),
    Integer(String),
    DatatypeMark,
    Dot,
    LBrace,
    RBrace,
    Semicolon,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    prefixes: BTreeMap<String, String>,
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | '%')
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            src,
            pos: 0,
            prefixes: BTreeMap::new(),
        }
    }

    fn err(&self, reason: impl Into<String>) -> MalformedDelta {
        MalformedDelta {
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        loop {
            let rest = self.rest();
            let trimmed = rest.trim_start();
            self.pos += rest.len() - trimmed.len();
            if trimmed.starts_with('#') {
                let end = trimmed.find('\n').map_or(trimmed.len(), |i| i + 1);
                self.pos += end;
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Result<Option<Tok>, MalformedDelta> {
        let save = self.pos;
        let t = self.next_tok();
        self.pos = save;
        t
    }

    fn next_tok(&mut self) -> Result<Option<Tok>, MalformedDelta> {
        self.skip_ws();
        let rest = self.rest();
        let Some(c) = rest.chars().next() else {
            return Ok(None);
        };
        let tok = match c {
            '{' => {
                self.pos += 1;
                Tok::LBrace
            }
            '}' => {
                self.pos += 1;
                Tok::RBrace
            }
            '.' => {
                self.pos += 1;
                Tok::Dot
            }
            ';' => {
                self.pos += 1;
                Tok::Semicolon
            }
            '^' => {
                if !rest.starts_with("^^") {
                    return Err(self.err("expected ^^"));
                }
                self.pos += 2;
                Tok::DatatypeMark
            }
            '<' => {
                let end = rest.find('>').ok_or_else(|| self.err("unterminated IRI"))?;
                let iri = &rest[1..end];
                Term::iri(iri).map_err(|e| self.err(e.to_string()))?;
                self.pos += end + 1;
                Tok::Iri(iri.to_owned())
            }
            '"' => self.lex_literal()?,
            '_' if rest.starts_with("_:") => return Err(self.err("blank nodes are not allowed")),
            '?' | '$' => return Err(self.err("variables are not allowed")),
            '@' => return Err(self.err("language tags are not supported")),
            '[' | '(' | ',' => return Err(self.err(format!("unsupported construct {c:?}"))),
            c if c.is_ascii_digit() || ((c == '-' || c == '+') && rest[1..].starts_with(|d: char| d.is_ascii_digit())) => {
                let len = 1 + rest[1..].find(|d: char| !d.is_ascii_digit()).unwrap_or(rest.len() - 1);
                let digits = &rest[..len];
                self.pos += len;
                if self.rest().starts_with('.') && self.rest()[1..].starts_with(|d: char| d.is_ascii_digit()) {
                    return Err(self.err("decimal literals are not supported"));
                }
                Tok::Integer(digits.to_owned())
            }
            c if c.is_ascii_alphabetic() || c == ':' => {
                let len = rest.find(|d: char| !is_name_char(d)).unwrap_or(rest.len());
                let word = &rest[..len];
                let after = &rest[len..];
                if let Some(after_colon) = after.strip_prefix(':') {
                    let mut local_len = after_colon.find(|d: char| !is_name_char(d)).unwrap_or(after_colon.len());
                    // a trailing '.' terminates the triple rather than the name
                    while local_len > 0 && after_colon[..local_len].ends_with('.') {
                        local_len -= 1;
                    }
                    let local = &after_colon[..local_len];
                    self.pos += len + 1 + local_len;
                    Tok::PName(word.to_owned(), local.to_owned())
                } else {
                    let mut wlen = len;
                    while wlen > 0 && word[..wlen].ends_with('.') {
                        wlen -= 1;
                    }
                    self.pos += wlen;
                    Tok::Word(word[..wlen].to_owned())
                }
            }
            other => return Err(self.err(format!("unexpected character {other:?}"))),
        };
        Ok(Some(tok))
    }

    fn lex_literal(&mut self) -> Result<Tok, MalformedDelta> {
        let start = self.pos;
        self.pos += 1;
        let mut value = String::new();
        let mut chars = self.src[self.pos..].char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                '"' => {
                    self.pos += i + 1;
                    return Ok(Tok::Literal(value));
                }
                '\\' => {
                    let (_, e) = chars.next().ok_or_else(|| self.err("dangling escape"))?;
                    match e {
                        '"' => value.push('"'),
                        '\\' => value.push('\\'),
                        'n' => value.push('\n'),
                        'r' => value.push('\r'),
                        't' => value.push('\t'),
                        'u' => {
                            let hex: String = (0..4).filter_map(|_| chars.next().map(|(_, h)| h)).collect();
                            let cp = u32::from_str_radix(&hex, 16).map_err(|_| self.err("bad \\u escape"))?;
                            value.push(char::from_u32(cp).ok_or_else(|| self.err("bad \\u code point"))?);
                        }
                        other => return Err(self.err(format!("unknown escape \\{other}"))),
                    }
                }
                '\n' => return Err(self.err("newline in literal")),
                c => value.push(c),
            }
        }
        self.pos = start;
        Err(self.err("unterminated literal"))
    }

    fn expand(&self, prefix: &str, local: &str) -> Result<String, MalformedDelta> {
        let ns = self
            .prefixes
            .get(prefix)
            .ok_or_else(|| self.err(format!("undeclared prefix {prefix:?}")))?;
        Ok(format!("{ns}{local}"))
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), MalformedDelta> {
        match self.next_tok()? {
            Some(t) if t == want => Ok(()),
            Some(t) => Err(self.err(format!("expected {what}, found {t:?}"))),
            None => Err(self.err(format!("expected {what}, found end of input"))),
        }
    }

    fn expect_word(&mut self, word: &str) -> Result<(), MalformedDelta> {
        match self.next_tok()? {
            Some(Tok::Word(w)) if w.eq_ignore_ascii_case(word) => Ok(()),
            other => Err(self.err(format!("expected {word}, found {other:?}"))),
        }
    }

    fn term(&mut self, position: &'static str) -> Result<Term, MalformedDelta> {
        let tok = self
            .next_tok()?
            .ok_or_else(|| self.err(format!("expected {position}, found end of input")))?;
        let term = match tok {
            Tok::Iri(iri) => Term::iri(iri).map_err(|e| self.err(e.to_string()))?,
            Tok::PName(p, l) => Term::iri(self.expand(&p, &l)?).map_err(|e| self.err(e.to_string()))?,
            Tok::Word(w) if w == "a" && position == "predicate" => Term::iri(RDF_TYPE).expect("static IRI"),
            Tok::Literal(value) if position == "object" => {
                if self.peek()? == Some(Tok::DatatypeMark) {
                    self.next_tok()?;
                    let dt = match self.next_tok()? {
                        Some(Tok::Iri(iri)) => iri,
                        Some(Tok::PName(p, l)) => self.expand(&p, &l)?,
                        other => return Err(self.err(format!("expected datatype IRI, found {other:?}"))),
                    };
                    Term::typed_literal(value, dt).map_err(|e| self.err(e.to_string()))?
                } else {
                    Term::literal(value)
                }
            }
            Tok::Integer(digits) if position == "object" => {
                Term::typed_literal(digits, XSD_INTEGER).expect("static IRI")
            }
            other => return Err(self.err(format!("unexpected {other:?} as {position}"))),
        };
        Ok(term)
    }

    fn block(&mut self, into: &mut BTreeSet<Triple>) -> Result<(), MalformedDelta> {
        self.expect(Tok::LBrace, "'{'")?;
        loop {
            if self.peek()? == Some(Tok::RBrace) {
                self.next_tok()?;
                return Ok(());
            }
            let s = self.term("subject")?;
            let p = self.term("predicate")?;
            let o = self.term("object")?;
            into.insert(Triple::new(s, p, o).map_err(|e| self.err(e.to_string()))?);
            match self.next_tok()? {
                Some(Tok::Dot) => {}
                Some(Tok::RBrace) => return Ok(()),
                other => return Err(self.err(format!("expected '.' or '}}', found {other:?}"))),
            }
        }
    }

    fn run(mut self) -> Result<Delta, MalformedDelta> {
        let mut inserted = BTreeSet::new();
        let mut removed = BTreeSet::new();
        while let Some(tok) = self.next_tok()? {
            match tok {
                Tok::Semicolon => {}
                Tok::Word(w) if w.eq_ignore_ascii_case("PREFIX") => {
                    let ns = match self.next_tok()? {
                        Some(Tok::PName(p, l)) if l.is_empty() => p,
                        other => return Err(self.err(format!("expected prefix name, found {other:?}"))),
                    };
                    let iri = match self.next_tok()? {
                        Some(Tok::Iri(iri)) => iri,
                        other => return Err(self.err(format!("expected IRI, found {other:?}"))),
                    };
                    self.prefixes.insert(ns, iri);
                }
                Tok::Word(w) if w.eq_ignore_ascii_case("INSERT") => {
                    self.expect_word("DATA")?;
                    self.block(&mut inserted)?;
                }
                Tok::Word(w) if w.eq_ignore_ascii_case("DELETE") => {
                    self.expect_word("DATA")?;
                    self.block(&mut removed)?;
                }
                other => return Err(self.err(format!("unsupported construct {other:?}"))),
            }
        }
        if let Some(t) = inserted.intersection(&removed).next() {
            return Err(self.err(format!("triple both inserted and deleted: {t}")));
        }
        Ok(Delta::from_parts_unchecked(inserted, removed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "PREFIX ex: <http://example.org/>\n\nINSERT DATA {\n ex:a ex:b ex:c\n}\nDELETE DATA {\n ex:d ex:e ex:f\n}\n";

    fn ex(s: &str, p: &str, o: &str) -> Triple {
        let e = |x: &str| format!("http://example.org/{x}");
        Triple::iris(&e(s), &e(p), &e(o)).unwrap()
    }

    fn sample_delta() -> Delta {
        Delta::new([ex("a", "b", "c")], [ex("d", "e", "f")]).unwrap()
    }

    #[test]
    fn parses_reference_sample() {
        assert_eq!(parse(SAMPLE).unwrap(), sample_delta());
    }

    #[test]
    fn serializes_reference_sample_with_full_iris() {
        let expected = "INSERT DATA {\n <http://example.org/a> <http://example.org/b> <http://example.org/c> .\n}\n\
                        DELETE DATA {\n <http://example.org/d> <http://example.org/e> <http://example.org/f> .\n}\n";
        assert_eq!(serialize(&sample_delta()), expected);
        assert_eq!(parse(expected).unwrap(), sample_delta());
    }

    #[test]
    fn empty_forms() {
        assert_eq!(serialize(&Delta::empty()), "");
        assert!(canonical_bytes(&Delta::empty()).is_empty());
        assert_eq!(parse("INSERT DATA {}").unwrap(), Delta::empty());
        assert_eq!(parse("").unwrap(), Delta::empty());
    }

    #[test]
    fn rejects_outside_subset() {
        let cases = [
            "DELETE { ?s ?p ?o } WHERE { ?s ?p ?o }",
            "INSERT DATA { <urn:a> <urn:b> <urn:c> } WHERE { }",
            "INSERT { <urn:a> <urn:b> <urn:c> }",
            "INSERT DATA { _:b0 <urn:b> <urn:c> }",
            "INSERT DATA { <urn:a> <urn:b> \"x\"@en }",
            "INSERT DATA { <urn:a> <urn:b> <urn:c> ; <urn:d> <urn:e> }",
            "INSERT DATA { ex:a <urn:b> <urn:c> }",
            "INSERT DATA { \"s\" <urn:b> <urn:c> }",
            "INSERT DATA { <urn:a> <urn:b> <urn:c> } DELETE DATA { <urn:a> <urn:b> <urn:c> }",
            "SELECT * WHERE { ?s ?p ?o }",
            "INSERT DATA { <urn:a> <urn:b> <urn:c>",
        ];
        for c in cases {
            assert!(parse(c).is_err(), "accepted: {c}");
        }
    }

    #[test]
    fn literals_and_escapes_round_trip() {
        let lit = Term::typed_literal("POLYGON((0 0, 1 0))", "http://www.opengis.net/ont/geosparql#wktLiteral").unwrap();
        let tricky = Term::literal("quote \" backslash \\ newline \n tab \t");
        let s = Term::iri("urn:s").unwrap();
        let p = Term::iri("urn:p").unwrap();
        let d = Delta::new(
            [Triple::new(s.clone(), p.clone(), lit).unwrap(), Triple::new(s.clone(), p.clone(), tricky).unwrap()],
            [],
        )
        .unwrap();
        assert_eq!(parse(&serialize(&d)).unwrap(), d);
    }

    #[test]
    fn accepts_comments_integers_and_rdf_type() {
        let d = parse("# c\nPREFIX x: <urn:x:>\nINSERT DATA { x:s a x:T . x:s x:n 42 . } ; DELETE DATA { x:s x:p \"v\"^^x:dt }").unwrap();
        assert_eq!(d.inserted().len(), 2);
        assert_eq!(d.removed().len(), 1);
        let removed = d.removed().iter().next().unwrap();
        assert_eq!(
            removed.object(),
            &Term::typed_literal("v", "urn:x:dt").unwrap()
        );
    }
}
