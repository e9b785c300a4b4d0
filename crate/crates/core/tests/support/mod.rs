#![allow(dead_code)]

use std::collections::BTreeSet;

use graphsync::{Delta, Graph, GraphOfRevisions, MergeOutcome, ParentLink, Revision, RevisionHash, Term, Triple};
use rand::seq::SliceRandom;
use rand::Rng;
use uuid::Uuid;

pub const DOC: &str = "urn:test:doc";

pub fn t(i: usize) -> Triple {
    Triple::iris(&format!("urn:ex:s{i}"), "urn:ex:p", &format!("urn:ex:o{i}")).unwrap()
}

pub fn set(ids: &[usize]) -> BTreeSet<Triple> {
    ids.iter().map(|&i| t(i)).collect()
}

pub fn graph(ids: &[usize]) -> Graph {
    Graph::from_triples(DOC, set(ids))
}

pub fn delta(ins: &[usize], rem: &[usize]) -> Delta {
    Delta::new(set(ins), set(rem)).unwrap()
}

pub fn author(n: u128) -> Uuid {
    Uuid::from_u128(0xa000 + n)
}

/// Triples drawn from a small universe with IRI and literal objects.
pub fn universe_triple(i: usize) -> Triple {
    let s = Term::iri(format!("urn:u:s{}", i % 7)).unwrap();
    let p = Term::iri(format!("urn:u:p{}", (i / 7) % 3)).unwrap();
    let o = match i % 4 {
        0 => Term::literal(format!("v\"{i}\\\n")),
        1 => Term::typed_literal(format!("{i}"), "http://www.w3.org/2001/XMLSchema#integer").unwrap(),
        _ => Term::iri(format!("urn:u:o{i}")).unwrap(),
    };
    Triple::new(s, p, o).unwrap()
}

pub fn random_graph(rng: &mut impl Rng, universe: usize) -> Graph {
    Graph::from_triples(DOC, (0..universe).filter(|_| rng.gen_bool(0.5)).map(t))
}

/// Set-formula merge oracle over materialized graphs.
pub fn formula_merge(g_l: &Graph, g_i: &Graph, g_j: &Graph) -> BTreeSet<Triple> {
    let l = g_l.triples();
    let removed: BTreeSet<&Triple> = l.difference(g_i.triples()).chain(l.difference(g_j.triples())).collect();
    let mut out: BTreeSet<Triple> = l.iter().filter(|x| !removed.contains(x)).cloned().collect();
    out.extend(g_i.triples().difference(l).cloned());
    out.extend(g_j.triples().difference(l).cloned());
    out
}

/// Ancestor oracle: every revision reachable through parent links, found
/// by linear scans of the revision list.
pub fn closure(revs: &[Revision], h: &RevisionHash) -> BTreeSet<RevisionHash> {
    let mut out = BTreeSet::new();
    let mut stack = vec![*h];
    while let Some(x) = stack.pop() {
        if let Some(r) = revs.iter().find(|r| r.hash() == x) {
            for p in r.parent_hashes() {
                if out.insert(p) {
                    stack.push(p);
                }
            }
        }
    }
    out
}

/// A random history over `universe` triples: edits on random revisions
/// plus merges of random unrelated pairs, so criss-cross shapes appear.
/// Returns the graph of revisions and the revisions in creation order.
pub fn random_dag(rng: &mut impl Rng, steps: usize, universe: usize) -> (GraphOfRevisions, Vec<Revision>) {
    let mut gor = GraphOfRevisions::new(DOC);
    let mut made = Vec::new();
    let mut ts = 1;
    for _ in 0..steps {
        let known: Vec<RevisionHash> = gor.revisions().map(|r| r.hash()).collect();
        if known.len() > 2 && rng.gen_bool(0.35) {
            let a = *known.choose(rng).unwrap();
            let b = *known.choose(rng).unwrap();
            if let Ok(MergeOutcome::Merged { revision, .. }) = graphsync::merge_revision(&gor, &a, &b, author(rng.gen_range(0..4)), ts, None) {
                gor.insert(revision.clone()).unwrap();
                made.push(revision);
                ts += 1;
                continue;
            }
        }
        let parent = *known.choose(rng).unwrap();
        let before = gor.materialize(&parent).unwrap();
        let target = random_graph(rng, universe);
        let d = Delta::compute(&before, &target);
        let rev = Revision::new(author(rng.gen_range(0..4)), ts, vec![ParentLink::new(parent, d)], None);
        ts += 1;
        gor.insert(rev.clone()).unwrap();
        made.push(rev);
    }
    (gor, made)
}
