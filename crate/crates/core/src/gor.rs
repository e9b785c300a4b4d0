//! The graph of revisions of one document.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Mutex;

use crate::delta::Delta;
use crate::error::GraphError;
use crate::revision::{Revision, RevisionHash};
use crate::term::Graph;

const CACHE_CAPACITY: usize = 32;

#[derive(Default)]
struct MaterializeCache {
    graphs: BTreeMap<RevisionHash, Graph>,
    order: VecDeque<RevisionHash>,
}

impl MaterializeCache {
    fn put(&mut self, h: RevisionHash, g: Graph) {
        if self.graphs.insert(h, g).is_none() {
            self.order.push_back(h);
            while self.order.len() > CACHE_CAPACITY {
                if let Some(old) = self.order.pop_front() {
                    self.graphs.remove(&old);
                }
            }
        }
    }

    fn forget(&mut self, h: &RevisionHash) {
        if self.graphs.remove(h).is_some() {
            self.order.retain(|x| x != h);
        }
    }
}

/// Result of [`GraphOfRevisions::insert`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Inserted {
    /// Revisions that became resolved, in resolution order. Empty when the
    /// revision was already known or is still waiting on an ancestor.
    pub resolved: Vec<RevisionHash>,
    /// Parent hashes of the inserted revision that are not known at all.
    pub missing: Vec<RevisionHash>,
}

/// Revisions of one document, keyed by hash.
///
/// Revisions whose parents are not all present wait in a pending buffer and
/// are promoted once their ancestry resolves; only resolved revisions take
/// part in heads, ancestry and materialization.
pub struct GraphOfRevisions {
    uri: String,
    root: RevisionHash,
    revisions: BTreeMap<RevisionHash, Revision>,
    children: BTreeMap<RevisionHash, BTreeSet<RevisionHash>>,
    heads: BTreeSet<RevisionHash>,
    pending: BTreeMap<RevisionHash, Revision>,
    waiting_on: BTreeMap<RevisionHash, BTreeSet<RevisionHash>>,
    local: BTreeSet<RevisionHash>,
    cache: Mutex<MaterializeCache>,
}

impl Clone for GraphOfRevisions {
    fn clone(&self) -> Self {
        GraphOfRevisions {
            uri: self.uri.clone(),
            root: self.root,
            revisions: self.revisions.clone(),
            children: self.children.clone(),
            heads: self.heads.clone(),
            pending: self.pending.clone(),
            waiting_on: self.waiting_on.clone(),
            local: self.local.clone(),
            cache: Mutex::new(MaterializeCache::default()),
        }
    }
}

impl std::fmt::Debug for GraphOfRevisions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GraphOfRevisions")
            .field("uri", &self.uri)
            .field("revisions", &self.revisions.len())
            .field("pending", &self.pending.len())
            .field("heads", &self.heads)
            .finish()
    }
}

impl GraphOfRevisions {
    pub fn new(uri: impl Into<String>) -> Self {
        let root = Revision::root();
        let root_hash = root.hash();
        let mut revisions = BTreeMap::new();
        revisions.insert(root_hash, root);
        GraphOfRevisions {
            uri: uri.into(),
            root: root_hash,
            revisions,
            children: BTreeMap::new(),
            heads: BTreeSet::from([root_hash]),
            pending: BTreeMap::new(),
            waiting_on: BTreeMap::new(),
            local: BTreeSet::new(),
            cache: Mutex::new(MaterializeCache::default()),
        }
    }

    pub fn uri(&self) -> &str {
        &self.uri
    }

    pub fn root(&self) -> RevisionHash {
        self.root
    }

    /// Number of resolved revisions, root included.
    pub fn len(&self) -> usize {
        self.revisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.revisions.len() == 1
    }

    pub fn get(&self, h: &RevisionHash) -> Option<&Revision> {
        self.revisions.get(h)
    }

    /// Looks up a revision whether resolved or pending.
    pub fn get_any(&self, h: &RevisionHash) -> Option<&Revision> {
        self.revisions.get(h).or_else(|| self.pending.get(h))
    }

    pub fn contains(&self, h: &RevisionHash) -> bool {
        self.revisions.contains_key(h)
    }

    /// True if the revision is resolved or waiting for its ancestors.
    pub fn knows(&self, h: &RevisionHash) -> bool {
        self.revisions.contains_key(h) || self.pending.contains_key(h)
    }

    /// Resolved revisions in hash order.
    pub fn revisions(&self) -> impl Iterator<Item = &Revision> {
        self.revisions.values()
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Parents referenced by pending revisions that are not known at all.
    pub fn wanted(&self) -> BTreeSet<RevisionHash> {
        self.waiting_on
            .keys()
            .filter(|h| !self.knows(h))
            .copied()
            .collect()
    }

    /// Inserts a revision received from elsewhere. Idempotent.
    pub fn insert(&mut self, rev: Revision) -> Result<Inserted, GraphError> {
        if !rev.verify() {
            return Err(GraphError::HashMismatch {
                claimed: rev.hash(),
                computed: crate::revision::revision_hash(rev.author(), rev.timestamp(), rev.parents()),
            });
        }
        let h = rev.hash();
        if self.knows(&h) {
            return Ok(Inserted::default());
        }
        let missing: Vec<RevisionHash> = rev.parent_hashes().filter(|p| !self.knows(p)).collect();
        let unresolved: Vec<RevisionHash> = rev.parent_hashes().filter(|p| !self.contains(p)).collect();
        if unresolved.is_empty() {
            let mut resolved = Vec::new();
            self.resolve(rev, &mut resolved);
            return Ok(Inserted { resolved, missing });
        }
        for p in unresolved {
            self.waiting_on.entry(p).or_default().insert(h);
        }
        self.pending.insert(h, rev);
        Ok(Inserted {
            resolved: Vec::new(),
            missing,
        })
    }

    /// Inserts a revision created by this agent and not yet published.
    pub fn insert_local(&mut self, rev: Revision) -> Result<Inserted, GraphError> {
        let h = rev.hash();
        let out = self.insert(rev)?;
        if self.knows(&h) {
            self.local.insert(h);
        }
        Ok(out)
    }

    fn resolve(&mut self, rev: Revision, resolved: &mut Vec<RevisionHash>) {
        let mut queue = VecDeque::from([rev]);
        while let Some(rev) = queue.pop_front() {
            let h = rev.hash();
            for p in rev.parent_hashes() {
                self.children.entry(p).or_default().insert(h);
                self.heads.remove(&p);
            }
            if !self.children.get(&h).is_some_and(|c| !c.is_empty()) {
                self.heads.insert(h);
            }
            self.revisions.insert(h, rev);
            resolved.push(h);
            if let Some(waiters) = self.waiting_on.remove(&h) {
                for w in waiters {
                    let ready = self
                        .pending
                        .get(&w)
                        .is_some_and(|r| r.parent_hashes().all(|p| self.revisions.contains_key(&p)));
                    if ready {
                        if let Some(r) = self.pending.remove(&w) {
                            queue.push_back(r);
                        }
                    }
                }
            }
        }
    }

    pub fn is_local(&self, h: &RevisionHash) -> bool {
        self.local.contains(h)
    }

    pub fn mark_published(&mut self, h: &RevisionHash) {
        self.local.remove(h);
    }

    pub fn local_revisions(&self) -> &BTreeSet<RevisionHash> {
        &self.local
    }

    /// Removes a resolved revision that has no children.
    pub fn remove(&mut self, h: &RevisionHash) -> Result<Revision, GraphError> {
        if *h == self.root || self.children.get(h).is_some_and(|c| !c.is_empty()) {
            return Err(GraphError::NotLinear(*h));
        }
        let rev = self.revisions.remove(h).ok_or(GraphError::UnknownRevision(*h))?;
        self.children.remove(h);
        self.heads.remove(h);
        self.local.remove(h);
        self.cache.lock().unwrap_or_else(|e| e.into_inner()).forget(h);
        for p in rev.parent_hashes() {
            if let Some(c) = self.children.get_mut(&p) {
                c.remove(h);
                if c.is_empty() {
                    self.children.remove(&p);
                    self.heads.insert(p);
                }
            }
        }
        Ok(rev)
    }

    pub fn heads(&self) -> &BTreeSet<RevisionHash> {
        &self.heads
    }

    /// Heads ordered by (timestamp, hash).
    pub fn sorted_heads(&self) -> Vec<RevisionHash> {
        let mut hs: Vec<RevisionHash> = self.heads.iter().copied().collect();
        hs.sort_by_key(|h| (self.revisions[h].timestamp(), *h));
        hs
    }

    pub fn children(&self, h: &RevisionHash) -> impl Iterator<Item = RevisionHash> + '_ {
        self.children.get(h).into_iter().flatten().copied()
    }

    fn require(&self, h: &RevisionHash) -> Result<&Revision, GraphError> {
        self.revisions.get(h).ok_or(GraphError::UnknownRevision(*h))
    }

    /// All strict ancestors of `h`.
    pub fn ancestors(&self, h: &RevisionHash) -> Result<BTreeSet<RevisionHash>, GraphError> {
        self.require(h)?;
        let mut seen = BTreeSet::new();
        let mut stack: Vec<RevisionHash> = self.revisions[h].parent_hashes().collect();
        while let Some(x) = stack.pop() {
            if seen.insert(x) {
                stack.extend(self.require(&x)?.parent_hashes());
            }
        }
        Ok(seen)
    }

    /// True if `a` is `b` or one of its ancestors.
    pub fn is_ancestor(&self, a: &RevisionHash, b: &RevisionHash) -> Result<bool, GraphError> {
        self.require(a)?;
        self.require(b)?;
        if a == b || *a == self.root {
            return Ok(true);
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![*b];
        while let Some(x) = stack.pop() {
            for p in self.require(&x)?.parent_hashes() {
                if p == *a {
                    return Ok(true);
                }
                if seen.insert(p) {
                    stack.push(p);
                }
            }
        }
        Ok(false)
    }

    /// A lowest common ancestor of `a` and `b`.
    ///
    /// A bidirectional breadth-first search over parent edges finds the
    /// common ancestor minimizing the summed distance (ties: smaller hash).
    /// If that node still has a child that is a common ancestor, the search
    /// descends to it, so the result is never an ancestor of another common
    /// ancestor.
    pub fn common_ancestor(&self, a: &RevisionHash, b: &RevisionHash) -> Result<RevisionHash, GraphError> {
        self.require(a)?;
        self.require(b)?;
        if a == b {
            return Ok(*a);
        }
        let mut dist = [BTreeMap::from([(*a, 0usize)]), BTreeMap::from([(*b, 0usize)])];
        let mut frontier = [vec![*a], vec![*b]];
        let mut level = [0usize, 0usize];
        let mut best: Option<(usize, RevisionHash)> = None;
        if dist[1].contains_key(a) {
            best = Some((0, *a));
        }
        loop {
            let bound = level[0].min(level[1]);
            if best.is_some_and(|(s, _)| s <= bound) {
                break;
            }
            let side = match (frontier[0].is_empty(), frontier[1].is_empty()) {
                (true, true) => break,
                (false, true) => 0,
                (true, false) => 1,
                (false, false) => usize::from(frontier[1].len() < frontier[0].len()),
            };
            let mut next = Vec::new();
            for x in std::mem::take(&mut frontier[side]) {
                for p in self.require(&x)?.parent_hashes() {
                    if dist[side].contains_key(&p) {
                        continue;
                    }
                    let d = level[side] + 1;
                    dist[side].insert(p, d);
                    next.push(p);
                    if let Some(&other) = dist[1 - side].get(&p) {
                        let cand = (d + other, p);
                        if best.map_or(true, |b| cand < b) {
                            best = Some(cand);
                        }
                    }
                }
            }
            next.sort();
            frontier[side] = next;
            level[side] += 1;
        }
        let mut ca = match best {
            Some((_, h)) => h,
            None => self.root,
        };
        'descend: loop {
            let kids: Vec<RevisionHash> = self.children(&ca).collect();
            for c in kids {
                if self.is_ancestor(&c, a)? && self.is_ancestor(&c, b)? {
                    ca = c;
                    continue 'descend;
                }
            }
            return Ok(ca);
        }
    }

    /// `heads` and all their ancestors.
    pub fn history(&self, heads: &[RevisionHash]) -> Result<BTreeSet<RevisionHash>, GraphError> {
        let mut seen = BTreeSet::new();
        let mut stack = heads.to_vec();
        while let Some(x) = stack.pop() {
            let rev = self.require(&x)?;
            if seen.insert(x) {
                stack.extend(rev.parent_hashes());
            }
        }
        Ok(seen)
    }

    /// The common ancestors of `a` and `b` that are not ancestors of another
    /// common ancestor. More than one means criss-cross history.
    pub fn maximal_common_ancestors(&self, a: &[RevisionHash], b: &[RevisionHash]) -> Result<BTreeSet<RevisionHash>, GraphError> {
        let ha = self.history(a)?;
        let hb = self.history(b)?;
        let common: BTreeSet<RevisionHash> = ha.intersection(&hb).copied().collect();
        // `common` is closed under ancestry, so a node is maximal exactly
        // when none of its children is common.
        Ok(common.iter().filter(|x| !self.children(x).any(|c| common.contains(&c))).copied().collect())
    }

    /// Revisions on a shortest parent path from `from` (exclusive) down to
    /// `to` (inclusive), in forward order. `from` must be an ancestor of `to`.
    pub fn path(&self, from: &RevisionHash, to: &RevisionHash) -> Result<Vec<RevisionHash>, GraphError> {
        self.require(from)?;
        self.require(to)?;
        let mut prev: BTreeMap<RevisionHash, RevisionHash> = BTreeMap::new();
        let mut queue = VecDeque::from([*to]);
        let mut found = from == to;
        while let Some(x) = queue.pop_front() {
            if found {
                break;
            }
            for p in self.require(&x)?.parent_hashes() {
                if p == *to || prev.contains_key(&p) {
                    continue;
                }
                prev.insert(p, x);
                if p == *from {
                    found = true;
                    break;
                }
                queue.push_back(p);
            }
        }
        if !found {
            return Err(GraphError::UnknownRevision(*from));
        }
        let mut out = Vec::new();
        let mut cur = *from;
        while cur != *to {
            cur = prev[&cur];
            out.push(cur);
        }
        Ok(out)
    }

    /// The delta stored on the edge `parent -> child`.
    pub fn edge_delta(&self, parent: &RevisionHash, child: &RevisionHash) -> Result<&Delta, GraphError> {
        self.require(child)?
            .parents()
            .iter()
            .find(|l| l.parent == *parent)
            .map(|l| &l.delta)
            .ok_or(GraphError::UnknownRevision(*parent))
    }

    /// Deltas along [`GraphOfRevisions::path`].
    pub fn path_deltas(&self, from: &RevisionHash, to: &RevisionHash) -> Result<Vec<&Delta>, GraphError> {
        let mut prev = *from;
        let mut out = Vec::new();
        for h in self.path(from, to)? {
            out.push(self.edge_delta(&prev, &h)?);
            prev = h;
        }
        Ok(out)
    }

    /// Replays deltas from the root along first parents.
    pub fn materialize(&self, h: &RevisionHash) -> Result<Graph, GraphError> {
        if !self.revisions.contains_key(h) {
            return Err(if self.pending.contains_key(h) {
                GraphError::UnresolvedAncestor(*h)
            } else {
                GraphError::UnknownRevision(*h)
            });
        }
        let mut chain = Vec::new();
        let mut cur = *h;
        let mut graph = {
            let cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
            loop {
                if let Some(g) = cache.graphs.get(&cur) {
                    break g.clone();
                }
                let rev = &self.revisions[&cur];
                match rev.parents().first() {
                    None => break Graph::new(self.uri.clone()),
                    Some(link) => {
                        chain.push(&link.delta);
                        cur = link.parent;
                    }
                }
            }
        };
        for d in chain.iter().rev() {
            d.apply_in_place(&mut graph);
        }
        self.cache
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .put(*h, graph.clone());
        Ok(graph)
    }

    /// Checks that every parent edge of `h` yields the same graph.
    pub fn verify_paths(&self, h: &RevisionHash) -> Result<(), GraphError> {
        let rev = self.require(h)?;
        let target = self.materialize(h)?;
        for link in rev.parents() {
            let g = link.delta.apply(&self.materialize(&link.parent)?);
            if g.triples() != target.triples() {
                return Err(GraphError::PathMismatch(*h));
            }
        }
        Ok(())
    }

    /// Resolved revisions with every parent listed before its children.
    pub fn topological(&self) -> Vec<&Revision> {
        let mut indegree: BTreeMap<RevisionHash, usize> = self
            .revisions
            .iter()
            .map(|(h, r)| (*h, r.parents().len()))
            .collect();
        let mut ready: BTreeSet<RevisionHash> = indegree.iter().filter(|(_, d)| **d == 0).map(|(h, _)| *h).collect();
        let mut out = Vec::with_capacity(self.revisions.len());
        while let Some(h) = ready.pop_first() {
            out.push(&self.revisions[&h]);
            for c in self.children(&h) {
                if let Some(d) = indegree.get_mut(&c) {
                    *d -= 1;
                    if *d == 0 {
                        ready.insert(c);
                    }
                }
            }
        }
        out
    }
}
