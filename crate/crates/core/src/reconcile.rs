//! Merge, rebase and squash over a graph of revisions.

use std::collections::BTreeSet;

use uuid::Uuid;

use crate::delta::Delta;
use crate::error::GraphError;
use crate::gor::GraphOfRevisions;
use crate::revision::{ParentLink, Revision, RevisionHash, Signer};
use crate::term::{Graph, Triple};

/// Counters describing the work done by one merge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MergeStats {
    /// Edge deltas folded while walking both branches.
    pub deltas_combined: usize,
    /// Triples mentioned by the folded deltas.
    pub triples_touched: usize,
    /// Maximal common ancestors of the two heads.
    pub bases: usize,
}

#[derive(Debug, Clone)]
pub enum MergeOutcome {
    /// One head already contains the other; nothing to create.
    FastForward(RevisionHash),
    Merged {
        revision: Revision,
        graph: Graph,
        stats: MergeStats,
    },
}

impl MergeOutcome {
    pub fn head(&self) -> RevisionHash {
        match self {
            MergeOutcome::FastForward(h) => *h,
            MergeOutcome::Merged { revision, .. } => revision.hash(),
        }
    }
}

fn branch_delta(gor: &GraphOfRevisions, l: &RevisionHash, tip: &RevisionHash, base: &Graph, stats: &mut MergeStats) -> Result<Delta, GraphError> {
    let deltas = gor.path_deltas(l, tip)?;
    if deltas.is_empty() {
        return Ok(Delta::empty());
    }
    stats.deltas_combined += deltas.len();
    stats.triples_touched += deltas.iter().map(|d| d.size()).sum::<usize>();
    // Folding along a path can leave removals of triples absent from the
    // ancestor (removed then re-added); projecting yields the exact delta.
    Ok(Delta::combine_many(deltas)?.project_onto(base))
}

/// `G_b` with both branches' changes applied; the branches are given as
/// graphs and diffed against `base`.
fn three_way(base: &Graph, g_i: &Graph, g_j: &Graph) -> Graph {
    let mut out = base.clone();
    for t in base.triples() {
        if !g_i.contains(t) || !g_j.contains(t) {
            out.remove(t);
        }
    }
    for t in g_i.triples().iter().chain(g_j.triples()) {
        if !base.contains(t) {
            out.insert(t.clone());
        }
    }
    out
}

/// The graph of a merge of all `heads`, folded in order. Each step merges
/// against the maximal common ancestors of what was folded so far,
/// recursively, so removals on either side of a criss-cross survive.
fn virtual_base(gor: &GraphOfRevisions, heads: &BTreeSet<RevisionHash>) -> Result<Graph, GraphError> {
    let mut it = heads.iter();
    let first = it.next().ok_or(GraphError::UnknownRevision(gor.root()))?;
    let mut folded = vec![*first];
    let mut graph = gor.materialize(first)?;
    for h in it {
        let common = gor.maximal_common_ancestors(&folded, &[*h])?;
        let base = match common.len() {
            1 => gor.materialize(common.iter().next().expect("one"))?,
            _ => virtual_base(gor, &common)?,
        };
        graph = three_way(&base, &graph, &gor.materialize(h)?);
        folded.push(*h);
    }
    Ok(graph)
}

/// Builds the merge revision of heads `h_i` and `h_j`.
///
/// With `l` the common ancestor, the merged graph is
/// `(G_l \ (R_li ∪ R_lj)) ∪ I_li ∪ I_lj`; the edge from `h_i` carries
/// `(I_lj \ I_li, R_lj \ R_li)` and symmetrically for `h_j`. When the heads
/// have several maximal common ancestors, `G_l` is a virtual base merging
/// them. The revision is returned but not inserted.
pub fn merge_revision(
    gor: &GraphOfRevisions,
    h_i: &RevisionHash,
    h_j: &RevisionHash,
    author: Uuid,
    timestamp: i64,
    signer: Option<&dyn Signer>,
) -> Result<MergeOutcome, GraphError> {
    if gor.is_ancestor(h_i, h_j)? {
        return Ok(MergeOutcome::FastForward(*h_j));
    }
    if gor.is_ancestor(h_j, h_i)? {
        return Ok(MergeOutcome::FastForward(*h_i));
    }
    let bases = gor.maximal_common_ancestors(&[*h_i], &[*h_j])?;
    let mut stats = MergeStats {
        bases: bases.len(),
        ..MergeStats::default()
    };
    let (g_l, d_li, d_lj) = if let [l] = bases.iter().collect::<Vec<_>>()[..] {
        let g_l = gor.materialize(l)?;
        let d_li = branch_delta(gor, l, h_i, &g_l, &mut stats)?;
        let d_lj = branch_delta(gor, l, h_j, &g_l, &mut stats)?;
        (g_l, d_li, d_lj)
    } else {
        // Criss-cross history: diff both heads against a virtual base that
        // merges all maximal common ancestors.
        let base = virtual_base(gor, &bases)?;
        let d_li = Delta::compute(&base, &gor.materialize(h_i)?);
        let d_lj = Delta::compute(&base, &gor.materialize(h_j)?);
        stats.triples_touched += d_li.size() + d_lj.size();
        (base, d_li, d_lj)
    };

    let diff = |a: &BTreeSet<Triple>, b: &BTreeSet<Triple>| -> BTreeSet<Triple> { a.difference(b).cloned().collect() };
    let i_im = diff(d_lj.inserted(), d_li.inserted());
    let r_im = diff(d_lj.removed(), d_li.removed());
    let i_jm = diff(d_li.inserted(), d_lj.inserted());
    let r_jm = diff(d_li.removed(), d_lj.removed());

    // Branch deltas are exact, so R_l* ⊆ G_l and I_l* ∩ G_l = ∅: both edge
    // deltas are disjoint and each parent path reaches the same graph.
    let mut graph = g_l;
    d_li.apply_in_place(&mut graph);
    for t in d_lj.removed() {
        graph.remove(t);
    }
    for t in d_lj.inserted() {
        graph.insert(t.clone());
    }
    let revision = Revision::new(
        author,
        timestamp,
        vec![
            ParentLink::new(*h_i, Delta::from_parts_unchecked(i_im, r_im)),
            ParentLink::new(*h_j, Delta::from_parts_unchecked(i_jm, r_jm)),
        ],
        signer,
    );
    Ok(MergeOutcome::Merged { revision, graph, stats })
}

/// Which delta a rebased copy carries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum RebaseDeltaMode {
    /// The source revision's delta, unchanged.
    #[default]
    Copied,
    /// The source delta restricted to its effect on the new parent.
    Recomputed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RebaseOptions {
    pub mode: RebaseDeltaMode,
    /// Collapse the branch into one revision before moving it.
    pub squash: bool,
}

/// The linear, local branch from the common ancestor of `tip` and `dest`
/// down to `tip`, in forward order.
pub fn local_branch(gor: &GraphOfRevisions, tip: &RevisionHash, dest: &RevisionHash) -> Result<(RevisionHash, Vec<RevisionHash>), GraphError> {
    let l = gor.common_ancestor(tip, dest)?;
    let mut branch = Vec::new();
    let mut cur = *tip;
    while cur != l {
        let rev = gor.get(&cur).ok_or(GraphError::UnknownRevision(cur))?;
        if rev.parents().len() != 1 {
            return Err(GraphError::NotLinear(cur));
        }
        if !gor.is_local(&cur) {
            return Err(GraphError::NotLocal(cur));
        }
        if cur != *tip && gor.children(&cur).count() > 1 {
            return Err(GraphError::NotLinear(cur));
        }
        branch.push(cur);
        cur = rev.parents()[0].parent;
    }
    branch.reverse();
    Ok((l, branch))
}

/// Moves the local branch ending at `tip` on top of `dest`.
///
/// Copies keep author and delta, are stamped `timestamp`, inserted as local
/// revisions, and the originals are removed. Returns the copies in order;
/// empty when `tip` already descends from `dest` or is one of its ancestors.
pub fn rebase_revisions(
    gor: &mut GraphOfRevisions,
    tip: &RevisionHash,
    dest: &RevisionHash,
    timestamp: i64,
    opts: RebaseOptions,
    signer: Option<&dyn Signer>,
) -> Result<Vec<Revision>, GraphError> {
    let (l, branch) = local_branch(gor, tip, dest)?;
    if branch.is_empty() || l == *dest {
        return Ok(Vec::new());
    }
    let originals: Vec<Revision> = branch.iter().map(|h| gor.get(h).cloned().ok_or(GraphError::UnknownRevision(*h))).collect::<Result<_, _>>()?;
    let sources: Vec<(Uuid, Delta)> = if opts.squash {
        let author = originals.last().and_then(Revision::author).unwrap_or_else(Uuid::nil);
        let combined = Delta::combine_many(originals.iter().map(|r| &r.parents()[0].delta))?;
        vec![(author, combined)]
    } else {
        originals.iter().map(|r| (r.author().unwrap_or_else(Uuid::nil), r.parents()[0].delta.clone())).collect()
    };

    let mut graph = match opts.mode {
        RebaseDeltaMode::Copied => None,
        RebaseDeltaMode::Recomputed => Some(gor.materialize(dest)?),
    };
    let mut parent = *dest;
    let mut copies = Vec::with_capacity(sources.len());
    for (author, delta) in sources {
        let delta = match graph.as_mut() {
            Some(g) => {
                let exact = delta.project_onto(g);
                exact.apply_in_place(g);
                exact
            }
            None => delta,
        };
        let rev = Revision::new(author, timestamp, vec![ParentLink::new(parent, delta)], signer);
        parent = rev.hash();
        copies.push(rev);
    }
    for h in branch.iter().rev() {
        gor.remove(h)?;
    }
    for rev in &copies {
        gor.insert_local(rev.clone())?;
    }
    Ok(copies)
}

/// Replaces the local branch from `base` (exclusive) to `tip` with a single
/// revision whose delta combines the branch deltas.
pub fn squash(
    gor: &mut GraphOfRevisions,
    base: &RevisionHash,
    tip: &RevisionHash,
    author: Uuid,
    timestamp: i64,
    signer: Option<&dyn Signer>,
) -> Result<Revision, GraphError> {
    let (l, branch) = local_branch(gor, tip, base)?;
    if l != *base || branch.is_empty() {
        return Err(GraphError::NotLinear(*tip));
    }
    let combined = Delta::combine_many(branch.iter().map(|h| &gor.get(h).expect("branch revision").parents()[0].delta))?;
    let rev = Revision::new(author, timestamp, vec![ParentLink::new(*base, combined)], signer);
    for h in branch.iter().rev() {
        gor.remove(h)?;
    }
    gor.insert_local(rev.clone())?;
    Ok(rev)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(i: usize) -> Triple {
        Triple::iris(&format!("urn:ex:s{i}"), "urn:ex:p", &format!("urn:ex:o{i}")).unwrap()
    }

    fn d(ins: &[usize], rem: &[usize]) -> Delta {
        Delta::new(ins.iter().map(|&i| tr(i)), rem.iter().map(|&i| tr(i))).unwrap()
    }

    fn set(ids: &[usize]) -> BTreeSet<Triple> {
        ids.iter().map(|&i| tr(i)).collect()
    }

    struct Example {
        gor: GraphOfRevisions,
        g1: RevisionHash,
        g2: RevisionHash,
    }

    // G0 = {T0,T1,T2}; B: +T3 +T4 -T0 -T1; C: +T4 +T5 -T1 -T2.
    fn example() -> Example {
        let a = Uuid::from_u128(0xa);
        let mut gor = GraphOfRevisions::new("urn:doc");
        let g0 = Revision::new(a, 1, vec![ParentLink::new(gor.root(), d(&[0, 1, 2], &[]))], None);
        let g1 = Revision::new(Uuid::from_u128(0xb), 2, vec![ParentLink::new(g0.hash(), d(&[3, 4], &[0, 1]))], None);
        let g2 = Revision::new(Uuid::from_u128(0xc), 3, vec![ParentLink::new(g0.hash(), d(&[4, 5], &[1, 2]))], None);
        let (h1, h2) = (g1.hash(), g2.hash());
        gor.insert(g0).unwrap();
        gor.insert(g1).unwrap();
        gor.insert_local(g2).unwrap();
        Example { gor, g1: h1, g2: h2 }
    }

    #[test]
    fn worked_merge() {
        let ex = example();
        let out = merge_revision(&ex.gor, &ex.g1, &ex.g2, Uuid::from_u128(0xa), 10, None).unwrap();
        let MergeOutcome::Merged { revision, graph, .. } = out else { panic!("expected merge") };
        assert_eq!(*graph.triples(), set(&[3, 4, 5]));
        assert_eq!(revision.parents()[0].delta, d(&[5], &[2]));
        assert_eq!(revision.parents()[1].delta, d(&[3], &[0]));
        let mut gor = ex.gor;
        gor.insert(revision.clone()).unwrap();
        gor.verify_paths(&revision.hash()).unwrap();
        assert_eq!(*gor.materialize(&revision.hash()).unwrap().triples(), set(&[3, 4, 5]));
    }

    #[test]
    fn merge_of_ancestor_fast_forwards() {
        let ex = example();
        let g0 = ex.gor.get(&ex.g1).unwrap().parents()[0].parent;
        let out = merge_revision(&ex.gor, &g0, &ex.g1, Uuid::nil(), 5, None).unwrap();
        assert!(matches!(out, MergeOutcome::FastForward(h) if h == ex.g1));
    }

    #[test]
    fn worked_rebase_both_modes() {
        for (mode, expected) in [(RebaseDeltaMode::Copied, d(&[4, 5], &[1, 2])), (RebaseDeltaMode::Recomputed, d(&[5], &[2]))] {
            let mut ex = example();
            let opts = RebaseOptions { mode, squash: false };
            let copies = rebase_revisions(&mut ex.gor, &ex.g2, &ex.g1, 20, opts, None).unwrap();
            assert_eq!(copies.len(), 1);
            assert_eq!(copies[0].parents()[0].delta, expected);
            assert_eq!(copies[0].author(), Some(Uuid::from_u128(0xc)));
            assert!(!ex.gor.contains(&ex.g2));
            assert_eq!(ex.gor.sorted_heads(), vec![copies[0].hash()]);
            assert_eq!(*ex.gor.materialize(&copies[0].hash()).unwrap().triples(), set(&[3, 4, 5]));
        }
    }

    #[test]
    fn rebase_rejects_published_branch() {
        let mut ex = example();
        let err = rebase_revisions(&mut ex.gor, &ex.g1, &ex.g2, 20, RebaseOptions::default(), None);
        assert!(matches!(err, Err(GraphError::NotLocal(h)) if h == ex.g1));
    }

    #[test]
    fn rebase_onto_own_parent_is_noop() {
        let mut ex = example();
        let g0 = ex.gor.get(&ex.g2).unwrap().parents()[0].parent;
        let before = ex.gor.len();
        assert!(rebase_revisions(&mut ex.gor, &ex.g2, &g0, 20, RebaseOptions::default(), None).unwrap().is_empty());
        assert_eq!(ex.gor.len(), before);
        assert!(ex.gor.contains(&ex.g2));
    }

    #[test]
    fn squash_single_revision_keeps_delta() {
        let mut ex = example();
        let g0 = ex.gor.get(&ex.g2).unwrap().parents()[0].parent;
        let rev = squash(&mut ex.gor, &g0, &ex.g2, Uuid::from_u128(0xc), 30, None).unwrap();
        assert_eq!(rev.parents()[0].delta, d(&[4, 5], &[1, 2]));
        assert_ne!(rev.hash(), ex.g2);
        assert!(ex.gor.is_local(&rev.hash()));
    }
}
