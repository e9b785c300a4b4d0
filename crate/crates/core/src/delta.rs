//! The set-difference delta algebra over graphs.

use std::collections::BTreeSet;

use crate::error::DeltaError;
use crate::term::{Graph, Triple};

/// Inserted and removed triples between two graph versions.
///
/// The two sets are always disjoint.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Delta {
    inserted: BTreeSet<Triple>,
    removed: BTreeSet<Triple>,
}

impl Delta {
    pub fn new(
        inserted: impl IntoIterator<Item = Triple>,
        removed: impl IntoIterator<Item = Triple>,
    ) -> Result<Self, DeltaError> {
        let inserted: BTreeSet<Triple> = inserted.into_iter().collect();
        let removed: BTreeSet<Triple> = removed.into_iter().collect();
        if let Some(t) = inserted.intersection(&removed).next() {
            return Err(DeltaError::Overlap(t.to_string()));
        }
        Ok(Delta { inserted, removed })
    }

    pub fn empty() -> Self {
        Delta::default()
    }

    pub fn inserted(&self) -> &BTreeSet<Triple> {
        &self.inserted
    }

    pub fn removed(&self) -> &BTreeSet<Triple> {
        &self.removed
    }

    pub fn is_empty(&self) -> bool {
        self.inserted.is_empty() && self.removed.is_empty()
    }

    /// Number of triples mentioned by the delta.
    pub fn size(&self) -> usize {
        self.inserted.len() + self.removed.len()
    }

    /// `I = g_j \ g_i`, `R = g_i \ g_j`.
    pub fn compute(g_i: &Graph, g_j: &Graph) -> Delta {
        Delta {
            inserted: g_j.triples().difference(g_i.triples()).cloned().collect(),
            removed: g_i.triples().difference(g_j.triples()).cloned().collect(),
        }
    }

    /// `(g \ R) ∪ I`. Removing an absent triple is a no-op.
    pub fn apply(&self, g: &Graph) -> Graph {
        let mut out = g.clone();
        self.apply_in_place(&mut out);
        out
    }

    pub fn apply_in_place(&self, g: &mut Graph) {
        let set = g.triples_mut();
        for t in &self.removed {
            set.remove(t);
        }
        for t in &self.inserted {
            set.insert(t.clone());
        }
    }

    /// Swaps the inserted and removed sets.
    pub fn invert(&self) -> Delta {
        Delta {
            inserted: self.removed.clone(),
            removed: self.inserted.clone(),
        }
    }

    /// Folds `next` (the delta from this delta's target onward) into `self`.
    ///
    /// `I = (I1 \ R2) ∪ I2` and `R = R1 ∪ R2`, minus anything re-inserted by
    /// `next` so the sets stay disjoint. Applying the result equals applying
    /// both deltas in order.
    pub fn combine_in_place(&mut self, next: &Delta) {
        for t in &next.removed {
            self.inserted.remove(t);
            self.removed.insert(t.clone());
        }
        for t in &next.inserted {
            self.removed.remove(t);
            self.inserted.insert(t.clone());
        }
    }

    pub fn combine(&self, next: &Delta) -> Delta {
        let mut out = self.clone();
        out.combine_in_place(next);
        out
    }

    /// Left fold of [`Delta::combine`] along a path of consecutive deltas.
    pub fn combine_many<'a>(path: impl IntoIterator<Item = &'a Delta>) -> Result<Delta, DeltaError> {
        let mut it = path.into_iter();
        let mut acc = it.next().ok_or(DeltaError::EmptyPath)?.clone();
        for d in it {
            acc.combine_in_place(d);
        }
        Ok(acc)
    }

    /// Restricts the delta to its effect on `base`: drops removals of triples
    /// absent from `base` and insertions of triples already present.
    pub fn project_onto(&self, base: &Graph) -> Delta {
        Delta {
            inserted: self.inserted.iter().filter(|t| !base.contains(t)).cloned().collect(),
            removed: self.removed.iter().filter(|t| base.contains(t)).cloned().collect(),
        }
    }

    pub(crate) fn from_parts_unchecked(inserted: BTreeSet<Triple>, removed: BTreeSet<Triple>) -> Delta {
        debug_assert!(inserted.is_disjoint(&removed));
        Delta { inserted, removed }
    }
}
