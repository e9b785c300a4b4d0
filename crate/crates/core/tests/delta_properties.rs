mod support;

use std::collections::BTreeSet;

use graphsync::codec;
use graphsync::{Delta, Graph, Triple};
use proptest::prelude::*;
use support::{delta, graph, set, universe_triple, DOC};

const UNIVERSE: usize = 42;

/// Each universe triple lands in the inserted set, the removed set or
/// neither, so the generated delta is always disjoint.
fn arb_delta() -> impl Strategy<Value = Delta> {
    proptest::collection::vec(0u8..3, UNIVERSE).prop_map(|sides| {
        let pick = |want| sides.iter().enumerate().filter(move |(_, s)| **s == want).map(|(i, _)| universe_triple(i));
        Delta::new(pick(1), pick(2)).unwrap()
    })
}

fn arb_graph() -> impl Strategy<Value = Graph> {
    proptest::collection::btree_set(0..UNIVERSE, 0..UNIVERSE).prop_map(|ids| Graph::from_triples(DOC, ids.into_iter().map(universe_triple)))
}

/// Set difference by pairwise comparison, independent of `BTreeSet` ops.
fn brute_difference(a: &Graph, b: &Graph) -> BTreeSet<Triple> {
    a.triples().iter().filter(|x| !b.triples().iter().any(|y| y == *x)).cloned().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn codec_round_trip(d in arb_delta()) {
        let text = codec::serialize(&d);
        prop_assert_eq!(codec::parse(&text).unwrap(), d.clone());
        prop_assert_eq!(codec::canonical_bytes(&d), codec::serialize(&d.clone()).into_bytes());
    }

    #[test]
    fn invert_is_an_involution(d in arb_delta()) {
        prop_assert_eq!(d.invert().invert(), d.clone());
        prop_assert_eq!(d.invert().inserted().clone(), d.removed().clone());
    }

    #[test]
    fn compute_then_apply_round_trips(a in arb_graph(), b in arb_graph()) {
        let d = Delta::compute(&a, &b);
        prop_assert_eq!(d.inserted(), &brute_difference(&b, &a));
        prop_assert_eq!(d.removed(), &brute_difference(&a, &b));
        prop_assert_eq!(d.apply(&a), b.clone());
        prop_assert_eq!(d.invert().apply(&b), a.clone());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn combine_matches_composition(g in arb_graph(), d1 in arb_delta(), d2 in arb_delta()) {
        let composed = d2.apply(&d1.apply(&g));
        let c = d1.combine(&d2);
        prop_assert!(c.inserted().is_disjoint(c.removed()));
        prop_assert_eq!(c.apply(&g), composed.clone());
        // restricted to g, the combined delta is exactly compute(g, composed)
        prop_assert_eq!(c.project_onto(&g), Delta::compute(&g, &composed));
    }

    #[test]
    fn combine_many_matches_replay(g in arb_graph(), path in proptest::collection::vec(arb_delta(), 1..10)) {
        let mut replay = g.clone();
        for d in &path {
            replay = d.apply(&replay);
        }
        let folded = Delta::combine_many(&path).unwrap();
        prop_assert_eq!(folded.apply(&g), replay.clone());
    }
}

#[test]
fn worked_example_compute_apply_invert() {
    let g0 = graph(&[0, 1, 2]);
    let g1 = graph(&[2, 3, 4]);
    let d = Delta::compute(&g0, &g1);
    assert_eq!(d, delta(&[3, 4], &[0, 1]));
    assert_eq!(delta(&[4, 5], &[1, 2]).apply(&g0).triples(), &set(&[0, 4, 5]));
    assert_eq!(d.invert(), delta(&[0, 1], &[3, 4]));
}

#[test]
fn worked_example_combine() {
    let d1 = delta(&[3, 4], &[0, 1]);
    let d2 = delta(&[5], &[3]);
    let c = d1.combine(&d2);
    assert_eq!(c, delta(&[4, 5], &[0, 1, 3]));
    let g0 = graph(&[0, 1, 2]);
    assert_eq!(c.apply(&g0).triples(), d2.apply(&d1.apply(&g0)).triples());
    assert_eq!(Delta::combine_many([&d1]).unwrap(), d1);
    assert!(Delta::combine_many(std::iter::empty::<&Delta>()).is_err());
}

#[test]
fn serialization_is_stable() {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(7);
    for _ in 0..100 {
        let ins: Vec<Triple> = (0..UNIVERSE).filter(|_| rand::Rng::gen_bool(&mut rng, 0.3)).map(universe_triple).collect();
        let a = Delta::new(ins.clone(), []).unwrap();
        let b = Delta::new(ins.into_iter().rev(), []).unwrap();
        assert_eq!(codec::canonical_bytes(&a), codec::canonical_bytes(&b));
    }
}
