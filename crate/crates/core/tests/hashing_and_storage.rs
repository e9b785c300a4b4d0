mod support;

use std::fs;

use graphsync::revision::revision_hash;
use graphsync::store;
use graphsync::wire::{Body, Frame, TransferMsg, VoteMsg};
use graphsync::{Delta, ParentLink, Revision, RevisionHash, Term, Triple};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha512};
use support::{author, random_dag, DOC};
use uuid::Uuid;

const ROOT_HEX: &str = "11bb994b5d2eab48b18667c7d8943e82c9011cb1d974304b8f2b6247a7e6b7f55ca2f7c62893644c3728d17dafd74ae3ba46271cf6287bb9e751c779a26fefc5";
const FIRST_HEX: &str = "3c8bf2d9df2d1b51088b9efabcc6c2afa686e19fc8de6d1efc97f78fcffa745919f5420618c15ed20abc7eb777115458179c979bf0f6347a4e07a73c1d0e36b3";

/// Frozen vectors produced outside Rust with a plain SHA-512 library.
#[test]
fn frozen_hash_vectors() {
    assert_eq!(Revision::root_hash().to_hex(), ROOT_HEX);
    let d = Delta::new(
        [Triple::iris("urn:ex:s0", "urn:ex:p", "urn:ex:o0").unwrap()],
        [Triple::new(Term::iri("urn:ex:s1").unwrap(), Term::iri("urn:ex:p").unwrap(), Term::literal("one")).unwrap()],
    )
    .unwrap();
    let rev = Revision::new(Uuid::from_u128(1), 1000, vec![ParentLink::new(Revision::root_hash(), d)], None);
    assert_eq!(rev.hash().to_hex(), FIRST_HEX);
}

/// Hand-written serializer for IRI-only deltas, mirroring the text format.
fn oracle_delta_text(d: &Delta) -> String {
    let block = |kw: &str, ts: Vec<(String, String, String)>| {
        if ts.is_empty() {
            return String::new();
        }
        let body: String = ts.iter().map(|(s, p, o)| format!(" <{s}> <{p}> <{o}> .\n")).collect();
        format!("{kw} {{\n{body}}}\n")
    };
    let parts = |set: &std::collections::BTreeSet<Triple>| {
        let mut v: Vec<(String, String, String)> = set
            .iter()
            .map(|t| (t.subject().value().to_string(), t.predicate().value().to_string(), t.object().value().to_string()))
            .collect();
        v.sort();
        v
    };
    block("INSERT DATA", parts(d.inserted())) + &block("DELETE DATA", parts(d.removed()))
}

fn oracle_hash(author: Uuid, ts: i64, parents: &[ParentLink]) -> [u8; 64] {
    let mut inner: Vec<Vec<u8>> = parents
        .iter()
        .map(|l| {
            let mut h = Sha512::new();
            h.update(oracle_delta_text(&l.delta).as_bytes());
            h.update(l.parent.0);
            h.finalize().to_vec()
        })
        .collect();
    inner.sort();
    let mut h = Sha512::new();
    h.update(author.as_bytes());
    h.update(ts.to_be_bytes());
    for x in inner {
        h.update(x);
    }
    h.finalize().into()
}

#[test]
fn hash_matches_independent_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (_, made) = random_dag(&mut rng, 20, 10);
    assert_eq!(made.len(), 20);
    for r in &made {
        let expected = oracle_hash(r.author().unwrap(), r.timestamp(), r.parents());
        assert_eq!(r.hash().0, expected);
        assert_eq!(revision_hash(r.author(), r.timestamp(), r.parents()), RevisionHash(expected));
    }
}

#[test]
fn any_field_change_changes_the_hash() {
    let base = ParentLink::new(Revision::root_hash(), support::delta(&[1], &[]));
    let h = revision_hash(Some(author(1)), 5, &[base.clone()]);
    assert_ne!(h, revision_hash(Some(author(2)), 5, &[base.clone()]));
    assert_ne!(h, revision_hash(Some(author(1)), 6, &[base.clone()]));
    assert_ne!(h, revision_hash(Some(author(1)), 5, &[ParentLink::new(Revision::root_hash(), support::delta(&[2], &[]))]));
    assert_ne!(h, revision_hash(Some(author(1)), 5, &[ParentLink::new(RevisionHash([7; 64]), base.delta.clone())]));
}

#[test]
fn store_round_trip_preserves_history() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for k in 0..10 {
        let (gor, _) = random_dag(&mut rng, 15, 10);
        let path = dir.path().join(format!("doc{k}.log"));
        store::save(&gor, &path).unwrap();
        let loaded = store::load(&path).unwrap();
        assert_eq!(loaded.gor.uri(), DOC);
        assert_eq!(loaded.gor.heads(), gor.heads());
        assert_eq!(loaded.gor.len(), gor.len());
        for h in gor.heads() {
            assert_eq!(loaded.gor.materialize(h).unwrap().triples(), gor.materialize(h).unwrap().triples());
        }
        let (snap_head, snap) = loaded.snapshot.expect("snapshot written");
        assert_eq!(snap.triples(), gor.materialize(&snap_head).unwrap().triples());
    }
}

#[test]
fn tampered_log_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (gor, _) = random_dag(&mut rng, 8, 10);
    let path = dir.path().join("doc.log");
    store::save(&gor, &path).unwrap();
    let mut bytes = fs::read(&path).unwrap();
    // flip one byte in the first delta text: "INSERT" becomes "INSERU"
    let at = bytes.windows(6).position(|w| w == b"INSERT").expect("a delta record") + 5;
    bytes[at] ^= 1;
    fs::write(&path, &bytes).unwrap();
    assert!(store::load(&path).is_err());
    fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert!(store::load(&path).is_err());
}

#[test]
fn golden_transfer_frames() {
    let fin = Frame::new("d", Body::Transfer(TransferMsg::Finished(-1))).encode();
    let mut expected = vec![0, 0, 0, 12, 0x16, 0, 1, b'd'];
    expected.extend([0xff; 8]);
    assert_eq!(fin, expected);

    let data = Frame::new("ds", Body::Transfer(TransferMsg::Data { sequence: 3, data: vec![9, 8] })).encode();
    let expected: Vec<u8> = [&[0u8, 0, 0, 19, 0x11, 0, 2, b'd', b's'][..], &3u64.to_be_bytes(), &2u32.to_be_bytes(), &[9, 8]].concat();
    assert_eq!(data, expected);

    let ready = Frame::new("", Body::Transfer(TransferMsg::Ready)).encode();
    assert_eq!(ready, vec![0, 0, 0, 3, 0x10, 0, 0]);
}

#[test]
fn golden_vote_frame() {
    let vote = VoteMsg {
        voter: Uuid::from_u128(1),
        candidate: Uuid::from_u128(2),
        round: 3,
        vote_timestamp: 4,
        election_timestamp: 5,
    };
    let bytes = Frame::new("u", Body::Vote(vote)).encode();
    let expected: Vec<u8> = [
        &56u32.to_be_bytes()[..],
        &[0x04, 0, 1, b'u'],
        &1u128.to_be_bytes(),
        &2u128.to_be_bytes(),
        &3u32.to_be_bytes(),
        &4i64.to_be_bytes(),
        &5i64.to_be_bytes(),
    ]
    .concat();
    assert_eq!(bytes, expected);
    assert_eq!(Frame::decode(&bytes).unwrap().body, Body::Vote(vote));
}

#[test]
fn revision_frames_round_trip_and_reject_forgery() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (_, made) = random_dag(&mut rng, 12, 10);
    for r in &made {
        let bytes = Frame::new(DOC, Body::Revision(r.clone())).encode();
        assert_eq!(Frame::decode(&bytes).unwrap().body, Body::Revision(r.clone()));
    }
    let mut bytes = Frame::new(DOC, Body::Revision(made[0].clone())).encode();
    // timestamp sits after len, kind, uri, hash and author
    let ts_at = 4 + 1 + 2 + DOC.len() + 64 + 16;
    bytes[ts_at + 7] ^= 0x01;
    assert!(Frame::decode(&bytes).is_err());
    assert!(Frame::decode(&bytes[..bytes.len() - 1]).is_err());
    let junk: Vec<u8> = (0..40).map(|_| rng.gen()).collect();
    let _ = Frame::decode(&junk);
}
