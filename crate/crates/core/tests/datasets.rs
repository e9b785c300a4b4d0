use std::collections::BTreeSet;

use graphsync::dataset::{self, DatasetMeta, DatasetRelation, Rect, DATASET_INCLUDE, DATASET_TYPE, GEO_HAS_GEOMETRY, POINTS_CLOUD};
use graphsync::{Graph, Triple};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uuid::Uuid;

const DOC: &str = "urn:test:datasets";

fn by_predicate(triples: &BTreeSet<Triple>, predicate: &str) -> usize {
    triples.iter().filter(|t| t.predicate().as_iri() == Some(predicate)).count()
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Rect {
    Rect::new(x0, y0, x1, y1).unwrap()
}

#[test]
fn two_dataset_example() {
    let d1 = DatasetMeta::new("http://example.org/dataset1", rect(0.0, 0.0, 10.0, 10.0), POINTS_CLOUD).include("http://example.org/dataset2");
    let d2 = DatasetMeta::new("http://example.org/dataset2", rect(2.0, 2.0, 5.0, 5.0), POINTS_CLOUD);
    let mut all = dataset::meta_triples(&d1).unwrap();
    all.extend(dataset::meta_triples(&d2).unwrap());
    assert_eq!(all.len(), 5);
    assert_eq!(by_predicate(&all, GEO_HAS_GEOMETRY), 2);
    assert_eq!(by_predicate(&all, DATASET_TYPE), 2);
    assert_eq!(by_predicate(&all, DATASET_INCLUDE), 1);
    assert_eq!(by_predicate(&dataset::meta_triples(&d2).unwrap(), DATASET_INCLUDE), 0);

    let g = Graph::from_triples(DOC, all);
    assert_eq!(dataset::meta_from_graph(&g, &d1.uri).unwrap(), d1);
    assert_eq!(dataset::meta_from_graph(&g, &d2.uri).unwrap(), d2);
}

#[test]
fn meta_round_trips_through_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for k in 0..200 {
        let x0 = rng.gen_range(-500..500) as f64 / 4.0;
        let y0 = rng.gen_range(-500..500) as f64 / 4.0;
        let r = rect(x0, y0, x0 + rng.gen_range(1..400) as f64 / 8.0, y0 + rng.gen_range(1..400) as f64 / 8.0);
        let mut meta = DatasetMeta::new(format!("urn:ds:{k}"), r, dataset::IMAGE);
        for j in 0..rng.gen_range(0..4) {
            meta = meta.include(format!("urn:ds:{k}-part{j}"));
        }
        let agent = Uuid::from_u128(rng.gen());
        let rels = vec![
            DatasetRelation::Has {
                agent,
                dataset: meta.uri.clone(),
            },
            DatasetRelation::CreatedBy {
                dataset: meta.uri.clone(),
                agent,
            },
        ];
        let triples = dataset::dataset_to_triples(&meta, &rels).unwrap();
        let g = Graph::from_triples(DOC, triples.clone());
        let back = dataset::meta_from_graph(&g, &meta.uri).unwrap();
        assert_eq!(back, meta);
        assert_eq!(dataset::dataset_to_triples(&back, &rels).unwrap(), triples);
        assert_eq!(dataset::holders(&g, &meta.uri), BTreeSet::from([agent]));
    }
}

fn team_graph(entries: &[(&str, Rect, Uuid)]) -> Graph {
    let mut triples = BTreeSet::new();
    for (uri, r, holder) in entries {
        let meta = DatasetMeta::new(*uri, *r, POINTS_CLOUD);
        let rel = DatasetRelation::Has {
            agent: *holder,
            dataset: uri.to_string(),
        };
        triples.extend(dataset::dataset_to_triples(&meta, &[rel]).unwrap());
    }
    Graph::from_triples(DOC, triples)
}

#[test]
fn mission_d_discovers_a_b_and_c() {
    let (u0, u1, u2) = (Uuid::from_u128(10), Uuid::from_u128(11), Uuid::from_u128(12));
    let g = team_graph(&[
        ("urn:ds:a", rect(0.0, 0.0, 100.0, 100.0), u0),
        ("urn:ds:b", rect(100.0, 0.0, 200.0, 100.0), u1),
        ("urn:ds:c", rect(0.0, 100.0, 100.0, 200.0), u2),
    ]);
    let found = dataset::discover(&g, &rect(0.0, 0.0, 256.0, 256.0));
    let names: Vec<&str> = found.iter().map(|(d, _)| d.as_str()).collect();
    assert_eq!(names, ["urn:ds:a", "urn:ds:b", "urn:ds:c"]);
    assert_eq!(found[1].1, vec![u1]);
    assert!(dataset::discover(&g, &rect(300.0, 300.0, 400.0, 400.0)).is_empty());
}

#[test]
fn discover_matches_pairwise_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let coord = |rng: &mut ChaCha8Rng| {
        let x = rng.gen_range(0..90) as f64;
        let y = rng.gen_range(0..90) as f64;
        rect(x, y, x + rng.gen_range(1..30) as f64, y + rng.gen_range(1..30) as f64)
    };
    for _ in 0..100 {
        let n = rng.gen_range(1..12);
        let uris: Vec<String> = (0..n).map(|i| format!("urn:ds:{i}")).collect();
        let entries: Vec<(&str, Rect, Uuid)> = uris.iter().map(|u| (u.as_str(), coord(&mut rng), Uuid::from_u128(rng.gen_range(1..4)))).collect();
        let g = team_graph(&entries);
        let q = coord(&mut rng);
        let overlap = |a: &Rect, b: &Rect| a.min_x.max(b.min_x) < a.max_x.min(b.max_x) && a.min_y.max(b.min_y) < a.max_y.min(b.max_y);
        let expected: BTreeSet<&str> = entries.iter().filter(|(_, r, _)| overlap(r, &q)).map(|(u, _, _)| *u).collect();
        let found = dataset::discover(&g, &q);
        let got: BTreeSet<&str> = found.iter().map(|(d, _)| d.as_str()).collect();
        assert_eq!(got, expected);
    }
}

/// Counts unit cells of a 256x256 raster over `target` covered by
/// `pieces`, with the cell centre as the sample.
fn raster(target: &Rect, pieces: &[Rect]) -> usize {
    let (w, h) = (target.width() / 256.0, target.height() / 256.0);
    let mut cells = 0;
    for i in 0..256 {
        for j in 0..256 {
            let (x, y) = (target.min_x + (i as f64 + 0.5) * w, target.min_y + (j as f64 + 0.5) * h);
            if pieces.iter().any(|p| p.contains_point(x, y)) {
                cells += 1;
            }
        }
    }
    cells
}

#[test]
fn remaining_region_matches_grid_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let target = rect(0.0, 0.0, 256.0, 256.0);
    for _ in 0..60 {
        let covered: Vec<Rect> = (0..rng.gen_range(0..6))
            .map(|_| {
                let x = rng.gen_range(-40..250) as f64;
                let y = rng.gen_range(-40..250) as f64;
                rect(x, y, x + rng.gen_range(1..160) as f64, y + rng.gen_range(1..160) as f64)
            })
            .collect();
        let pieces = dataset::remaining_region(&target, &covered);
        let area: f64 = pieces.iter().map(Rect::area).sum();
        let uncovered = 256 * 256 - raster(&target, &covered);
        // integer corners on a unit grid: the raster is exact
        assert!((area - uncovered as f64).abs() < 1e-6, "area {area} vs grid {uncovered}");
        for (k, p) in pieces.iter().enumerate() {
            assert!(p.min_x >= target.min_x && p.max_x <= target.max_x && p.min_y >= target.min_y && p.max_y <= target.max_y);
            assert!(covered.iter().all(|c| !p.intersects(c)));
            assert!(pieces[k + 1..].iter().all(|q| !p.intersects(q)), "pieces overlap");
        }
    }
}

#[test]
fn remaining_region_trivial_cases() {
    let t = rect(0.0, 0.0, 10.0, 10.0);
    assert!(dataset::remaining_region(&t, &[rect(-1.0, -1.0, 11.0, 11.0)]).is_empty());
    assert_eq!(dataset::remaining_region(&t, &[rect(20.0, 20.0, 30.0, 30.0)]), vec![t]);
}

#[test]
fn self_include_is_rejected() {
    let d = DatasetMeta::new("urn:ds:x", rect(0.0, 0.0, 1.0, 1.0), POINTS_CLOUD).include("urn:ds:x");
    assert!(dataset::meta_triples(&d).is_err());
}
