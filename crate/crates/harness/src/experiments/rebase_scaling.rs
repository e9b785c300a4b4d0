use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use anyhow::Result;
use graphsync::{rebase_revisions, Delta, GraphOfRevisions, ParentLink, RebaseOptions, Revision};

use super::{bench_uuid, bounded, graph_digest, insert_delta, owned_triple, seed_revision, Params};
use crate::fit::linear_trimmed;
use crate::output::{RunOutput, Table};
use crate::row;

const BASE_TRIPLES: usize = 100;

/// Rebases local branches of 1..=n revisions onto a concurrent master
/// revision, with and without squashing.
pub fn rebase_scaling(p: &Params) -> Result<RunOutput> {
    let max_n = bounded("revisions", p.revisions.unwrap_or(40), 2, BASE_TRIPLES - 1)?;
    let reps = bounded("reps", p.reps.unwrap_or(9), 1, 100)?;
    let sizes = match p.changes {
        Some(c) => vec![bounded("changes", c, 1, 10_000)?],
        None => vec![10, 20, 30, 40, 50],
    };
    let mut out = RunOutput::new("rebase-scaling");
    p.record(&mut out);
    out.param("revisions", max_n);
    out.metrics = Table::new(&["changes", "revisions", "squash", "revisions_out", "tip_triples", "tip_digest"]);
    let mut timings = Table::new(&["changes", "revisions", "squash", "rebase_us"]);

    // every (changes, revisions, squash) point, timed in interleaved passes
    // so a burst of machine load cannot skew one point's repetitions
    struct Point {
        c: usize,
        n: usize,
        squash: bool,
        gor: GraphOfRevisions,
        tip: graphsync::RevisionHash,
        dest: graphsync::RevisionHash,
        oracle: BTreeSet<graphsync::Triple>,
        best: f64,
    }
    let mut points = Vec::new();
    for &c in &sizes {
        for n in 1..=max_n {
            let mut gor = GraphOfRevisions::new("urn:gs:rebase-bench");
            let g0 = seed_revision(&mut gor, (0..BASE_TRIPLES).map(|i| owned_triple("base", i)));
            let mut oracle: BTreeSet<_> = (0..BASE_TRIPLES).map(|i| owned_triple("base", i)).collect();

            let master_triples: Vec<_> = (0..c).map(|i| owned_triple("m", i)).collect();
            oracle.extend(master_triples.iter().cloned());
            let m = Revision::new(bench_uuid(1), 1, vec![ParentLink::new(g0, insert_delta(master_triples))], None);
            let dest = m.hash();
            gor.insert(m)?;

            let mut tip = g0;
            for i in 0..n {
                let owner = format!("l{i}");
                let ins: Vec<_> = (0..c - 1).map(|j| owned_triple(&owner, j)).collect();
                let rem = owned_triple("base", i);
                oracle.extend(ins.iter().cloned());
                oracle.remove(&rem);
                let rev = Revision::new(bench_uuid(2), 2 + i as i64, vec![ParentLink::new(tip, Delta::new(ins, [rem])?)], None);
                tip = rev.hash();
                gor.insert_local(rev)?;
            }
            for squash in [false, true] {
                points.push(Point {
                    c,
                    n,
                    squash,
                    gor: gor.clone(),
                    tip,
                    dest,
                    oracle: oracle.clone(),
                    best: f64::INFINITY,
                });
            }
        }
    }

    let mut series: BTreeMap<(usize, bool), Vec<f64>> = BTreeMap::new();
    let mut tips: BTreeMap<(usize, usize), BTreeSet<String>> = BTreeMap::new();
    let (mut oracle_ok, mut single_ok) = (true, true);
    for pass in 0..reps {
        for pt in points.iter_mut() {
            let opts = RebaseOptions {
                squash: pt.squash,
                ..RebaseOptions::default()
            };
            let mut g = pt.gor.clone();
            let start = Instant::now();
            let copies = rebase_revisions(&mut g, &pt.tip, &pt.dest, 1000, opts, None)?;
            pt.best = pt.best.min(start.elapsed().as_secs_f64() * 1e6);
            if pass + 1 < reps {
                continue;
            }
            let new_tip = copies.last().expect("non-empty branch").hash();
            let graph = g.materialize(&new_tip)?;
            let digest = graph_digest(&graph);
            oracle_ok &= graph.triples() == &pt.oracle;
            single_ok &= if pt.squash { copies.len() == 1 } else { copies.len() == pt.n };
            out.metrics.push(row![pt.c, pt.n, pt.squash, copies.len(), graph.len(), &digest[..16]]);
            timings.push(row![pt.c, pt.n, pt.squash, format!("{:.1}", pt.best)]);
            series.entry((pt.c, pt.squash)).or_default().push(pt.best);
            tips.entry((pt.c, pt.n)).or_default().insert(digest);
        }
    }

    out.check("tip_matches_oracle", oracle_ok, "rebased tip equals master plus local changes");
    out.check(
        "squash_identical_tips",
        tips.values().all(|d| d.len() == 1),
        format!("{} (changes, revisions) pairs compared", tips.len()),
    );
    out.check("squash_single_revision", single_ok, "squashed rebase publishes one revision, plain rebase n");
    for ((c, squash), ys) in &series {
        let xs: Vec<f64> = (1..=ys.len()).map(|i| i as f64).collect();
        let fit = linear_trimmed(&xs, ys, 0.05).expect("enough points");
        out.check(
            &format!("linear_r2_c{c}_{}", if *squash { "squash" } else { "plain" }),
            fit.r2 >= 0.9,
            format!("R2={:.4} {:.2}us + {:.2}us/rev", fit.r2, fit.coef[0], fit.coef[1]),
        );
    }
    out.file("timings.csv", timings.to_csv());
    Ok(out)
}
