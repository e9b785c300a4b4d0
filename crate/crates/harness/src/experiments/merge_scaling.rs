use std::collections::BTreeSet;

use anyhow::{bail, Result};
use graphsync::reconcile::MergeOutcome;
use graphsync::{merge_revision, GraphOfRevisions, ParentLink, Revision, RevisionHash};

use super::{bench_uuid, bounded, fastest, insert_delta, owned_triple, seed_revision, Params};
use crate::fit::{linear_trimmed, polyfit};
use crate::output::{RunOutput, Table};
use crate::row;

const BASE_TRIPLES: usize = 100;

struct Series {
    changes: usize,
    micros: Vec<f64>,
}

/// `K` revisions sharing the parent `G0`, merged one after another into a
/// growing head.
pub fn merge_scaling(p: &Params) -> Result<RunOutput> {
    let k = bounded("revisions", p.revisions.unwrap_or(200), 2, 5000)?;
    let reps = bounded("reps", p.reps.unwrap_or(5), 1, 100)?;
    let sizes = match p.changes {
        Some(c) => vec![bounded("changes", c, 1, 10_000)?],
        None => vec![10, 100],
    };
    let mut out = RunOutput::new("merge-scaling");
    p.record(&mut out);
    out.param("revisions", k);
    out.metrics = Table::new(&["changes", "merge_index", "deltas_combined", "triples_touched", "merged_triples"]);
    let mut timings = Table::new(&["changes", "merge_index", "merge_us"]);

    let mut series = Vec::new();
    for &c in &sizes {
        let mut gor = GraphOfRevisions::new("urn:gs:merge-bench");
        let g0 = seed_revision(&mut gor, (0..BASE_TRIPLES).map(|i| owned_triple("base", i)));
        let mut oracle: BTreeSet<_> = (0..BASE_TRIPLES).map(|i| owned_triple("base", i)).collect();
        let mut revs: Vec<RevisionHash> = Vec::with_capacity(k);
        for r in 0..k {
            let owner = format!("r{r}");
            let triples: Vec<_> = (0..c).map(|i| owned_triple(&owner, i)).collect();
            oracle.extend(triples.iter().cloned());
            let rev = Revision::new(bench_uuid(r as u128 + 1), r as i64 + 1, vec![ParentLink::new(g0, insert_delta(triples))], None);
            revs.push(rev.hash());
            gor.insert(rev)?;
        }
        let master = bench_uuid(0xffff);
        let mut head = revs[0];
        let mut micros = Vec::with_capacity(k - 1);
        for (idx, r) in revs.iter().enumerate().skip(1) {
            let ts = (k + idx) as i64;
            let (outcome, us) = fastest(reps, || merge_revision(&gor, &head, r, master, ts, None));
            let MergeOutcome::Merged { revision, graph, stats } = outcome? else {
                bail!("unexpected fast-forward at merge {idx}");
            };
            head = revision.hash();
            gor.insert(revision)?;
            out.metrics.push(row![c, idx, stats.deltas_combined, stats.triples_touched, graph.len()]);
            timings.push(row![c, idx, format!("{us:.1}")]);
            micros.push(us);
        }
        let final_graph = gor.materialize(&head)?;
        out.check(&format!("final_graph_c{c}"), final_graph.triples() == &oracle, format!("{} triples, oracle {}", final_graph.len(), oracle.len()));
        series.push(Series { changes: c, micros });
    }

    for s in &series {
        let xs: Vec<f64> = (1..=s.micros.len()).map(|i| i as f64).collect();
        let lin = linear_trimmed(&xs, &s.micros, 0.05).expect("enough points");
        out.check(&format!("linear_r2_c{}", s.changes), lin.r2 >= 0.9, format!("R2={:.4} slope={:.3}us/merge", lin.r2, lin.coef[1]));
        let cumulative: Vec<f64> = s
            .micros
            .iter()
            .scan(0.0, |acc, t| {
                *acc += t;
                Some(*acc)
            })
            .collect();
        let quad = polyfit(&xs, &cumulative, 2).expect("enough points");
        out.check(
            &format!("cumulative_quadratic_c{}", s.changes),
            quad.r2 >= 0.99 && quad.coef[2] > 0.0,
            format!("R2={:.5} a={:.4}", quad.r2, quad.coef[2]),
        );
    }
    if let [small, large] = &series[..] {
        let windows = 4;
        let w = small.micros.len() / windows;
        let ratios: Vec<f64> = (0..windows)
            .map(|i| {
                let sl = i * w..(i + 1) * w;
                large.micros[sl.clone()].iter().sum::<f64>() / small.micros[sl].iter().sum::<f64>()
            })
            .collect();
        let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(*r), hi.max(*r)));
        out.check(
            "size_ratio_constant",
            lo > 1.0 && hi / lo <= 2.5,
            format!("c{}/c{} per-quarter ratios {:?}", large.changes, small.changes, ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>()),
        );
    }
    out.file("timings.csv", timings.to_csv());
    Ok(out)
}
