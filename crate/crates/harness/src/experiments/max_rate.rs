use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use anyhow::{bail, Result};
use graphsync::agent::MergeCost;
use graphsync::{merge_revision, Delta, GraphOfRevisions, MergeOutcome, ParentLink, Revision, RevisionHash, Triple};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{bench_uuid, bounded, graph_digest, owned_triple, Params};
use crate::output::{RunOutput, Table};
use crate::row;

pub const ITERATIONS: usize = 30;

/// Simulated cost model for one merge on the master.
pub const COST: MergeCost = MergeCost::Linear {
    base_ms: 5,
    per_kilo_triple_ms: 40,
};

struct Outcome {
    merges: usize,
    triples_touched: usize,
    sim_ms: i64,
    wall_us: f64,
    graphs_ok: bool,
    final_triples: usize,
    digest: String,
}

/// One configuration: every iteration each agent commits up to `c` changes
/// per document on top of the master's head, then the master merges all
/// heads before the next iteration starts.
fn run_config(seed: u64, n: usize, m: usize, c: usize) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((n as u64) << 40) ^ ((m as u64) << 24) ^ c as u64);
    let master = bench_uuid(0);
    let mut gors: Vec<GraphOfRevisions> = (0..m).map(|d| GraphOfRevisions::new(format!("urn:gs:doc{d}"))).collect();
    let mut heads: Vec<RevisionHash> = gors.iter().map(GraphOfRevisions::root).collect();
    let mut oracle: Vec<BTreeSet<Triple>> = vec![BTreeSet::new(); m];
    let mut live: BTreeMap<(usize, usize), Vec<Triple>> = BTreeMap::new();
    let mut counter: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut clock = 0i64;
    let mut out = Outcome {
        merges: 0,
        triples_touched: 0,
        sim_ms: 0,
        wall_us: 0.0,
        graphs_ok: true,
        final_triples: 0,
        digest: String::new(),
    };

    for _ in 0..ITERATIONS {
        for d in 0..m {
            for a in 0..n {
                let k = rng.gen_range(1..=c);
                let own = live.entry((a, d)).or_default();
                let next = counter.entry((a, d)).or_default();
                let (mut ins, mut rem) = (Vec::new(), Vec::new());
                for _ in 0..k {
                    if !own.is_empty() && rng.gen_bool(0.3) {
                        rem.push(own.swap_remove(rng.gen_range(0..own.len())));
                    } else {
                        *next += 1;
                        ins.push(owned_triple(&format!("a{a}"), *next));
                    }
                }
                own.extend(ins.iter().cloned());
                for t in &rem {
                    oracle[d].remove(t);
                }
                oracle[d].extend(ins.iter().cloned());
                clock += 1;
                let rev = Revision::new(bench_uuid(a as u128 + 1), clock, vec![ParentLink::new(heads[d], Delta::new(ins, rem)?)], None);
                gors[d].insert(rev)?;
            }
        }
        let start = Instant::now();
        for (d, gor) in gors.iter_mut().enumerate() {
            loop {
                let sorted = gor.sorted_heads();
                if sorted.len() < 2 {
                    break;
                }
                clock += 1;
                let MergeOutcome::Merged { revision, stats, .. } = merge_revision(gor, &sorted[0], &sorted[1], master, clock, None)? else {
                    bail!("concurrent heads fast-forwarded");
                };
                out.merges += 1;
                out.triples_touched += stats.triples_touched;
                out.sim_ms += COST.of(&stats);
                gor.insert(revision)?;
            }
            heads[d] = *gor.heads().iter().next().expect("one head");
        }
        out.wall_us += start.elapsed().as_secs_f64() * 1e6;
    }
    for (d, gor) in gors.iter().enumerate() {
        let g = gor.materialize(&heads[d])?;
        out.graphs_ok &= g.triples() == &oracle[d];
        out.final_triples += g.len();
        out.digest = graph_digest(&g);
    }
    Ok(out)
}

pub fn max_rate(p: &Params) -> Result<RunOutput> {
    let ns = match p.agents {
        Some(n) => vec![bounded("agents", n, 2, 20)?],
        None => vec![2, 5, 10, 20],
    };
    let ms = match p.docs {
        Some(m) => vec![bounded("docs", m, 1, 20)?],
        None => vec![1, 5, 10, 20],
    };
    let cs = match p.changes {
        Some(c) => vec![bounded("changes", c, 10, 50)?],
        None => vec![10, 30, 50],
    };
    let mut out = RunOutput::new("max-rate");
    p.record(&mut out);
    out.param("iterations", ITERATIONS);
    out.metrics = Table::new(&[
        "agents",
        "docs",
        "changes",
        "merges",
        "avg_triples_touched",
        "avg_merge_ms",
        "max_rate_hz",
        "final_triples",
        "digest",
    ]);
    let mut timings = Table::new(&["agents", "docs", "changes", "avg_iteration_wall_us"]);
    let mut all_ok = true;
    for &n in &ns {
        for &m in &ms {
            for &c in &cs {
                let o = run_config(p.seed, n, m, c)?;
                all_ok &= o.graphs_ok && o.merges == ITERATIONS * m * (n - 1);
                let avg_ms = o.sim_ms as f64 / ITERATIONS as f64;
                out.metrics.push(row![
                    n,
                    m,
                    c,
                    o.merges,
                    o.triples_touched / ITERATIONS,
                    format!("{avg_ms:.2}"),
                    format!("{:.3}", 1000.0 / avg_ms),
                    o.final_triples,
                    &o.digest[..16]
                ]);
                timings.push(row![n, m, c, format!("{:.1}", o.wall_us / ITERATIONS as f64)]);
            }
        }
    }
    out.check("merged_graphs_match_oracle", all_ok, "every document's final head equals the applied changes; N-1 merges per document per iteration");
    out.file("timings.csv", timings.to_csv());
    Ok(out)
}
