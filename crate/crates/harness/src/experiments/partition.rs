use std::collections::{BTreeMap, BTreeSet};

use anyhow::Result;
use graphsync::agent::{AgentConfig, MergeCost};
use graphsync::{Delta, Triple};
use graphsync_netsim::{Latency, LinkPolicy, LogAction, PartitionWindow, SimTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uuid::Uuid;

use super::{bounded, owned_triple, world_artifacts, Params};
use crate::output::{RunOutput, Table};
use crate::row;
use crate::sim::World;

const EDIT_START: SimTime = 5_000;
const EDIT_END: SimTime = 65_000;
const QUIESCE_LIMIT: SimTime = 60_000;
const SAMPLE_MS: SimTime = 500;

/// Per-document expected triples, built alongside the edit schedule.
pub(crate) type Oracle = BTreeMap<String, BTreeSet<Triple>>;

pub(crate) fn doc_uri(d: usize) -> String {
    format!("urn:gs:doc{d}")
}

/// Samples one timeline row per document.
pub(crate) fn sample(world: &World, docs: &[String], t: SimTime, table: &mut Table) {
    let s = world.net.stats();
    for doc in docs {
        let heads = world.heads(doc);
        let masters = world.masters(doc);
        let master_head = masters.iter().next().and_then(|m| heads.get(m)).copied();
        let synced = heads.values().filter(|h| Some(**h) == master_head).count();
        let distinct: BTreeSet<_> = heads.values().collect();
        table.push(row![t, doc, synced, heads.len() - synced, distinct.len(), masters.len(), s.sent, s.delivered, s.lost, s.partitioned]);
    }
}

pub(crate) fn timeline_table() -> Table {
    Table::new(&["time", "doc", "synced", "unsynced", "distinct_heads", "masters", "sent", "delivered", "lost", "partitioned"])
}

/// Quiet: one master everyone agrees on, nothing queued, all graphs equal
/// to the oracle.
pub(crate) fn settled(world: &World, oracle: &Oracle) -> bool {
    oracle.iter().all(|(doc, expected)| {
        let masters = world.masters(doc);
        let Some(&m) = masters.iter().next() else { return false };
        masters.len() == 1
            && world.agents().all(|(_, a)| {
                let d = a.doc(doc).expect("subscribed");
                d.master() == Some(m) && d.local_queue().is_empty()
            })
            && world.graphs(doc).values().all(|g| g.triples() == expected)
    })
}

/// Convergence, master uniqueness and head reachability per document.
pub(crate) fn final_checks(out: &mut RunOutput, world: &World, oracle: &Oracle) {
    let mut converged = true;
    let mut one_master = true;
    let mut reachable = true;
    let mut detail = Vec::new();
    for (doc, expected) in oracle {
        let graphs = world.graphs(doc);
        let ok = graphs.values().all(|g| g.triples() == expected);
        converged &= ok;
        if let Some(g) = graphs.values().find(|g| g.triples() != expected) {
            let missing = expected.difference(g.triples()).count();
            let extra = g.triples().difference(expected).count();
            detail.push(format!("{doc}: {missing} expected triples missing, {extra} unexpected"));
        }
        let masters = world.masters(doc);
        let agreed = masters.len() == 1 && world.agents().all(|(_, a)| a.doc(doc).and_then(|d| d.master()) == masters.iter().next().copied());
        one_master &= agreed;
        if let Some(m) = masters.iter().next() {
            let state = world.agent(*m).doc(doc).expect("subscribed");
            let head = state.current();
            let gor = state.gor();
            let all = gor.revisions().all(|r| r.hash() == head || gor.is_ancestor(&r.hash(), &head).unwrap_or(false));
            reachable &= all && gor.heads().len() == 1;
            detail.push(format!("{doc}: {} triples, {} revisions", expected.len(), gor.len()));
        } else {
            reachable = false;
        }
    }
    out.check("heads_equal", converged, detail.join("; "));
    out.check("one_master", one_master, "exactly one master per document, agreed by every agent");
    out.check("history_reachable", reachable, "every revision in the master's graph of revisions is an ancestor of its head");
    out.check("frames_decoded", world.decode_errors() == 0, format!("{} undecodable frames", world.decode_errors()));
}

/// No delivery crossed groups while either endpoint's group was cut off.
pub(crate) fn partition_check(out: &mut RunOutput, world: &World) {
    let crossing = world
        .net
        .log()
        .iter()
        .filter(|r| r.action == LogAction::Deliver)
        .filter(|r| {
            let (g1, g2) = (world.net.group_of(r.from), world.net.group_of(r.to));
            g1 != g2 && (g1.is_some_and(|g| world.net.isolated(g, r.time)) || g2.is_some_and(|g| world.net.isolated(g, r.time)))
        })
        .count();
    out.check("no_cross_partition_delivery", crossing == 0, format!("{crossing} deliveries across a cut"));
}

/// Random inserts and removals of each agent's own triples.
pub(crate) fn schedule_edits(world: &mut World, rng: &mut ChaCha8Rng, agents: &[(Uuid, String)], docs: &[String], start: SimTime, end: SimTime, period: SimTime) -> Oracle {
    let mut oracle: Oracle = docs.iter().map(|d| (d.clone(), BTreeSet::new())).collect();
    let mut counters: BTreeMap<(Uuid, usize), usize> = BTreeMap::new();
    let mut live: BTreeMap<(Uuid, usize), Vec<Triple>> = BTreeMap::new();
    for (id, name) in agents {
        let mut t = start + rng.gen_range(0..period);
        while t < end {
            let d = rng.gen_range(0..docs.len());
            let n = counters.entry((*id, d)).or_default();
            let ins: Vec<Triple> = (0..2)
                .map(|_| {
                    *n += 1;
                    owned_triple(name, *n)
                })
                .collect();
            let own = live.entry((*id, d)).or_default();
            let rem: Vec<Triple> = if !own.is_empty() && rng.gen_bool(0.5) {
                vec![own.swap_remove(rng.gen_range(0..own.len()))]
            } else {
                Vec::new()
            };
            own.extend(ins.iter().cloned());
            let set = oracle.get_mut(&docs[d]).expect("known doc");
            for r in &rem {
                set.remove(r);
            }
            set.extend(ins.iter().cloned());
            world.schedule_edit(t, *id, &docs[d], Delta::new(ins, rem).expect("disjoint"));
            t += period + rng.gen_range(0..period / 5);
        }
    }
    oracle
}

/// Twelve agents in three groups; each group is cut off once while
/// everyone keeps editing.
pub fn partition_12(p: &Params) -> Result<RunOutput> {
    let n = bounded("agents", p.agents.unwrap_or(12), 2, 64)?;
    let m = bounded("docs", p.docs.unwrap_or(1), 1, 20)?;
    let loss = p.loss.unwrap_or(0.01);
    let groups = 3.min(n);
    let mut out = RunOutput::new("partition-12");
    p.record(&mut out);
    out.param("agents", n);
    out.param("docs", m);
    out.param("loss", loss);

    let policy = LinkPolicy {
        latency: Latency::Uniform { min: 2, max: 10 },
        loss,
        ..LinkPolicy::reliable(2)
    };
    let mut world = World::new(p.seed, policy)?;
    let docs: Vec<String> = (0..m).map(doc_uri).collect();
    let config = AgentConfig {
        merge_cost: MergeCost::Linear {
            base_ms: 2,
            per_kilo_triple_ms: 10,
        },
        ..AgentConfig::default()
    };
    let mut agents = Vec::new();
    for i in 0..n {
        let name = format!("u{i:02}");
        let id = world.add_agent(i, &name, i * groups / n, config, p.seed ^ (i as u64 + 1) << 32, &docs);
        agents.push((id, name));
    }
    if !p.no_partitions {
        let windows = (0..groups)
            .map(|g| PartitionWindow {
                group: g,
                start: 15_000 + 15_000 * g as SimTime,
                end: 25_000 + 15_000 * g as SimTime,
            })
            .collect();
        world.set_partition(windows)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let oracle = schedule_edits(&mut world, &mut rng, &agents, &docs, EDIT_START, EDIT_END, 1000);

    out.metrics = timeline_table();
    let mut t = 0;
    while t < EDIT_END {
        t += SAMPLE_MS;
        world.run_until(t);
        sample(&world, &docs, t, &mut out.metrics);
    }
    let mut quiet_at = None;
    while t < EDIT_END + QUIESCE_LIMIT {
        t += SAMPLE_MS;
        world.run_until(t);
        sample(&world, &docs, t, &mut out.metrics);
        if settled(&world, &oracle) {
            quiet_at = Some(t);
            break;
        }
    }
    out.note(match quiet_at {
        Some(q) => format!("quiescent {} ms after the last edit window closed", q - EDIT_END),
        None => "not quiescent within the limit".to_string(),
    });
    final_checks(&mut out, &world, &oracle);
    partition_check(&mut out, &world);
    let s = world.net.stats();
    out.note(format!("messages: sent {} delivered {} lost {} partitioned {} duplicated {}", s.sent, s.delivered, s.lost, s.partitioned, s.duplicated));
    let events = world.drain_events();
    world_artifacts(&mut out, &world, &events, &docs)?;
    Ok(out)
}
