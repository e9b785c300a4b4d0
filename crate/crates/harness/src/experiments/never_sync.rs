use std::collections::BTreeSet;

use anyhow::Result;
use graphsync::agent::{AgentConfig, MergeCost, SyncPolicy};
use graphsync::Revision;
use graphsync_netsim::{LinkPolicy, SimTime};

use super::artifacts::agent_events_table;
use super::{insert_delta, owned_triple, owner_of, Params};
use crate::output::{RunOutput, Table};
use crate::row;
use crate::sim::World;

const DOC: &str = "urn:gs:never-sync";
const EDIT_PERIOD: SimTime = 100;
const LATENCY: SimTime = 10;
const MERGE_MS: i64 = 85;
const RUN_MS: SimTime = 10_000;
const SAMPLE_MS: SimTime = 10;
const TAIL_MS: SimTime = 5_000;

/// Convergence-time budget after the last edit, with one document.
pub struct TotalTime {
    pub select: i64,
    pub merge: i64,
    pub communicate: i64,
    pub update: i64,
}

impl TotalTime {
    /// Master known up front; the last edits need at most three merges
    /// (pending pair, rebased copy, own edit) and four one-hop transfers.
    pub fn for_run() -> Self {
        TotalTime {
            select: 0,
            merge: 3 * MERGE_MS,
            communicate: 4 * LATENCY,
            update: 0,
        }
    }

    pub fn total(&self) -> i64 {
        self.select + self.merge + self.communicate + self.update
    }
}

struct PolicyRun {
    foreign_in_b: usize,
    foreign_in_a: usize,
    converged_after: Option<SimTime>,
}

fn label(policy: SyncPolicy) -> &'static str {
    match policy {
        SyncPolicy::MergeOnly => "merge-only",
        SyncPolicy::MergeRebase => "merge-rebase",
    }
}

fn run_policy(p: &Params, policy: SyncPolicy, metrics: &mut Table, events: &mut Table) -> Result<PolicyRun> {
    let mut world = World::new(p.seed, LinkPolicy::reliable(LATENCY))?;
    world.net.disable_log();
    let config = AgentConfig {
        policy,
        merge_cost: MergeCost::Fixed(MERGE_MS),
        ..AgentConfig::default()
    };
    let docs = [DOC.to_string()];
    let a = world.add_agent(0, "a", 0, config, p.seed, &docs);
    let b = world.add_agent(1, "b", 0, config, p.seed.wrapping_add(1), &docs);
    for id in [a, b] {
        world.agent_mut(id).assume_master(DOC, a, Revision::root_hash());
    }

    let mut oracle = BTreeSet::new();
    let edits = RUN_MS / EDIT_PERIOD;
    for n in 0..edits as usize {
        let at = n as SimTime * EDIT_PERIOD;
        for (id, name) in [(a, "a"), (b, "b")] {
            let t = owned_triple(name, n);
            oracle.insert(t.clone());
            world.schedule_edit(at, id, DOC, insert_delta([t]));
        }
    }
    let last_edit = (edits - 1) * EDIT_PERIOD;

    let foreign = |world: &World, id, other: &str| world.agent(id).graph(DOC).map_or(0, |g| g.triples().iter().filter(|t| owner_of(t) == Some(other)).count());
    let mut run = PolicyRun {
        foreign_in_b: 0,
        foreign_in_a: 0,
        converged_after: None,
    };
    let mut t = 0;
    while t < RUN_MS {
        t += SAMPLE_MS;
        world.run_until(t);
        let (in_b, in_a) = (foreign(&world, b, "a"), foreign(&world, a, "b"));
        run.foreign_in_b = run.foreign_in_b.max(in_b);
        run.foreign_in_a = run.foreign_in_a.max(in_a);
        if t % EDIT_PERIOD == EDIT_PERIOD / 2 {
            for (id, foreign_count) in [(a, in_a), (b, in_b)] {
                let head = world.agent(id).doc(DOC).expect("subscribed").current();
                let triples = world.agent(id).graph(DOC).map_or(0, |g| g.len());
                metrics.push(row![label(policy), t, world.name(id), head, triples, foreign_count]);
            }
        }
    }
    let complete = |w: &World| w.graphs(DOC).values().all(|g| g.triples() == &oracle);
    if world.run_while(RUN_MS + TAIL_MS, 1, complete) {
        run.converged_after = Some(world.clock() - last_edit);
    }
    let drained = world.drain_events();
    for row in agent_events_table(&world, &drained).rows {
        let mut r = vec![label(policy).to_string()];
        r.extend(row);
        events.push(r);
    }
    Ok(run)
}

/// Two agents editing every 100 ms while merges take 85 ms: merge-only never
/// shows the master's triples to the other agent, rebase does.
pub fn never_sync(p: &Params) -> Result<RunOutput> {
    let mut out = RunOutput::new("never-sync");
    p.record(&mut out);
    out.param("edit_period_ms", EDIT_PERIOD);
    out.param("latency_ms", LATENCY);
    out.param("merge_ms", MERGE_MS);
    out.param("run_ms", RUN_MS);
    out.metrics = Table::new(&["policy", "time", "agent", "head", "triples", "foreign_triples"]);
    let mut events = Table::new(&["policy", "time", "agent", "uri", "event", "detail"]);

    let only = run_policy(p, SyncPolicy::MergeOnly, &mut out.metrics, &mut events)?;
    out.check(
        "merge_only_b_never_sees_a",
        only.foreign_in_b == 0,
        format!("max A-authored triples in B's head during the run: {}", only.foreign_in_b),
    );
    out.note(format!("merge-only: master saw up to {} of B's triples; tail convergence {:?} ms after last edit", only.foreign_in_a, only.converged_after));

    let rebase = run_policy(p, SyncPolicy::MergeRebase, &mut out.metrics, &mut events)?;
    let budget = TotalTime::for_run();
    out.note(format!(
        "T_Total = T_S {} + T_M {} + T_C {} + T_U {} = {} ms",
        budget.select,
        budget.merge,
        budget.communicate,
        budget.update,
        budget.total()
    ));
    out.param("t_total_ms", budget.total());
    let detail = match rebase.converged_after {
        Some(ms) => format!("converged {ms} ms after last edit, budget {} ms", budget.total()),
        None => "did not converge".to_string(),
    };
    out.check(
        "merge_rebase_converges_within_t_total",
        rebase.converged_after.is_some_and(|ms| ms <= budget.total()),
        detail,
    );
    out.check("merge_rebase_b_sees_a", rebase.foreign_in_b > 0, format!("max A-authored triples in B's head: {}", rebase.foreign_in_b));
    out.file("agent_events.csv", events.to_csv());
    Ok(out)
}
