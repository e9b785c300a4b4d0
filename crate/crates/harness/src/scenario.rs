//! Declarative scenarios: a line-oriented `key = value` file describing the
//! team, the network and the workload.
//!
//! ```text
//! seed = 7
//! agents = 6
//! groups = 2
//! latency = uniform 2 10
//! loss = 0.01
//! policy = merge-rebase
//! merge_cost = linear 2 10
//! docs = 2
//! partition = 1 10000 20000
//! edits = 2000 30000 1000
//! edit = 500 0 1 3 0
//! transfer = 4000 0 1,2 200000
//! duration = 60000
//! ```
//!
//! `partition` is `group start end`; `edits` is `start end period` for every
//! agent on random documents; `edit` is `time agent doc inserts removes`;
//! `transfer` is `time sender receivers bytes`. Times are milliseconds.

use std::collections::{BTreeMap, BTreeSet};

use anyhow::{anyhow, bail, Context, Result};
use graphsync::agent::{AgentConfig, MergeCost, SyncPolicy};
use graphsync::dataset::{self, Payload};
use graphsync::transfer::{PayloadStore, ReceiverOutcome, TransferPlan, CHUNK_SIZE};
use graphsync::{Delta, Triple};
use graphsync_netsim::{Latency, LinkPolicy, PartitionWindow, SimTime};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uuid::Uuid;

use crate::experiments::{owned_triple, world_artifacts};
use crate::output::{sha256_hex, RunOutput};
use crate::sim::World;

#[derive(Debug, Clone, PartialEq)]
pub struct EditLine {
    pub at: SimTime,
    pub agent: usize,
    pub doc: usize,
    pub inserts: usize,
    pub removes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferLine {
    pub at: SimTime,
    pub sender: usize,
    pub receivers: Vec<usize>,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub agents: usize,
    pub groups: usize,
    pub policy: LinkPolicy,
    pub sync: SyncPolicy,
    pub merge_cost: MergeCost,
    pub docs: usize,
    pub partitions: Vec<PartitionWindow>,
    pub edits: Vec<EditLine>,
    pub periodic: Vec<(SimTime, SimTime, SimTime)>,
    pub transfers: Vec<TransferLine>,
    pub duration: SimTime,
}

fn nums<T: std::str::FromStr>(value: &str, n: usize, key: &str) -> Result<Vec<T>> {
    let v: Vec<T> = value
        .split_whitespace()
        .map(|s| s.parse::<T>().map_err(|_| anyhow!("{key}: bad number `{s}`")))
        .collect::<Result<_>>()?;
    if v.len() != n {
        bail!("{key}: expected {n} fields, got {}", v.len());
    }
    Ok(v)
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario> {
        let mut s = Scenario {
            seed: 0,
            agents: 0,
            groups: 1,
            policy: LinkPolicy::default(),
            sync: SyncPolicy::MergeRebase,
            merge_cost: MergeCost::Free,
            docs: 1,
            partitions: Vec::new(),
            edits: Vec::new(),
            periodic: Vec::new(),
            transfers: Vec::new(),
            duration: 0,
        };
        let mut seen = BTreeSet::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').with_context(|| format!("line {}: expected key = value", no + 1))?;
            let (key, value) = (key.trim(), value.trim());
            let ctx = || format!("line {}", no + 1);
            seen.insert(key.to_string());
            match key {
                "seed" => s.seed = value.parse().with_context(ctx)?,
                "agents" => s.agents = value.parse().with_context(ctx)?,
                "groups" => s.groups = value.parse().with_context(ctx)?,
                "docs" => s.docs = value.parse().with_context(ctx)?,
                "duration" => s.duration = value.parse().with_context(ctx)?,
                "loss" => s.policy.loss = value.parse().with_context(ctx)?,
                "duplicate" => s.policy.duplicate = value.parse().with_context(ctx)?,
                "reorder" => s.policy.reorder = value.parse().with_context(ctx)?,
                "latency" => {
                    let mut it = value.split_whitespace();
                    s.policy.latency = match it.next() {
                        Some("fixed") => Latency::Fixed(nums(&it.collect::<Vec<_>>().join(" "), 1, key)?[0]),
                        Some("uniform") => {
                            let v = nums(&it.collect::<Vec<_>>().join(" "), 2, key)?;
                            Latency::Uniform { min: v[0], max: v[1] }
                        }
                        _ => bail!("{}: latency is `fixed MS` or `uniform MIN MAX`", ctx()),
                    }
                }
                "policy" => {
                    s.sync = match value {
                        "merge-only" => SyncPolicy::MergeOnly,
                        "merge-rebase" => SyncPolicy::MergeRebase,
                        _ => bail!("{}: unknown policy `{value}`", ctx()),
                    }
                }
                "merge_cost" => {
                    let mut it = value.splitn(2, ' ');
                    let rest = it.clone().nth(1).unwrap_or("");
                    s.merge_cost = match it.next() {
                        Some("free") => MergeCost::Free,
                        Some("fixed") => MergeCost::Fixed(nums(rest, 1, key)?[0]),
                        Some("linear") => {
                            let v: Vec<i64> = nums(rest, 2, key)?;
                            MergeCost::Linear {
                                base_ms: v[0],
                                per_kilo_triple_ms: v[1],
                            }
                        }
                        _ => bail!("{}: merge_cost is `free`, `fixed MS` or `linear BASE PER_KILO`", ctx()),
                    }
                }
                "partition" => {
                    let v: Vec<i64> = nums(value, 3, key)?;
                    s.partitions.push(PartitionWindow {
                        group: usize::try_from(v[0]).with_context(ctx)?,
                        start: v[1],
                        end: v[2],
                    });
                }
                "edits" => {
                    let v: Vec<i64> = nums(value, 3, key)?;
                    if v[2] <= 0 {
                        bail!("{}: edit period must be positive", ctx());
                    }
                    s.periodic.push((v[0], v[1], v[2]));
                }
                "edit" => {
                    let v: Vec<i64> = nums(value, 5, key)?;
                    let u = |i: usize| usize::try_from(v[i]).with_context(ctx);
                    s.edits.push(EditLine {
                        at: v[0],
                        agent: u(1)?,
                        doc: u(2)?,
                        inserts: u(3)?,
                        removes: u(4)?,
                    });
                }
                "transfer" => {
                    let f: Vec<&str> = value.split_whitespace().collect();
                    if f.len() != 4 {
                        bail!("{}: transfer is `time sender receivers bytes`", ctx());
                    }
                    s.transfers.push(TransferLine {
                        at: f[0].parse().with_context(ctx)?,
                        sender: f[1].parse().with_context(ctx)?,
                        receivers: f[2].split(',').map(|r| r.parse().with_context(ctx)).collect::<Result<_>>()?,
                        bytes: f[3].parse().with_context(ctx)?,
                    });
                }
                _ => bail!("{}: unknown key `{key}`", ctx()),
            }
        }
        for required in ["seed", "agents", "duration"] {
            if !seen.contains(required) {
                bail!("missing required key `{required}`");
            }
        }
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if self.agents < 1 || self.groups < 1 || self.groups > self.agents || self.docs < 1 {
            bail!("need agents >= groups >= 1 and docs >= 1");
        }
        self.policy.validate()?;
        for w in &self.partitions {
            if w.group >= self.groups || w.start >= w.end {
                bail!("bad partition window for group {}", w.group);
            }
        }
        for e in &self.edits {
            if e.agent >= self.agents || e.doc >= self.docs {
                bail!("edit refers to unknown agent {} or doc {}", e.agent, e.doc);
            }
        }
        for t in &self.transfers {
            if t.sender >= self.agents || t.receivers.iter().any(|r| *r >= self.agents || *r == t.sender) || t.receivers.is_empty() {
                bail!("transfer at {} has bad endpoints", t.at);
            }
        }
        Ok(())
    }

    /// All edits, periodic ones expanded, in time order.
    fn expanded_edits(&self, rng: &mut ChaCha8Rng) -> Vec<EditLine> {
        let mut all = self.edits.clone();
        for &(start, end, period) in &self.periodic {
            for agent in 0..self.agents {
                let mut t = start + rng.gen_range(0..period);
                while t < end {
                    all.push(EditLine {
                        at: t,
                        agent,
                        doc: rng.gen_range(0..self.docs),
                        inserts: 2,
                        removes: rng.gen_range(0..=1),
                    });
                    t += period;
                }
            }
        }
        all.sort_by_key(|e| (e.at, e.agent, e.doc));
        all
    }
}

fn doc_uri(d: usize) -> String {
    format!("urn:gs:doc{d}")
}

/// Builds the world, runs it for the scenario's duration and checks
/// convergence and transfer integrity at the end.
pub fn run_scenario(s: &Scenario) -> Result<RunOutput> {
    let mut out = RunOutput::new("scenario");
    out.param("seed", s.seed);
    out.param("agents", s.agents);
    out.param("docs", s.docs);
    out.param("duration", s.duration);
    let mut world = World::new(s.seed, s.policy.clone())?;
    let docs: Vec<String> = (0..s.docs).map(doc_uri).collect();
    let config = AgentConfig {
        policy: s.sync,
        merge_cost: s.merge_cost,
        ..AgentConfig::default()
    };
    let ids: Vec<Uuid> = (0..s.agents)
        .map(|i| world.add_agent(i, &format!("n{i:02}"), i * s.groups / s.agents, config, s.seed.wrapping_add(i as u64), &docs))
        .collect();
    world.set_partition(s.partitions.clone())?;

    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut oracle: BTreeMap<String, BTreeSet<Triple>> = docs.iter().map(|d| (d.clone(), BTreeSet::new())).collect();
    let mut live: BTreeMap<(usize, usize), Vec<Triple>> = BTreeMap::new();
    let mut next: BTreeMap<usize, usize> = BTreeMap::new();
    for e in s.expanded_edits(&mut rng) {
        let n = next.entry(e.agent).or_default();
        let name = format!("n{:02}", e.agent);
        let ins: Vec<Triple> = (0..e.inserts)
            .map(|_| {
                *n += 1;
                owned_triple(&name, *n)
            })
            .collect();
        let own = live.entry((e.agent, e.doc)).or_default();
        let rem: Vec<Triple> = (0..e.removes.min(own.len())).map(|_| own.swap_remove(rng.gen_range(0..own.len()))).collect();
        own.extend(ins.iter().cloned());
        let set = oracle.get_mut(&docs[e.doc]).expect("validated doc");
        for r in &rem {
            set.remove(r);
        }
        set.extend(ins.iter().cloned());
        world.schedule_edit(e.at, ids[e.agent], &docs[e.doc], Delta::new(ins, rem)?);
    }
    for (k, t) in s.transfers.iter().enumerate() {
        let uri = format!("urn:gs:dataset/s{k}");
        let mut bytes = vec![0u8; t.bytes];
        rng.fill_bytes(&mut bytes);
        world.store_mut(ids[t.sender]).insert(Payload::from_bytes(&uri, dataset::IMAGE, &bytes, CHUNK_SIZE));
        let plan = TransferPlan {
            dataset: uri,
            sender: ids[t.sender],
            receivers: t.receivers.iter().map(|r| ids[*r]).collect(),
        };
        world.schedule_transfer(t.at, plan, dataset::IMAGE, t.bytes as u64);
    }

    out.metrics = crate::experiments::partition_timeline();
    let mut t = 0;
    while t < s.duration {
        t = (t + 500).min(s.duration);
        world.run_until(t);
        crate::experiments::partition_sample(&world, &docs, t, &mut out.metrics);
    }
    crate::experiments::partition_final_checks(&mut out, &world, &oracle);
    let integrity = world.transfers().iter().all(|r| match r.outcome {
        ReceiverOutcome::Committed { .. } => {
            let sha = |id: Uuid| world.store(id).get(&r.dataset).ok().flatten().map(|p| sha256_hex(&p.to_bytes()));
            sha(r.sender).is_some() && sha(r.sender) == sha(r.receiver)
        }
        ReceiverOutcome::Aborted { .. } => !world.store(r.receiver).has_partial(&r.dataset),
    });
    let expected: usize = s.transfers.iter().map(|t| t.receivers.len()).sum();
    out.check(
        "transfers",
        integrity && world.transfers().len() == expected,
        format!("{} of {expected} receives finished", world.transfers().len()),
    );
    let events = world.drain_events();
    world_artifacts(&mut out, &world, &events, &docs)?;
    Ok(out)
}
