//! Files shared by the simulated experiments.

use std::fs;
use std::sync::atomic::{AtomicU64, Ordering};

use anyhow::Result;
use graphsync::agent::{AgentEvent, EventKind};
use graphsync::store;
use graphsync::transfer::{PayloadStore, ReceiverOutcome};
use uuid::Uuid;

use super::graph_digest;
use crate::output::{sha256_hex, RunOutput, Table};
use crate::row;
use crate::sim::World;

pub fn describe_event(kind: &EventKind) -> (&'static str, String) {
    match kind {
        EventKind::Created { hash, published } => ("created", format!("{hash} published={published}")),
        EventKind::Published(h) => ("published", h.to_string()),
        EventKind::Merged { hash, cost, stats } => ("merged", format!("{hash} cost={cost} touched={}", stats.triples_touched)),
        EventKind::Rebased { count, tip } => ("rebased", format!("{count} tip={tip}")),
        EventKind::FastForward(h) => ("fast_forward", h.to_string()),
        EventKind::ElectionStarted => ("election_started", String::new()),
        EventKind::ElectionRound(r) => ("election_round", r.to_string()),
        EventKind::ElectionDecided(w) => ("election_decided", w.to_string()),
        EventKind::PeerJoined(p) => ("peer_joined", p.to_string()),
        EventKind::PeerExpired(p) => ("peer_expired", p.to_string()),
        EventKind::RequestSent(n) => ("request_sent", n.to_string()),
        EventKind::RequestAnswered(n) => ("request_answered", n.to_string()),
        EventKind::Rejected(why) => ("rejected", why.clone()),
    }
}

pub(crate) fn agent_events_table(world: &World, events: &[(Uuid, AgentEvent)]) -> Table {
    let mut t = Table::new(&["time", "agent", "uri", "event", "detail"]);
    for (agent, ev) in events {
        let (name, detail) = describe_event(&ev.kind);
        t.push(row![ev.at, world.name(*agent), ev.uri, name, detail]);
    }
    t
}

/// One row per (document, agent): working head and its triple digest.
pub(crate) fn heads_table(world: &World, docs: &[String]) -> Table {
    let mut t = Table::new(&["doc", "agent", "name", "head", "triples", "digest", "master"]);
    for doc in docs {
        for (id, agent) in world.agents() {
            let (Some(state), Some(graph)) = (agent.doc(doc), agent.graph(doc)) else { continue };
            t.push(row![doc, id, world.name(*id), state.current().to_hex(), graph.len(), graph_digest(&graph), agent.is_master(doc)]);
        }
    }
    t
}

pub(crate) fn transfers_table(world: &World) -> Table {
    let mut t = Table::new(&["time", "dataset", "sender", "receiver", "outcome", "bytes", "source_sha256", "received_sha256", "throttle_ups", "throttle_downs"]);
    let sha = |id: Uuid, ds: &str| {
        world
            .store(id)
            .get(ds)
            .ok()
            .flatten()
            .map(|p| sha256_hex(&p.to_bytes()))
            .unwrap_or_default()
    };
    for r in world.transfers() {
        let (outcome, bytes) = match &r.outcome {
            ReceiverOutcome::Committed { total_bytes } => ("committed", *total_bytes),
            ReceiverOutcome::Aborted { .. } => ("aborted", 0),
        };
        let received = if outcome == "committed" { sha(r.receiver, &r.dataset) } else { String::new() };
        t.push(row![r.at, r.dataset, world.name(r.sender), world.name(r.receiver), outcome, bytes, sha(r.sender, &r.dataset), received, r.throttle_ups, r.throttle_downs]);
    }
    t
}

/// Serializes a document's graph of revisions in the store log format.
pub(crate) fn gor_log(world: &World, agent: Uuid, doc: &str) -> Result<Vec<u8>> {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let path = std::env::temp_dir().join(format!("graphsync-{}-{}.log", std::process::id(), COUNTER.fetch_add(1, Ordering::Relaxed)));
    let gor = world.agent(agent).doc(doc).expect("subscribed").gor();
    let saved = store::save(gor, &path);
    let bytes = saved.map_err(anyhow::Error::from).and_then(|()| Ok(fs::read(&path)?));
    let _ = fs::remove_file(&path);
    bytes
}

/// Adds the network log, agent events, heads, transfers and every agent's
/// revision log for `docs`.
pub fn world_artifacts(out: &mut RunOutput, world: &World, events: &[(Uuid, AgentEvent)], docs: &[String]) -> Result<()> {
    out.file("events.csv", world.net.log_csv().into_bytes());
    out.file("agent_events.csv", agent_events_table(world, events).to_csv());
    out.file("heads.csv", heads_table(world, docs).to_csv());
    if !world.transfers().is_empty() {
        out.file("transfers.csv", transfers_table(world).to_csv());
    }
    for (d, doc) in docs.iter().enumerate() {
        for id in world.agent_ids() {
            if world.agent(id).doc(doc).is_some() {
                out.file(&format!("gor_d{d}_{}.log", world.name(id)), gor_log(world, id, doc)?);
            }
        }
    }
    Ok(())
}
