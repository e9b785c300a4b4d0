use anyhow::Result;
use graphsync::agent::AgentConfig;
use graphsync::dataset::{self, Payload};
use graphsync::transfer::{PayloadStore, ReceiverOutcome, TransferPlan, CHUNK_SIZE};
use graphsync::Revision;
use graphsync_netsim::{Latency, LinkPolicy, SimTime};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uuid::Uuid;

use super::{bounded, Params};
use crate::output::{sha256_hex, RunOutput, Table};
use crate::row;
use crate::sim::World;

const META: &str = "urn:gs:fuzz";
const DATASET: &str = "urn:gs:dataset/fuzz";
const PAYLOAD_BYTES: usize = 1024 * 1024;
const RECEIVERS: usize = 3;
const START: SimTime = 100;
const LIMIT: SimTime = 300_000;
/// The injected bad chunk is sent this many times so loss cannot hide it.
const CORRUPT_COPIES: SimTime = 10;

pub fn fuzz_policy() -> LinkPolicy {
    LinkPolicy {
        latency: Latency::Uniform { min: 2, max: 10 },
        loss: 0.2,
        duplicate: 0.05,
        reorder: 0.1,
    }
}

struct Case {
    ok: bool,
    failures: Vec<String>,
}

fn run_case(seed: u64, corrupt: bool, policy: LinkPolicy, table: &mut Table) -> Result<Case> {
    let mut world = World::new(seed, policy)?;
    world.net.disable_log();
    world.transfer.record_in = Some(META.to_string());
    let docs = [META.to_string()];
    let ids: Vec<Uuid> = (0..=RECEIVERS)
        .map(|i| world.add_agent(i, &format!("n{i}"), 0, AgentConfig::default(), seed.wrapping_add(i as u64), &docs))
        .collect();
    let (sender, receivers) = (ids[0], ids[1..].to_vec());
    for &id in &ids {
        world.agent_mut(id).assume_master(META, sender, Revision::root_hash());
    }
    let mut bytes = vec![0u8; PAYLOAD_BYTES];
    ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut bytes);
    let payload = Payload::from_bytes(DATASET, dataset::LIDAR_SCAN, &bytes, CHUNK_SIZE);
    let source_sha = sha256_hex(&payload.to_bytes());
    world.store_mut(sender).insert(payload);
    let plan = TransferPlan {
        dataset: DATASET.to_string(),
        sender,
        receivers: receivers.clone(),
    };
    world.schedule_transfer(START, plan, dataset::LIDAR_SCAN, PAYLOAD_BYTES as u64);
    if corrupt {
        let bad_seq = (PAYLOAD_BYTES / CHUNK_SIZE + 3) as u64;
        for k in 0..CORRUPT_COPIES {
            world.schedule_corrupt_chunk(START + 5 + k, sender, receivers[0], DATASET, bad_seq, 16);
        }
    }
    world.run_while(LIMIT, 50, |w| w.transfers().len() >= RECEIVERS && w.active_transfers() == 0);

    let mut case = Case { ok: true, failures: Vec::new() };
    let mut fail = |why: String| {
        case.ok = false;
        case.failures.push(format!("seed {seed} {}: {why}", if corrupt { "corrupt" } else { "clean" }));
    };
    let sender_rec = world.sender_records().iter().find(|r| r.sender == sender).cloned();
    match &sender_rec {
        Some(s) if s.trace_ok => {}
        Some(_) => fail("throttle trace does not match received ThrottleUp/Down".into()),
        None => fail("sender never finished".into()),
    }
    if corrupt && !sender_rec.as_ref().is_some_and(|s| s.aborted) {
        fail("sender did not abort".into());
    }
    for &r in &receivers {
        let rec = world.transfers().iter().find(|t| t.receiver == r).cloned();
        let stored = world.store(r).get(DATASET).ok().flatten();
        let sha = stored.as_ref().map(|p| sha256_hex(&p.to_bytes()));
        let has = world.agent(r).graph(META).is_some_and(|g| dataset::holders(&g, DATASET).contains(&r));
        let partial = world.store(r).has_partial(DATASET);
        let (outcome, at, ups, downs) = match &rec {
            Some(t) => (
                match &t.outcome {
                    ReceiverOutcome::Committed { .. } => "committed",
                    ReceiverOutcome::Aborted { .. } => "aborted",
                },
                t.at,
                t.throttle_ups,
                t.throttle_downs,
            ),
            None => ("unfinished", -1, 0, 0),
        };
        if corrupt {
            if outcome != "aborted" || stored.is_some() || partial || has {
                fail(format!("receiver {r}: {outcome}, stored={} partial={partial} has={has}", stored.is_some()));
            }
        } else if outcome != "committed" || sha.as_deref() != Some(source_sha.as_str()) || !has {
            fail(format!("receiver {r}: {outcome}, hash match={}, has={has}", sha.as_deref() == Some(source_sha.as_str())));
        }
        let s = sender_rec.clone().unwrap_or_default();
        table.push(row![
            seed,
            if corrupt { "corrupt" } else { "clean" },
            world.name(r),
            outcome,
            stored.as_ref().map_or(0, |p| p.total_bytes()),
            sha.as_deref() == Some(source_sha.as_str()),
            ups,
            downs,
            at,
            s.data_frames,
            s.final_tau,
            s.trace_ok
        ]);
    }
    Ok(case)
}

/// Many seeded transfers of one payload to three receivers over a lossy,
/// duplicating, reordering network, each paired with a run where a bad
/// chunk is injected.
pub fn transfer_fuzz(p: &Params) -> Result<RunOutput> {
    let runs = bounded("runs", p.runs.unwrap_or(200), 1, 100_000)?;
    let mut policy = fuzz_policy();
    if let Some(l) = p.loss {
        policy.loss = l;
    }
    let mut out = RunOutput::new("transfer-fuzz");
    p.record(&mut out);
    out.param("runs", runs);
    out.param("payload_bytes", PAYLOAD_BYTES);
    out.param("chunk_bytes", CHUNK_SIZE);
    out.metrics = Table::new(&[
        "seed",
        "case",
        "receiver",
        "outcome",
        "bytes",
        "hash_match",
        "throttle_ups",
        "throttle_downs",
        "finished_at",
        "sender_data_frames",
        "sender_final_tau",
        "sender_trace_ok",
    ]);
    let (mut clean_fail, mut corrupt_fail) = (Vec::new(), Vec::new());
    for r in 0..runs {
        let seed = p.seed.wrapping_add(r as u64);
        let clean = run_case(seed, false, policy.clone(), &mut out.metrics)?;
        clean_fail.extend(clean.failures);
        let bad = run_case(seed, true, policy.clone(), &mut out.metrics)?;
        corrupt_fail.extend(bad.failures);
    }
    let first = |v: &Vec<String>| v.first().cloned().unwrap_or_default();
    out.check(
        "all_receivers_hash_identical",
        clean_fail.is_empty(),
        format!("{} failures over {runs} runs {}", clean_fail.len(), first(&clean_fail)),
    );
    out.check(
        "validation_failure_aborts",
        corrupt_fail.is_empty(),
        format!("{} failures over {runs} runs {}", corrupt_fail.len(), first(&corrupt_fail)),
    );
    Ok(out)
}
