use std::collections::BTreeSet;

use anyhow::{bail, Context, Result};
use graphsync::agent::AgentConfig;
use graphsync::dataset::{self, DatasetMeta, DatasetRelation, Payload, Rect};
use graphsync::transfer::{plan_transfer, Holder, PayloadStore, ReceiverOutcome, CHUNK_SIZE};
use graphsync::{Delta, Revision};
use graphsync_netsim::{Latency, LinkPolicy, SimTime};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uuid::Uuid;

use super::{world_artifacts, Params};
use crate::output::{sha256_hex, RunOutput, Table};
use crate::row;
use crate::sim::World;

const META: &str = "urn:gs:mapping";
const PAYLOAD_BYTES: usize = 300 * 1024;
const GRID: usize = 256;

fn ds(name: &str) -> String {
    format!("urn:gs:dataset/{name}")
}

/// Area of `target` left uncovered, counted on a grid of cell centers.
pub fn grid_uncovered_area(target: &Rect, covered: &[Rect], grid: usize) -> f64 {
    let (w, h) = (target.width() / grid as f64, target.height() / grid as f64);
    let mut cells = 0usize;
    for i in 0..grid {
        for j in 0..grid {
            let x = target.min_x + (i as f64 + 0.5) * w;
            let y = target.min_y + (j as f64 + 0.5) * h;
            if !covered.iter().any(|c| c.contains_point(x, y)) {
                cells += 1;
            }
        }
    }
    cells as f64 * w * h
}

struct Team {
    world: World,
    rng: ChaCha8Rng,
}

impl Team {
    fn graph(&self, viewer: Uuid) -> graphsync::Graph {
        self.world.agent(viewer).graph(META).expect("subscribed")
    }

    /// `agent` records a dataset it just captured and holds its payload.
    fn capture(&mut self, agent: Uuid, name: &str, coverage: Rect) -> Result<String> {
        let uri = ds(name);
        let mut bytes = vec![0u8; PAYLOAD_BYTES];
        self.rng.fill_bytes(&mut bytes);
        self.world
            .store_mut(agent)
            .insert(Payload::from_bytes(&uri, dataset::IMAGE, &bytes, CHUNK_SIZE));
        let meta = DatasetMeta::new(&uri, coverage, dataset::IMAGE);
        let triples = dataset::dataset_to_triples(
            &meta,
            &[
                DatasetRelation::Has { agent, dataset: uri.clone() },
                DatasetRelation::CreatedBy { dataset: uri.clone(), agent },
            ],
        )?;
        let at = self.world.clock();
        self.world.schedule_edit(at, agent, META, Delta::new(triples, [])?);
        Ok(uri)
    }

    /// Plans from `receiver`'s view of the metadata and runs the transfer
    /// to completion.
    fn fetch(&mut self, receiver: Uuid, uri: &str) -> Result<ReceiverOutcome> {
        let holders: Vec<Holder> = dataset::holders(&self.graph(receiver), uri)
            .into_iter()
            .map(|agent| Holder { agent, bandwidth: 1, load: 0 })
            .collect();
        let plan = plan_transfer(uri, &holders, &[receiver])?;
        let total = self
            .world
            .store(plan.sender)
            .get(uri)?
            .with_context(|| format!("{uri} missing at its holder"))?
            .total_bytes();
        let at = self.world.clock();
        self.world.schedule_transfer(at, plan, dataset::IMAGE, total);
        let before = self.world.transfers().len();
        self.world.run_while(at + 30_000, 100, |w| w.transfers().len() > before && w.active_transfers() == 0);
        match self.world.transfers()[before..].iter().find(|r| r.receiver == receiver) {
            Some(r) => Ok(r.outcome.clone()),
            None => bail!("transfer of {uri} did not finish"),
        }
    }

    fn settle(&mut self, ms: SimTime) {
        let until = self.world.clock() + ms;
        self.world.run_until(until);
    }

    fn holds(&self, agent: Uuid, uri: &str) -> bool {
        self.world.store(agent).get(uri).ok().flatten().is_some()
    }
}

/// Three UAVs map missions A, B and C; the operator then plans mission D,
/// fetches what exists (B fails over a cut link), and has UAV0 fly the
/// uncovered remainder D'.
pub fn collab_mapping(p: &Params) -> Result<RunOutput> {
    let mut out = RunOutput::new("collab-mapping");
    p.record(&mut out);
    let policy = LinkPolicy {
        latency: Latency::Uniform { min: 2, max: 10 },
        ..LinkPolicy::reliable(2)
    };
    let mut world = World::new(p.seed, policy)?;
    world.transfer.record_in = Some(META.to_string());
    let docs = [META.to_string()];
    let names = ["uav0", "uav1", "uav2", "op"];
    let ids: Vec<Uuid> = names
        .iter()
        .enumerate()
        .map(|(i, n)| world.add_agent(i, n, 0, AgentConfig::default(), p.seed.wrapping_add(i as u64), &docs))
        .collect();
    let (uav0, uav1, uav2, op) = (ids[0], ids[1], ids[2], ids[3]);
    for &id in &ids {
        world.agent_mut(id).assume_master(META, op, Revision::root_hash());
    }
    let mut team = Team {
        world,
        rng: ChaCha8Rng::seed_from_u64(p.seed),
    };

    team.settle(1000);
    let rect_a = Rect::new(0.0, 0.0, 100.0, 100.0)?;
    let rect_b = Rect::new(100.0, 0.0, 200.0, 100.0)?;
    let rect_c = Rect::new(0.0, 100.0, 100.0, 200.0)?;
    let a = team.capture(uav0, "mission-a", rect_a)?;
    let b = team.capture(uav1, "mission-b", rect_b)?;
    let c = team.capture(uav2, "mission-c", rect_c)?;
    team.settle(4000);
    out.check("metadata_synced", dataset::datasets(&team.graph(op)).len() == 3, "operator sees missions A, B and C");

    let c_outcome = team.fetch(op, &c)?;
    out.note(format!("C -> op: {c_outcome:?}"));

    let mission_d = Rect::new(0.0, 0.0, 256.0, 256.0)?;
    let found: BTreeSet<String> = dataset::discover(&team.graph(op), &mission_d).into_iter().map(|(d, _)| d).collect();
    let expected: BTreeSet<String> = [a.clone(), b.clone(), c.clone()].into();
    out.check("discover_mission_d", found == expected, format!("{} datasets overlap D", found.len()));

    team.world.net.block(uav1, op);
    team.world.net.block(op, uav1);
    let a_outcome = team.fetch(op, &a)?;
    let b_outcome = team.fetch(op, &b)?;
    out.note(format!("A -> op: {a_outcome:?}; B -> op over a cut link: {b_outcome:?}"));
    out.check("b_transfer_failed", matches!(b_outcome, ReceiverOutcome::Aborted { .. }), "injected uav1/op failure aborts B");
    team.world.net.unblock(uav1, op);
    team.world.net.unblock(op, uav1);

    let known: Vec<Rect> = dataset::datasets(&team.graph(op))
        .into_values()
        .filter(|m| mission_d.intersects(&m.coverage))
        .map(|m| m.coverage)
        .collect();
    let pieces = dataset::remaining_region(&mission_d, &known);
    let area: f64 = pieces.iter().map(Rect::area).sum();
    let oracle = grid_uncovered_area(&mission_d, &known, GRID);
    let cell = mission_d.area() / (GRID * GRID) as f64;
    let disjoint = pieces.iter().enumerate().all(|(i, x)| pieces[i + 1..].iter().all(|y| !x.intersects(y)) && known.iter().all(|k| !x.intersects(k)));
    out.check(
        "remaining_region_area",
        (area - oracle).abs() <= cell && disjoint,
        format!("D' = {} pieces, area {area:.1}, grid oracle {oracle:.1}, cell {cell:.2}", pieces.len()),
    );

    let mut d_prime = Vec::new();
    for (k, piece) in pieces.iter().enumerate() {
        d_prime.push(team.capture(uav0, &format!("mission-d-prime-{k}"), *piece)?);
    }
    team.settle(3000);
    let mut d_ok = !d_prime.is_empty();
    for uri in &d_prime {
        d_ok &= matches!(team.fetch(op, uri)?, ReceiverOutcome::Committed { .. });
    }
    team.settle(3000);

    out.metrics = Table::new(&["agent", "A", "B", "C", "D'"]);
    let mark = |held: bool| if held { "X" } else { "-" };
    for (i, &id) in ids.iter().enumerate() {
        let dp = !d_prime.is_empty() && d_prime.iter().all(|u| team.holds(id, u));
        out.metrics.push(row![names[i], mark(team.holds(id, &a)), mark(team.holds(id, &b)), mark(team.holds(id, &c)), mark(dp)]);
    }
    let op_row = out.metrics.rows.last().expect("op row")[1..].join(",");
    out.check("operator_holdings", op_row == "X,-,X,X" && d_ok, format!("op holds {op_row}"));

    let integrity = team.world.transfers().iter().all(|r| match r.outcome {
        ReceiverOutcome::Committed { .. } => {
            let sha = |id: Uuid| team.world.store(id).get(&r.dataset).ok().flatten().map(|p| sha256_hex(&p.to_bytes()));
            sha(r.sender).is_some() && sha(r.sender) == sha(r.receiver)
        }
        ReceiverOutcome::Aborted { .. } => !team.world.store(r.receiver).has_partial(&r.dataset),
    });
    out.check("transfer_integrity", integrity, "committed copies are byte-identical, aborted ones leave nothing");
    let recorded = team.world.recorded_holders(META, op, &a).contains(&op) && !team.world.recorded_holders(META, op, &b).contains(&op);
    out.check("holdings_recorded", recorded, "operator's metadata records it holds A and not B");
    let events = team.world.drain_events();
    world_artifacts(&mut out, &team.world, &events, &docs)?;
    Ok(out)
}
