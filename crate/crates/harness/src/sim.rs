//! A simulated team: agents and transfer sessions wired to the network.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use graphsync::agent::{self, Agent, AgentConfig, AgentEvent, Input, Outgoing};
use graphsync::dataset::{self, DatasetRelation, Payload};
use graphsync::transfer::{MemoryStore, PayloadStore, Receiver, ReceiverConfig, ReceiverOutcome, Sender, SenderConfig, TransferPlan};
use graphsync::wire::{AgentId, Body, Frame, TransferMsg};
use graphsync::{Delta, Graph, RevisionHash};
use graphsync_netsim::{Dest, Event, LinkPolicy, NetError, Network, Packet, PartitionWindow, SimTime};
use uuid::Uuid;

/// An encoded frame in flight.
#[derive(Debug, Clone)]
pub struct WirePacket {
    kind: &'static str,
    bytes: Arc<Vec<u8>>,
}

impl WirePacket {
    pub fn new(frame: &Frame) -> Self {
        WirePacket {
            kind: frame.kind_name(),
            bytes: Arc::new(frame.encode()),
        }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }
}

impl Packet for WirePacket {
    fn kind(&self) -> &str {
        self.kind
    }

    fn size(&self) -> usize {
        self.bytes.len()
    }
}

pub fn agent_uuid(index: usize) -> Uuid {
    Uuid::from_u128(0x5eed_0000_0000_0000_0000_0000_0000_0000 + index as u128 + 1)
}

/// Outcome of a finished receive, as seen by the harness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferRecord {
    pub at: SimTime,
    pub dataset: String,
    pub sender: Uuid,
    pub receiver: Uuid,
    pub outcome: ReceiverOutcome,
    pub throttle_ups: u32,
    pub throttle_downs: u32,
}

/// Throttle messages the sender applied, for the flow-control check.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SenderRecord {
    pub dataset: String,
    pub sender: Uuid,
    pub ups_received: u32,
    pub downs_received: u32,
    pub trace_ok: bool,
    pub final_tau: u32,
    pub aborted: bool,
    pub data_frames: u64,
}

struct Host {
    store: MemoryStore,
    senders: BTreeMap<String, (Sender, SenderRecord)>,
    receivers: BTreeMap<String, (Receiver, Uuid)>,
    /// Finished receivers, kept to repeat `Error` at a sender that missed it.
    closed: BTreeMap<String, (Receiver, Uuid)>,
    inbox: VecDeque<(Uuid, String, TransferMsg)>,
    busy_until: SimTime,
}

impl Host {
    fn new() -> Self {
        Host {
            store: MemoryStore::new(),
            senders: BTreeMap::new(),
            receivers: BTreeMap::new(),
            closed: BTreeMap::new(),
            inbox: VecDeque::new(),
            busy_until: 0,
        }
    }

    fn next_wakeup(&self) -> Option<SimTime> {
        let inbox = (!self.inbox.is_empty()).then_some(self.busy_until);
        self.senders
            .values()
            .filter_map(|(s, _)| s.next_wakeup())
            .chain(self.receivers.values().filter_map(|(r, _)| r.next_wakeup()))
            .chain(inbox)
            .min()
    }
}

#[derive(Debug, Clone)]
enum Action {
    Edit { agent: Uuid, uri: String, delta: Delta },
    Transfer { plan: TransferPlan, blob_type: String, total_bytes: u64 },
    Corrupt { from: Uuid, to: Uuid, dataset: String, sequence: u64, len: usize },
    Block { a: Uuid, b: Uuid, on: bool },
}

/// Knobs for the transfer sessions run inside the world.
#[derive(Debug, Clone)]
pub struct TransferSettings {
    pub sender: SenderConfig,
    /// Simulated time a receiver spends storing one chunk.
    pub chunk_cost_ms: SimTime,
    /// Document where committed receives are recorded as `has` triples.
    pub record_in: Option<String>,
}

impl Default for TransferSettings {
    fn default() -> Self {
        TransferSettings {
            sender: SenderConfig::default(),
            chunk_cost_ms: 2,
            record_in: None,
        }
    }
}

pub struct World {
    pub net: Network<WirePacket>,
    agents: BTreeMap<Uuid, Agent>,
    names: BTreeMap<Uuid, String>,
    hosts: BTreeMap<Uuid, Host>,
    actions: BTreeMap<(SimTime, u64), Action>,
    action_seq: u64,
    events: Vec<(Uuid, AgentEvent)>,
    transfers: Vec<TransferRecord>,
    senders_done: Vec<SenderRecord>,
    pub transfer: TransferSettings,
    decode_errors: u64,
}

impl World {
    pub fn new(seed: u64, policy: LinkPolicy) -> Result<Self, NetError> {
        Ok(World {
            net: Network::new(seed, policy)?,
            agents: BTreeMap::new(),
            names: BTreeMap::new(),
            hosts: BTreeMap::new(),
            actions: BTreeMap::new(),
            action_seq: 0,
            events: Vec::new(),
            transfers: Vec::new(),
            senders_done: Vec::new(),
            transfer: TransferSettings::default(),
            decode_errors: 0,
        })
    }

    /// Adds an agent in `group`, subscribed to `docs`, starting at the
    /// current clock.
    pub fn add_agent(&mut self, index: usize, name: &str, group: usize, config: AgentConfig, seed: u64, docs: &[String]) -> Uuid {
        let uuid = agent_uuid(index);
        let mut a = Agent::new(AgentId::new(uuid, name), config, self.net.clock(), seed);
        for d in docs {
            a.subscribe(d);
        }
        self.net.add_node(uuid, group);
        self.agents.insert(uuid, a);
        self.names.insert(uuid, name.to_string());
        self.hosts.insert(uuid, Host::new());
        uuid
    }

    pub fn agent(&self, id: Uuid) -> &Agent {
        &self.agents[&id]
    }

    pub fn agent_mut(&mut self, id: Uuid) -> &mut Agent {
        self.agents.get_mut(&id).expect("known agent")
    }

    pub fn agents(&self) -> impl Iterator<Item = (&Uuid, &Agent)> {
        self.agents.iter()
    }

    pub fn agent_ids(&self) -> Vec<Uuid> {
        self.agents.keys().copied().collect()
    }

    pub fn name(&self, id: Uuid) -> &str {
        self.names.get(&id).map_or("?", String::as_str)
    }

    pub fn set_partition(&mut self, windows: Vec<PartitionWindow>) -> Result<(), NetError> {
        self.net.set_partition(windows)
    }

    pub fn store(&self, id: Uuid) -> &MemoryStore {
        &self.hosts[&id].store
    }

    pub fn store_mut(&mut self, id: Uuid) -> &mut MemoryStore {
        &mut self.hosts.get_mut(&id).expect("known agent").store
    }

    pub fn clock(&self) -> SimTime {
        self.net.clock()
    }

    fn push_action(&mut self, at: SimTime, action: Action) {
        self.actions.insert((at, self.action_seq), action);
        self.action_seq += 1;
    }

    pub fn schedule_edit(&mut self, at: SimTime, agent: Uuid, uri: &str, delta: Delta) {
        self.push_action(
            at,
            Action::Edit {
                agent,
                uri: uri.to_string(),
                delta,
            },
        );
    }

    pub fn schedule_transfer(&mut self, at: SimTime, plan: TransferPlan, blob_type: &str, total_bytes: u64) {
        self.push_action(
            at,
            Action::Transfer {
                plan,
                blob_type: blob_type.to_string(),
                total_bytes,
            },
        );
    }

    /// Injects a Data frame that fails receiver validation.
    pub fn schedule_corrupt_chunk(&mut self, at: SimTime, from: Uuid, to: Uuid, dataset: &str, sequence: u64, len: usize) {
        self.push_action(
            at,
            Action::Corrupt {
                from,
                to,
                dataset: dataset.to_string(),
                sequence,
                len,
            },
        );
    }

    /// Cuts (or restores) both directions between `a` and `b` at `at`.
    pub fn schedule_link(&mut self, at: SimTime, a: Uuid, b: Uuid, up: bool) {
        self.push_action(at, Action::Block { a, b, on: !up });
    }

    pub fn drain_events(&mut self) -> Vec<(Uuid, AgentEvent)> {
        std::mem::take(&mut self.events)
    }

    pub fn transfers(&self) -> &[TransferRecord] {
        &self.transfers
    }

    pub fn sender_records(&self) -> &[SenderRecord] {
        &self.senders_done
    }

    pub fn decode_errors(&self) -> u64 {
        self.decode_errors
    }

    pub fn active_transfers(&self) -> usize {
        self.hosts.values().map(|h| h.senders.len() + h.receivers.len()).sum()
    }

    fn next_time(&self) -> Option<SimTime> {
        let net = self.net.peek_time();
        let agents = self.agents.values().map(Agent::next_wakeup).min();
        let hosts = self.hosts.values().filter_map(Host::next_wakeup).min();
        let action = self.actions.keys().next().map(|k| k.0);
        [net, agents, hosts, action].into_iter().flatten().min()
    }

    /// Runs every event up to and including `until`.
    pub fn run_until(&mut self, until: SimTime) {
        while let Some(t) = self.next_time() {
            if t > until {
                break;
            }
            let t = t.max(self.net.clock());
            self.net.advance_clock(t);
            self.step(t);
        }
        self.net.advance_clock(until);
    }

    /// Runs in slices of `slice` ms until `done` holds or `until` passes.
    pub fn run_while(&mut self, until: SimTime, slice: SimTime, mut done: impl FnMut(&World) -> bool) -> bool {
        while self.clock() < until {
            let next = (self.clock() + slice).min(until);
            self.run_until(next);
            if done(self) {
                return true;
            }
        }
        done(self)
    }

    fn step(&mut self, t: SimTime) {
        while let Some((_, ev)) = self.net.next_event(t) {
            match ev {
                Event::Deliver { from, to, packet } => self.deliver(t, from, to, &packet),
                Event::Timer { .. } => {}
            }
        }
        while let Some(entry) = self.actions.first_entry() {
            if entry.key().0 > t {
                break;
            }
            let action = entry.remove();
            self.perform(t, action);
        }
        let due: Vec<Uuid> = self.agents.iter().filter(|(_, a)| a.next_wakeup() <= t).map(|(u, _)| *u).collect();
        for u in due {
            let out = self.agent_mut(u).poll(t);
            self.emit(u, out);
        }
        let due: Vec<Uuid> = self
            .hosts
            .iter()
            .filter(|(_, h)| h.next_wakeup().is_some_and(|w| w <= t))
            .map(|(u, _)| *u)
            .collect();
        for u in due {
            self.poll_host(t, u);
        }
    }

    fn perform(&mut self, t: SimTime, action: Action) {
        match action {
            Action::Edit { agent, uri, delta } => {
                let out = self.agent_mut(agent).handle(t, Input::LocalChange { uri, delta });
                self.emit(agent, out);
            }
            Action::Transfer {
                plan,
                blob_type,
                total_bytes,
            } => self.start_transfer(t, plan, &blob_type, total_bytes),
            Action::Corrupt {
                from,
                to,
                dataset,
                sequence,
                len,
            } => {
                let frame = Frame::new(
                    dataset,
                    Body::Transfer(TransferMsg::Data {
                        sequence,
                        data: vec![0xee; len],
                    }),
                );
                let _ = self.net.send(from, Dest::To(to), WirePacket::new(&frame));
            }
            Action::Block { a, b, on } => {
                if on {
                    self.net.block(a, b);
                    self.net.block(b, a);
                } else {
                    self.net.unblock(a, b);
                    self.net.unblock(b, a);
                }
            }
        }
    }

    fn start_transfer(&mut self, t: SimTime, plan: TransferPlan, blob_type: &str, total_bytes: u64) {
        let payload: Option<Payload> = self.hosts[&plan.sender].store.get(&plan.dataset).ok().flatten();
        match Sender::new(&plan.dataset, payload, plan.receivers.iter().copied(), self.transfer.sender.clone(), t) {
            Ok(s) => {
                let rec = SenderRecord {
                    dataset: plan.dataset.clone(),
                    sender: plan.sender,
                    ..SenderRecord::default()
                };
                self.hosts
                    .get_mut(&plan.sender)
                    .expect("known sender")
                    .senders
                    .insert(plan.dataset.clone(), (s, rec));
            }
            Err(_) => {
                for r in &plan.receivers {
                    self.transfers.push(TransferRecord {
                        at: t,
                        dataset: plan.dataset.clone(),
                        sender: plan.sender,
                        receiver: *r,
                        outcome: ReceiverOutcome::Aborted {
                            reason: "sender does not hold the payload".into(),
                        },
                        throttle_ups: 0,
                        throttle_downs: 0,
                    });
                }
                return;
            }
        }
        for r in plan.receivers {
            let host = self.hosts.get_mut(&r).expect("known receiver");
            let (recv, out) = Receiver::start(
                &plan.dataset,
                blob_type,
                ReceiverConfig::for_payload_len(total_bytes),
                t,
                &mut host.store,
            );
            host.closed.remove(&plan.dataset);
            host.receivers.insert(plan.dataset.clone(), (recv, plan.sender));
            self.send_transfer(r, plan.sender, &plan.dataset, out);
        }
    }

    fn send_transfer(&mut self, from: Uuid, to: Uuid, dataset: &str, msgs: Vec<TransferMsg>) {
        for m in msgs {
            let frame = Frame::new(dataset, Body::Transfer(m));
            let _ = self.net.send(from, Dest::To(to), WirePacket::new(&frame));
        }
    }

    fn deliver(&mut self, t: SimTime, from: Uuid, to: Uuid, packet: &WirePacket) {
        let frame = match Frame::decode(packet.bytes()) {
            Ok(f) => f,
            Err(_) => {
                self.decode_errors += 1;
                return;
            }
        };
        if let Body::Transfer(msg) = frame.body {
            let Some(host) = self.hosts.get_mut(&to) else { return };
            if let Some((sender, rec)) = host.senders.get_mut(&frame.uri) {
                if sender.phase() == graphsync::transfer::SenderPhase::Sending {
                    match msg {
                        TransferMsg::ThrottleUp => rec.ups_received += 1,
                        TransferMsg::ThrottleDown => rec.downs_received += 1,
                        _ => {}
                    }
                }
                let out = sender.on_message(t, from, msg);
                self.route_sender_output(to, &frame.uri, out);
            } else if host.receivers.contains_key(&frame.uri) {
                host.inbox.push_back((from, frame.uri, msg));
                self.poll_host(t, to);
            } else if let Some((recv, sender)) = host.closed.get_mut(&frame.uri) {
                if *sender == from {
                    let out = recv.on_message(msg, 0, &mut host.store);
                    self.send_transfer(to, from, &frame.uri, out);
                }
            }
            return;
        }
        let out = self.agent_mut(to).handle(t, Input::Frame { from, frame });
        self.emit(to, out);
    }

    fn route_sender_output(&mut self, from: Uuid, dataset: &str, out: Vec<(Uuid, TransferMsg)>) {
        for (to, m) in out {
            self.send_transfer(from, to, dataset, vec![m]);
        }
    }

    fn poll_host(&mut self, t: SimTime, id: Uuid) {
        let chunk_cost = self.transfer.chunk_cost_ms;
        let mut sends: Vec<(Uuid, String, Vec<TransferMsg>)> = Vec::new();
        let mut finished: Vec<TransferRecord> = Vec::new();
        let mut senders_done = Vec::new();
        let host = self.hosts.get_mut(&id).expect("known host");

        // queued receiver input, one message per unit of work
        while t >= host.busy_until {
            let Some((from, uri, msg)) = host.inbox.pop_front() else { break };
            let depth = host.inbox.iter().filter(|(_, u, _)| *u == uri).count();
            let cost = if matches!(msg, TransferMsg::Data { .. }) { chunk_cost } else { 0 };
            if let Some((recv, sender)) = host.receivers.get_mut(&uri) {
                if *sender == from {
                    let out = recv.on_message(msg, depth, &mut host.store);
                    sends.push((*sender, uri.clone(), out));
                }
            }
            host.busy_until = t + cost;
        }
        for (uri, (recv, sender)) in host.receivers.iter_mut() {
            if recv.next_wakeup().is_some_and(|w| w <= t) {
                let out = recv.poll(t, &mut host.store);
                sends.push((*sender, uri.clone(), out));
            }
        }
        let done: Vec<String> = host.receivers.iter().filter(|(_, (r, _))| r.is_done()).map(|(u, _)| u.clone()).collect();
        for uri in done {
            let (recv, sender) = host.receivers.remove(&uri).expect("present");
            let (ups, downs) = recv.throttle_counts();
            let outcome = recv.outcome().cloned().expect("done");
            host.closed.insert(uri.clone(), (recv, sender));
            finished.push(TransferRecord {
                at: t,
                dataset: uri,
                sender,
                receiver: id,
                outcome,
                throttle_ups: ups,
                throttle_downs: downs,
            });
        }
        let mut sender_out = Vec::new();
        for (uri, (s, _)) in host.senders.iter_mut() {
            if s.next_wakeup().is_some_and(|w| w <= t) {
                sender_out.push((uri.clone(), s.poll(t)));
            }
        }
        let gone: Vec<String> = host
            .senders
            .iter()
            .filter(|(_, (s, _))| s.phase() == graphsync::transfer::SenderPhase::Done)
            .map(|(u, _)| u.clone())
            .collect();
        for uri in gone {
            let (s, mut rec) = host.senders.remove(&uri).expect("present");
            rec.trace_ok = graphsync::transfer::replay_throttle(s.throttle_trace())
                && s.throttle_trace().iter().map(|x| x.ups).sum::<u32>() == rec.ups_received
                && s.throttle_trace().iter().map(|x| x.downs).sum::<u32>() == rec.downs_received;
            rec.final_tau = s.tau();
            rec.aborted = s.aborted();
            rec.data_frames = s.data_frames_sent();
            senders_done.push(rec);
        }

        for (to, uri, msgs) in sends {
            self.send_transfer(id, to, &uri, msgs);
        }
        for (uri, out) in sender_out {
            self.route_sender_output(id, &uri, out);
        }
        self.senders_done.extend(senders_done);
        for rec in finished {
            if let (ReceiverOutcome::Committed { .. }, Some(doc)) = (&rec.outcome, self.transfer.record_in.clone()) {
                let has = DatasetRelation::Has {
                    agent: rec.receiver,
                    dataset: rec.dataset.clone(),
                };
                if let Ok(triple) = has.to_triple() {
                    let delta = Delta::new([triple], []).expect("disjoint");
                    let out = self.agent_mut(rec.receiver).handle(t, Input::LocalChange { uri: doc, delta });
                    self.emit(rec.receiver, out);
                }
            }
            self.transfers.push(rec);
        }
    }

    fn emit(&mut self, from: Uuid, out: Vec<Outgoing>) {
        for ev in self.agents.get_mut(&from).expect("known agent").drain_events() {
            self.events.push((from, ev));
        }
        for o in out {
            let dest = match o.dest {
                agent::Dest::Broadcast => Dest::Broadcast,
                agent::Dest::To(u) => Dest::To(u),
            };
            let _ = self.net.send(from, dest, WirePacket::new(&o.frame));
        }
    }

    /// Working heads of every agent for `uri`.
    pub fn heads(&self, uri: &str) -> BTreeMap<Uuid, RevisionHash> {
        self.agents
            .iter()
            .filter_map(|(u, a)| a.doc(uri).map(|d| (*u, d.current())))
            .collect()
    }

    pub fn graphs(&self, uri: &str) -> BTreeMap<Uuid, Graph> {
        self.agents.iter().filter_map(|(u, a)| a.graph(uri).map(|g| (*u, g))).collect()
    }

    /// All agents' working graphs for `uri` hold the same triples.
    pub fn converged(&self, uri: &str) -> bool {
        let graphs = self.graphs(uri);
        let mut it = graphs.values();
        match it.next() {
            Some(first) => it.all(|g| g.triples() == first.triples()),
            None => true,
        }
    }

    /// Agents that consider themselves master of `uri`.
    pub fn masters(&self, uri: &str) -> BTreeSet<Uuid> {
        self.agents.iter().filter(|(_, a)| a.is_master(uri)).map(|(u, _)| *u).collect()
    }

    /// Agents whose working graph of `uri` records them holding `dataset`.
    pub fn recorded_holders(&self, uri: &str, viewer: Uuid, ds: &str) -> BTreeSet<Uuid> {
        self.agents
            .get(&viewer)
            .and_then(|a| a.graph(uri))
            .map(|g| dataset::holders(&g, ds))
            .unwrap_or_default()
    }
}
