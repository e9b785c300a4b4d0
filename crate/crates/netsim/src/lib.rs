//! Deterministic discrete-event network.
//!
//! Nodes exchange opaque packets over links that may lose, duplicate or
//! delay them. Nodes belong to groups; a partition window cuts one group
//! off from every other group for a time interval. Reachability is checked
//! both when a packet is sent and when it would be delivered, so packets in
//! flight when a window opens are dropped. All randomness comes from one
//! seeded ChaCha stream, and events with equal time are dispatched in
//! scheduling order.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt::Write as _;
use std::io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;
use uuid::Uuid;

/// Simulated milliseconds.
pub type SimTime = i64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("probability {name} = {value} outside [0, 1]")]
    Probability { name: &'static str, value: f64 },
    #[error("latency range {min}..={max} is invalid")]
    Latency { min: SimTime, max: SimTime },
    #[error("node {0} is not registered")]
    UnknownNode(Uuid),
    #[error("group {0} does not exist")]
    UnknownGroup(usize),
    #[error("partition window ends before it starts ({start} > {end})")]
    Window { start: SimTime, end: SimTime },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Latency {
    Fixed(SimTime),
    Uniform { min: SimTime, max: SimTime },
}

impl Latency {
    fn min(&self) -> SimTime {
        match *self {
            Latency::Fixed(v) => v,
            Latency::Uniform { min, .. } => min,
        }
    }

    fn max(&self) -> SimTime {
        match *self {
            Latency::Fixed(v) => v,
            Latency::Uniform { max, .. } => max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkPolicy {
    pub latency: Latency,
    pub loss: f64,
    pub duplicate: f64,
    /// Flagged packets get an extra delay drawn from `0..=2 * max latency`.
    pub reorder: f64,
}

impl LinkPolicy {
    pub fn reliable(latency_ms: SimTime) -> Self {
        LinkPolicy {
            latency: Latency::Fixed(latency_ms),
            loss: 0.0,
            duplicate: 0.0,
            reorder: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        for (name, value) in [("loss", self.loss), ("duplicate", self.duplicate), ("reorder", self.reorder)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(NetError::Probability { name, value });
            }
        }
        let (min, max) = (self.latency.min(), self.latency.max());
        if min < 0 || min > max {
            return Err(NetError::Latency { min, max });
        }
        Ok(())
    }
}

impl Default for LinkPolicy {
    fn default() -> Self {
        LinkPolicy::reliable(10)
    }
}

/// Anything the network can carry.
pub trait Packet: Clone {
    fn kind(&self) -> &str;
    fn size(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dest {
    Broadcast,
    To(Uuid),
}

/// Group `group` is cut off from all other groups during `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionWindow {
    pub group: usize,
    pub start: SimTime,
    pub end: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event<P> {
    Deliver { from: Uuid, to: Uuid, packet: P },
    Timer { node: Uuid, token: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LogAction {
    Send,
    Deliver,
    DropLoss,
    DropPartition,
    Duplicate,
}

impl LogAction {
    pub fn as_str(&self) -> &'static str {
        match self {
            LogAction::Send => "send",
            LogAction::Deliver => "deliver",
            LogAction::DropLoss => "drop-loss",
            LogAction::DropPartition => "drop-partition",
            LogAction::Duplicate => "duplicate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub time: SimTime,
    pub action: LogAction,
    pub from: Uuid,
    pub to: Uuid,
    pub kind: String,
    pub size: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NetStats {
    pub sent: u64,
    pub delivered: u64,
    pub lost: u64,
    pub partitioned: u64,
    pub duplicated: u64,
}

struct Scheduled<P> {
    at: SimTime,
    event: Event<P>,
}

pub struct Network<P> {
    now: SimTime,
    rng: ChaCha8Rng,
    policy: LinkPolicy,
    nodes: BTreeMap<Uuid, usize>,
    groups: usize,
    windows: Vec<PartitionWindow>,
    blocked: BTreeSet<(Uuid, Uuid)>,
    queue: BinaryHeap<Reverse<(SimTime, u64)>>,
    pending: BTreeMap<u64, Scheduled<P>>,
    seq: u64,
    log: Option<Vec<LogRecord>>,
    stats: NetStats,
}

impl<P: Packet> Network<P> {
    pub fn new(seed: u64, policy: LinkPolicy) -> Result<Self, NetError> {
        policy.validate()?;
        Ok(Network {
            now: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            policy,
            nodes: BTreeMap::new(),
            groups: 1,
            windows: Vec::new(),
            blocked: BTreeSet::new(),
            queue: BinaryHeap::new(),
            pending: BTreeMap::new(),
            seq: 0,
            log: Some(Vec::new()),
            stats: NetStats::default(),
        })
    }

    /// Stops recording the event log (long runs).
    pub fn disable_log(&mut self) {
        self.log = None;
    }

    pub fn clock(&self) -> SimTime {
        self.now
    }

    pub fn policy(&self) -> &LinkPolicy {
        &self.policy
    }

    pub fn set_policy(&mut self, policy: LinkPolicy) -> Result<(), NetError> {
        policy.validate()?;
        self.policy = policy;
        Ok(())
    }

    pub fn add_node(&mut self, node: Uuid, group: usize) {
        self.groups = self.groups.max(group + 1);
        self.nodes.insert(node, group);
    }

    pub fn nodes(&self) -> impl Iterator<Item = Uuid> + '_ {
        self.nodes.keys().copied()
    }

    pub fn group_of(&self, node: Uuid) -> Option<usize> {
        self.nodes.get(&node).copied()
    }

    pub fn set_partition(&mut self, schedule: Vec<PartitionWindow>) -> Result<(), NetError> {
        for w in &schedule {
            if w.start > w.end {
                return Err(NetError::Window {
                    start: w.start,
                    end: w.end,
                });
            }
            if w.group >= self.groups {
                return Err(NetError::UnknownGroup(w.group));
            }
        }
        self.windows = schedule;
        Ok(())
    }

    /// Blocks the directed link `from -> to` until `unblock`.
    pub fn block(&mut self, from: Uuid, to: Uuid) {
        self.blocked.insert((from, to));
    }

    pub fn unblock(&mut self, from: Uuid, to: Uuid) {
        self.blocked.remove(&(from, to));
    }

    /// Whether `group` is cut off at time `t`.
    pub fn isolated(&self, group: usize, t: SimTime) -> bool {
        self.windows.iter().any(|w| w.group == group && w.start <= t && t < w.end)
    }

    pub fn reachable(&self, from: Uuid, to: Uuid, t: SimTime) -> bool {
        let (Some(&ga), Some(&gb)) = (self.nodes.get(&from), self.nodes.get(&to)) else {
            return false;
        };
        if self.blocked.contains(&(from, to)) {
            return false;
        }
        ga == gb || !(self.isolated(ga, t) || self.isolated(gb, t))
    }

    /// Sends `packet` now; returns the number of scheduled deliveries.
    pub fn send(&mut self, from: Uuid, dest: Dest, packet: P) -> Result<usize, NetError> {
        if !self.nodes.contains_key(&from) {
            return Err(NetError::UnknownNode(from));
        }
        let targets: Vec<Uuid> = match dest {
            Dest::Broadcast => self.nodes.keys().copied().filter(|n| *n != from).collect(),
            Dest::To(n) if self.nodes.contains_key(&n) => vec![n],
            Dest::To(n) => return Err(NetError::UnknownNode(n)),
        };
        let mut scheduled = 0;
        for to in targets {
            self.stats.sent += 1;
            self.record(LogAction::Send, from, to, &packet);
            if !self.reachable(from, to, self.now) {
                self.stats.partitioned += 1;
                self.record(LogAction::DropPartition, from, to, &packet);
                continue;
            }
            if self.rng.gen_bool(self.policy.loss) {
                self.stats.lost += 1;
                self.record(LogAction::DropLoss, from, to, &packet);
                continue;
            }
            let copies = if self.rng.gen_bool(self.policy.duplicate) {
                self.stats.duplicated += 1;
                self.record(LogAction::Duplicate, from, to, &packet);
                2
            } else {
                1
            };
            for _ in 0..copies {
                let delay = self.draw_latency();
                self.schedule(
                    self.now + delay,
                    Event::Deliver {
                        from,
                        to,
                        packet: packet.clone(),
                    },
                );
                scheduled += 1;
            }
        }
        Ok(scheduled)
    }

    pub fn set_timer(&mut self, node: Uuid, at: SimTime, token: u64) {
        self.schedule(at.max(self.now), Event::Timer { node, token });
    }

    /// Time of the next pending event.
    pub fn peek_time(&self) -> Option<SimTime> {
        self.queue.peek().map(|Reverse((t, _))| *t)
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Pops the next event at or before `until`, advancing the clock to it.
    /// Deliveries to a node that became unreachable are dropped and skipped.
    pub fn next_event(&mut self, until: SimTime) -> Option<(SimTime, Event<P>)> {
        loop {
            let &Reverse((at, seq)) = self.queue.peek()?;
            if at > until {
                return None;
            }
            self.queue.pop();
            let item = self.pending.remove(&seq).expect("queued event is pending");
            self.now = self.now.max(item.at);
            if let Event::Deliver { from, to, packet } = &item.event {
                if !self.reachable(*from, *to, self.now) {
                    self.stats.partitioned += 1;
                    self.record(LogAction::DropPartition, *from, *to, packet);
                    continue;
                }
                self.stats.delivered += 1;
                self.record(LogAction::Deliver, *from, *to, packet);
            }
            return Some((self.now, item.event));
        }
    }

    /// Drains every event up to `until` and leaves the clock there.
    pub fn advance(&mut self, until: SimTime) -> Vec<(SimTime, Event<P>)> {
        let mut out = Vec::new();
        while let Some(ev) = self.next_event(until) {
            out.push(ev);
        }
        self.advance_clock(until);
        out
    }

    pub fn advance_clock(&mut self, to: SimTime) {
        self.now = self.now.max(to);
    }

    pub fn stats(&self) -> NetStats {
        self.stats
    }

    pub fn log(&self) -> &[LogRecord] {
        self.log.as_deref().unwrap_or(&[])
    }

    /// `time,action,from,to,kind,size` with a header line.
    pub fn log_csv(&self) -> String {
        let mut s = String::from("time,action,from,to,kind,size\n");
        for r in self.log() {
            let _ = writeln!(s, "{},{},{},{},{},{}", r.time, r.action.as_str(), r.from, r.to, r.kind, r.size);
        }
        s
    }

    pub fn write_log_csv(&self, out: &mut dyn io::Write) -> io::Result<()> {
        out.write_all(self.log_csv().as_bytes())
    }

    fn draw_latency(&mut self) -> SimTime {
        let base = match self.policy.latency {
            Latency::Fixed(v) => v,
            Latency::Uniform { min, max } => self.rng.gen_range(min..=max),
        };
        if self.rng.gen_bool(self.policy.reorder) {
            base + self.rng.gen_range(0..=2 * self.policy.latency.max())
        } else {
            base
        }
    }

    fn schedule(&mut self, at: SimTime, event: Event<P>) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse((at, seq)));
        self.pending.insert(seq, Scheduled { at, event });
    }

    fn record(&mut self, action: LogAction, from: Uuid, to: Uuid, packet: &P) {
        if let Some(log) = self.log.as_mut() {
            log.push(LogRecord {
                time: self.now,
                action,
                from,
                to,
                kind: packet.kind().to_string(),
                size: packet.size(),
            });
        }
    }
}

