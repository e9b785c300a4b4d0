//! Per-agent synchronization state machine.
//!
//! An [`Agent`] is driven entirely from outside: inputs are fed with
//! [`Agent::handle`], timers fire through [`Agent::poll`], and outbound
//! frames are returned to the caller. Time is in milliseconds on a clock
//! shared by all agents.
//!
//! Merges may take simulated time ([`MergeCost`]); while a merge runs the
//! agent is busy, later inputs are queued, and the frames it produced are
//! released when it completes.

mod election;
mod peers;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::rngs::StdRng;
use rand::SeedableRng;
use uuid::Uuid;

use crate::delta::Delta;
use crate::gor::GraphOfRevisions;
use crate::reconcile::{self, MergeOutcome, MergeStats, RebaseOptions};
use crate::revision::{ParentLink, Revision, RevisionHash, Signer};
use crate::term::Graph;
use crate::wire::{AgentId, Body, Frame, RevisionRequestMsg, StatusMsg, VoteMsg};

pub use election::{Election, ElectionStep};
pub use peers::{PeerInfo, PeerTable};

/// How a non-master reconciles its own changes with the master's.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum SyncPolicy {
    /// Publish every change immediately; only the master merges.
    MergeOnly,
    /// Keep changes local until in sync with the master, rebasing them onto
    /// the master's head when it moves.
    #[default]
    MergeRebase,
}

/// Simulated duration of one merge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum MergeCost {
    #[default]
    Free,
    Fixed(i64),
    /// `base_ms` plus `per_kilo_triple_ms` for every 1000 triples folded.
    Linear { base_ms: i64, per_kilo_triple_ms: i64 },
}

impl MergeCost {
    pub fn of(&self, stats: &MergeStats) -> i64 {
        match *self {
            MergeCost::Free => 0,
            MergeCost::Fixed(ms) => ms,
            MergeCost::Linear { base_ms, per_kilo_triple_ms } => base_ms + stats.triples_touched as i64 * per_kilo_triple_ms / 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentConfig {
    pub status_period: i64,
    /// Peers silent for this many periods are dropped.
    pub liveness_periods: i64,
    /// Length of one election round, in periods.
    pub ballot_periods: i64,
    pub policy: SyncPolicy,
    pub merge_cost: MergeCost,
    pub rebase: RebaseOptions,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            status_period: 1000,
            liveness_periods: 3,
            ballot_periods: 2,
            policy: SyncPolicy::MergeRebase,
            merge_cost: MergeCost::Free,
            rebase: RebaseOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dest {
    Broadcast,
    To(Uuid),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outgoing {
    pub dest: Dest,
    pub frame: Frame,
}

#[derive(Debug, Clone)]
pub enum Input {
    Frame { from: Uuid, frame: Frame },
    LocalChange { uri: String, delta: Delta },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    Created { hash: RevisionHash, published: bool },
    Published(RevisionHash),
    Merged { hash: RevisionHash, cost: i64, stats: MergeStats },
    Rebased { count: usize, tip: RevisionHash },
    FastForward(RevisionHash),
    ElectionStarted,
    ElectionRound(u32),
    ElectionDecided(Uuid),
    PeerJoined(Uuid),
    PeerExpired(Uuid),
    RequestSent(usize),
    RequestAnswered(usize),
    Rejected(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentEvent {
    pub at: i64,
    pub uri: String,
    pub kind: EventKind,
}

struct Ctx<'a> {
    id: &'a AgentId,
    up_since: i64,
    config: &'a AgentConfig,
    now: i64,
    cost: i64,
    rng: &'a mut StdRng,
    signer: Option<&'a dyn Signer>,
    events: &'a mut Vec<AgentEvent>,
    out: Vec<Outgoing>,
}

impl Ctx<'_> {
    fn me(&self) -> Uuid {
        self.id.uuid
    }

    /// Current time including work already done in this step.
    fn time(&self) -> i64 {
        self.now + self.cost
    }

    fn event(&mut self, uri: &str, kind: EventKind) {
        let at = self.time();
        self.events.push(AgentEvent {
            at,
            uri: uri.to_owned(),
            kind,
        });
    }

    fn broadcast(&mut self, uri: &str, body: Body) {
        self.out.push(Outgoing {
            dest: Dest::Broadcast,
            frame: Frame::new(uri, body),
        });
    }
}

/// Synchronization state of one document.
pub struct DocState {
    gor: GraphOfRevisions,
    current: RevisionHash,
    local_queue: Vec<RevisionHash>,
    peers: PeerTable,
    master: Option<Uuid>,
    master_head: Option<RevisionHash>,
    master_claim: Option<RevisionHash>,
    election: Option<Election>,
    last_election: Option<(i64, u32)>,
    election_end: i64,
    last_voted_for: Option<Uuid>,
    wanted_heads: BTreeSet<RevisionHash>,
    requested: BTreeMap<RevisionHash, i64>,
}

impl DocState {
    fn new(uri: &str, up_since: i64) -> Self {
        let gor = GraphOfRevisions::new(uri);
        DocState {
            current: gor.root(),
            gor,
            local_queue: Vec::new(),
            peers: PeerTable::default(),
            master: None,
            master_head: None,
            master_claim: None,
            election: None,
            last_election: None,
            election_end: up_since,
            last_voted_for: None,
            wanted_heads: BTreeSet::new(),
            requested: BTreeMap::new(),
        }
    }

    pub fn gor(&self) -> &GraphOfRevisions {
        &self.gor
    }

    pub fn current(&self) -> RevisionHash {
        self.current
    }

    pub fn local_queue(&self) -> &[RevisionHash] {
        &self.local_queue
    }

    pub fn peers(&self) -> &PeerTable {
        &self.peers
    }

    pub fn master(&self) -> Option<Uuid> {
        self.master
    }

    pub fn master_head(&self) -> Option<RevisionHash> {
        self.master_head
    }

    pub fn election(&self) -> Option<&Election> {
        self.election.as_ref()
    }

    /// Latest published revision on the working branch.
    pub fn published_head(&self) -> RevisionHash {
        let mut h = self.current;
        while self.gor.is_local(&h) {
            match self.gor.get(&h).and_then(|r| r.parents().first()) {
                Some(link) => h = link.parent,
                None => break,
            }
        }
        h
    }

    fn acting_master(&self, me: Uuid) -> bool {
        self.master == Some(me) && self.election.is_none()
    }

    fn is_ancestor(&self, a: &RevisionHash, b: &RevisionHash) -> bool {
        self.gor.is_ancestor(a, b).unwrap_or(false)
    }

    fn publish(&mut self, ctx: &mut Ctx, h: RevisionHash) {
        self.gor.mark_published(&h);
        if let Some(rev) = self.gor.get(&h) {
            ctx.broadcast(self.gor.uri(), Body::Revision(rev.clone()));
        }
        ctx.event(self.gor.uri(), EventKind::Published(h));
    }

    fn flush_queue(&mut self, ctx: &mut Ctx) {
        for h in std::mem::take(&mut self.local_queue) {
            self.publish(ctx, h);
        }
    }

    fn request(&mut self, ctx: &mut Ctx, hashes: impl IntoIterator<Item = RevisionHash>) {
        let now = ctx.time();
        let period = ctx.config.status_period;
        let wanted: Vec<RevisionHash> = hashes
            .into_iter()
            .filter(|h| !self.gor.knows(h))
            .filter(|h| self.requested.get(h).map_or(true, |t| now - t >= period))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if wanted.is_empty() {
            return;
        }
        for h in &wanted {
            self.requested.insert(*h, now);
        }
        ctx.event(self.gor.uri(), EventKind::RequestSent(wanted.len()));
        ctx.broadcast(
            self.gor.uri(),
            Body::RevisionRequest(RevisionRequestMsg {
                requester: ctx.me(),
                wanted,
            }),
        );
    }

    fn advance_master_head(&mut self, h: RevisionHash) {
        let newer = match self.master_head {
            None => true,
            Some(old) => old != h && self.is_ancestor(&old, &h),
        };
        if newer {
            self.master_head = Some(h);
        }
    }

    fn set_master(&mut self, master: Option<Uuid>) {
        if self.master != master {
            self.master = master;
            self.master_head = None;
            self.master_claim = None;
        }
    }

    fn local_change(&mut self, ctx: &mut Ctx, delta: Delta) {
        if delta.is_empty() {
            return;
        }
        let rev = Revision::new(ctx.me(), ctx.time(), vec![ParentLink::new(self.current, delta)], ctx.signer);
        let h = rev.hash();
        if let Err(e) = self.gor.insert_local(rev) {
            ctx.event(self.gor.uri(), EventKind::Rejected(e.to_string()));
            return;
        }
        self.current = h;
        self.local_queue.push(h);
        let in_sync = match (ctx.config.policy, self.master_head) {
            _ if self.acting_master(ctx.me()) => true,
            (SyncPolicy::MergeOnly, _) => true,
            (SyncPolicy::MergeRebase, Some(mh)) => self.is_ancestor(&mh, &h),
            (SyncPolicy::MergeRebase, None) => false,
        };
        ctx.event(self.gor.uri(), EventKind::Created { hash: h, published: in_sync });
        if in_sync {
            self.flush_queue(ctx);
        }
        if self.acting_master(ctx.me()) {
            self.master_head = Some(self.current);
            self.master_work(ctx);
        }
    }

    fn receive_revision(&mut self, ctx: &mut Ctx, rev: Revision) {
        let h = rev.hash();
        self.wanted_heads.remove(&h);
        if self.gor.knows(&h) {
            return;
        }
        let inserted = match self.gor.insert(rev) {
            Ok(i) => i,
            Err(e) => {
                ctx.event(self.gor.uri(), EventKind::Rejected(e.to_string()));
                return;
            }
        };
        self.request(ctx, inserted.missing);
        for r in inserted.resolved {
            self.requested.remove(&r);
            let author = self.gor.get(&r).and_then(Revision::author);
            if self.master.is_some() && author == self.master && self.master != Some(ctx.me()) {
                self.advance_master_head(r);
            }
            if self.master_claim == Some(r) {
                self.master_claim = None;
                self.advance_master_head(r);
            }
        }
        self.sync_with_master(ctx);
        self.master_work(ctx);
    }

    /// Brings the working branch in line with the master's head: fast-forward
    /// when nothing is local, publish local revisions once they descend from
    /// it, otherwise rebase them onto it.
    fn sync_with_master(&mut self, ctx: &mut Ctx) {
        if self.master == Some(ctx.me()) {
            return;
        }
        let Some(mh) = self.master_head else { return };
        if !self.gor.contains(&mh) || mh == self.current {
            return;
        }
        if self.local_queue.is_empty() {
            if self.is_ancestor(&self.current, &mh) {
                self.current = mh;
                ctx.event(self.gor.uri(), EventKind::FastForward(mh));
            }
            return;
        }
        if self.is_ancestor(&mh, &self.current) {
            self.flush_queue(ctx);
            return;
        }
        if ctx.config.policy != SyncPolicy::MergeRebase {
            return;
        }
        let movable = matches!(
            reconcile::local_branch(&self.gor, &self.current, &mh),
            Ok((l, ref branch)) if !branch.is_empty() && l != mh
        );
        if !movable {
            return;
        }
        match reconcile::rebase_revisions(&mut self.gor, &self.current, &mh, ctx.time(), ctx.config.rebase, ctx.signer) {
            Ok(copies) if !copies.is_empty() => {
                self.local_queue = copies.iter().map(Revision::hash).collect();
                self.current = *self.local_queue.last().expect("non-empty");
                let tip = self.current;
                ctx.event(self.gor.uri(), EventKind::Rebased { count: copies.len(), tip });
                self.flush_queue(ctx);
            }
            Ok(_) => {}
            Err(e) => ctx.event(self.gor.uri(), EventKind::Rejected(e.to_string())),
        }
    }

    /// Merges heads pairwise, oldest first, until a single head remains.
    fn master_work(&mut self, ctx: &mut Ctx) {
        if !self.acting_master(ctx.me()) {
            return;
        }
        self.flush_queue(ctx);
        loop {
            let heads = self.gor.sorted_heads();
            if heads.len() < 2 {
                break;
            }
            let outcome = match reconcile::merge_revision(&self.gor, &heads[0], &heads[1], ctx.me(), ctx.time(), ctx.signer) {
                Ok(o) => o,
                Err(e) => {
                    ctx.event(self.gor.uri(), EventKind::Rejected(e.to_string()));
                    break;
                }
            };
            let MergeOutcome::Merged { revision, stats, .. } = outcome else { break };
            let h = revision.hash();
            let cost = ctx.config.merge_cost.of(&stats);
            ctx.cost += cost;
            if let Err(e) = self.gor.insert(revision) {
                ctx.event(self.gor.uri(), EventKind::Rejected(e.to_string()));
                break;
            }
            ctx.event(self.gor.uri(), EventKind::Merged { hash: h, cost, stats });
            self.publish(ctx, h);
        }
        if let Some(&head) = self.gor.heads().iter().next() {
            if self.gor.heads().len() == 1 && head != self.current && self.is_ancestor(&self.current, &head) {
                self.current = head;
                ctx.event(self.gor.uri(), EventKind::FastForward(head));
            }
        }
        self.master_head = Some(self.current);
    }

    fn receive_status(&mut self, ctx: &mut Ctx, status: StatusMsg) {
        let sender = status.sender.uuid;
        if sender == ctx.me() {
            return;
        }
        if self.peers.update(&status, ctx.time(), ctx.up_since) {
            ctx.event(self.gor.uri(), EventKind::PeerJoined(sender));
        }
        if !self.gor.knows(&status.head) {
            self.wanted_heads.insert(status.head);
            self.request(ctx, [status.head]);
        }
        if status.is_master {
            if self.master.is_none() && self.election.is_none() {
                self.set_master(Some(sender));
            }
            if self.master == Some(sender) {
                if self.gor.contains(&status.head) {
                    self.advance_master_head(status.head);
                } else {
                    self.master_claim = Some(status.head);
                }
            }
        } else if self.master == Some(sender) {
            self.set_master(None);
        }
        self.sync_with_master(ctx);
    }

    fn receive_request(&mut self, ctx: &mut Ctx, req: RevisionRequestMsg) {
        let me = ctx.me();
        if req.requester == me {
            return;
        }
        let from_master = self.master == Some(req.requester);
        let mut answered = 0;
        for h in &req.wanted {
            let Some(rev) = self.gor.get_any(h) else { continue };
            if self.gor.is_local(h) || rev.is_root() {
                continue;
            }
            let creator = rev.author();
            let respond = if from_master {
                creator == Some(me) || creator.map_or(true, |c| !self.peers.contains(&c))
            } else {
                self.master == Some(me)
            };
            if respond {
                ctx.broadcast(self.gor.uri(), Body::Revision(rev.clone()));
                answered += 1;
            }
        }
        if answered > 0 {
            ctx.event(self.gor.uri(), EventKind::RequestAnswered(answered));
        }
    }

    fn vote_choice(&self, ctx: &Ctx) -> Uuid {
        match self.last_voted_for {
            Some(v) if v == ctx.me() || self.peers.contains(&v) => v,
            _ => self.peers.longest_connected(ctx.me(), ctx.up_since),
        }
    }

    fn window(ctx: &Ctx) -> i64 {
        ctx.config.ballot_periods * ctx.config.status_period
    }

    fn receive_vote(&mut self, ctx: &mut Ctx, vote: VoteMsg) {
        if vote.voter == ctx.me() {
            return;
        }
        let key = (vote.election_timestamp, vote.round);
        if let Some(e) = self.election.as_mut() {
            if key == e.key() {
                e.record(&vote);
                return;
            }
            if key < e.key() {
                return;
            }
        } else if self.last_election.is_some_and(|last| key <= last) {
            return;
        }
        let choice = self.vote_choice(ctx);
        let started = self.election.is_none();
        let (e, mine) = Election::join(ctx.me(), ctx.time(), Self::window(ctx), &vote, choice);
        self.election = Some(e);
        if started {
            ctx.event(self.gor.uri(), EventKind::ElectionStarted);
        }
        ctx.broadcast(self.gor.uri(), Body::Vote(mine));
    }

    fn check_deadline(&mut self, ctx: &mut Ctx) {
        let Some(e) = self.election.as_mut() else { return };
        if ctx.time() < e.deadline() {
            return;
        }
        match e.on_deadline(ctx.time(), ctx.rng) {
            ElectionStep::Vote(v) => {
                ctx.event(self.gor.uri(), EventKind::ElectionRound(v.round));
                ctx.broadcast(self.gor.uri(), Body::Vote(v));
            }
            ElectionStep::Decided(winner) => {
                self.last_election = Some(e.key());
                self.election = None;
                self.election_end = ctx.time();
                self.last_voted_for = Some(winner);
                self.set_master(Some(winner));
                ctx.event(self.gor.uri(), EventKind::ElectionDecided(winner));
                if winner == ctx.me() {
                    self.master_head = Some(self.current);
                    self.master_work(ctx);
                }
            }
        }
    }

    fn tick(&mut self, ctx: &mut Ctx) {
        let period = ctx.config.status_period;
        let me = ctx.me();
        for gone in self.peers.expire(ctx.time(), ctx.config.liveness_periods * period) {
            ctx.event(self.gor.uri(), EventKind::PeerExpired(gone));
            if self.master == Some(gone) {
                self.set_master(None);
            }
        }
        let settled = ctx.time() - self.election_end >= 2 * period;
        let lowest = self.peers.min_uuid().map_or(true, |m| me < m);
        if self.election.is_none() && settled && lowest {
            let fresh = |p: &&PeerInfo| p.last_seen > self.election_end;
            let masters = self.peers.iter().filter(fresh).filter(|p| p.is_master).count() + usize::from(self.master == Some(me));
            if masters != 1 {
                let choice = self.vote_choice(ctx);
                let (e, v) = Election::start(me, ctx.time(), Self::window(ctx), choice);
                self.election = Some(e);
                ctx.event(self.gor.uri(), EventKind::ElectionStarted);
                ctx.broadcast(self.gor.uri(), Body::Vote(v));
            }
        }
        let retry: Vec<RevisionHash> = self.gor.wanted().into_iter().chain(self.wanted_heads.iter().copied()).collect();
        self.wanted_heads.retain(|h| !self.gor.knows(h));
        self.request(ctx, retry);
        self.sync_with_master(ctx);
        self.master_work(ctx);
        let status = StatusMsg {
            sender: ctx.id.clone(),
            head: self.published_head(),
            is_master: self.master == Some(me),
            up_since: ctx.up_since,
        };
        ctx.broadcast(self.gor.uri(), Body::Status(status));
    }
}

/// Counters accumulated over an agent's lifetime.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AgentStats {
    pub merges: u64,
    pub merge_time: i64,
    pub triples_touched: u64,
    pub rebases: u64,
    pub rebased_revisions: u64,
    pub published: u64,
    pub elections: u64,
    pub requests: u64,
    pub rejected: u64,
}

/// One agent participating in the synchronization of several documents.
pub struct Agent {
    id: AgentId,
    config: AgentConfig,
    up_since: i64,
    rng: StdRng,
    signer: Option<Box<dyn Signer + Send>>,
    docs: BTreeMap<String, DocState>,
    inbox: VecDeque<Input>,
    held: Vec<Outgoing>,
    busy_until: i64,
    next_tick: i64,
    events: Vec<AgentEvent>,
    stats: AgentStats,
}

impl Agent {
    /// An agent joining at `now`. `seed` drives its election tie-breaks.
    pub fn new(id: AgentId, config: AgentConfig, now: i64, seed: u64) -> Self {
        Agent {
            id,
            config,
            up_since: now,
            rng: StdRng::seed_from_u64(seed),
            signer: None,
            docs: BTreeMap::new(),
            inbox: VecDeque::new(),
            held: Vec::new(),
            busy_until: now,
            next_tick: now,
            events: Vec::new(),
            stats: AgentStats::default(),
        }
    }

    pub fn with_signer(mut self, signer: Box<dyn Signer + Send>) -> Self {
        self.signer = Some(signer);
        self
    }

    pub fn id(&self) -> &AgentId {
        &self.id
    }

    pub fn uuid(&self) -> Uuid {
        self.id.uuid
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn subscribe(&mut self, uri: &str) {
        let up = self.up_since;
        self.docs.entry(uri.to_owned()).or_insert_with(|| DocState::new(uri, up));
    }

    /// Seeds the belief that `master` is master of `uri` with head `head`,
    /// skipping the initial election.
    pub fn assume_master(&mut self, uri: &str, master: Uuid, head: RevisionHash) {
        let me = self.id.uuid;
        self.subscribe(uri);
        let doc = self.docs.get_mut(uri).expect("subscribed");
        doc.master = Some(master);
        doc.master_head = Some(head);
        doc.last_voted_for = Some(master);
        if master == me {
            doc.master_head = Some(doc.current);
        }
    }

    pub fn doc(&self, uri: &str) -> Option<&DocState> {
        self.docs.get(uri)
    }

    pub fn documents(&self) -> impl Iterator<Item = &str> {
        self.docs.keys().map(String::as_str)
    }

    /// The graph at the agent's working head.
    pub fn graph(&self, uri: &str) -> Option<Graph> {
        let doc = self.docs.get(uri)?;
        doc.gor.materialize(&doc.current).ok()
    }

    pub fn is_master(&self, uri: &str) -> bool {
        self.docs.get(uri).is_some_and(|d| d.master == Some(self.id.uuid))
    }

    pub fn is_busy(&self, now: i64) -> bool {
        now < self.busy_until
    }

    pub fn stats(&self) -> AgentStats {
        self.stats
    }

    pub fn drain_events(&mut self) -> Vec<AgentEvent> {
        std::mem::take(&mut self.events)
    }

    /// Earliest time [`Agent::poll`] has work to do.
    pub fn next_wakeup(&self) -> i64 {
        if !self.held.is_empty() || !self.inbox.is_empty() {
            return self.busy_until;
        }
        self.docs
            .values()
            .filter_map(|d| d.election.as_ref().map(Election::deadline))
            .fold(self.next_tick, i64::min)
            .max(self.busy_until)
    }

    /// Queues an input and runs whatever is due.
    pub fn handle(&mut self, now: i64, input: Input) -> Vec<Outgoing> {
        self.inbox.push_back(input);
        self.poll(now)
    }

    /// Releases finished work, processes queued inputs, and fires timers.
    pub fn poll(&mut self, now: i64) -> Vec<Outgoing> {
        if now < self.busy_until {
            return Vec::new();
        }
        let mut out = std::mem::take(&mut self.held);
        while let Some(input) = self.inbox.pop_front() {
            let uri = match &input {
                Input::Frame { frame, .. } => frame.uri.clone(),
                Input::LocalChange { uri, .. } => uri.clone(),
            };
            let mut slot = Some(input);
            let busy = self.run(now, &mut out, Some(&uri), |doc, ctx| {
                if let Some(input) = slot.take() {
                    Self::dispatch(doc, ctx, input);
                }
            });
            if busy {
                return out;
            }
        }
        if now >= self.next_tick {
            while self.next_tick <= now {
                self.next_tick += self.config.status_period;
            }
            if self.run(now, &mut out, None, |doc, ctx| doc.tick(ctx)) {
                return out;
            }
        }
        self.run(now, &mut out, None, |doc, ctx| doc.check_deadline(ctx));
        out
    }

    /// Applies `f` to the document `target` (every document when `None`).
    /// Returns `true` if the work made the agent busy, in which case the
    /// produced frames are held until it completes.
    fn run(&mut self, now: i64, out: &mut Vec<Outgoing>, target: Option<&str>, mut f: impl FnMut(&mut DocState, &mut Ctx)) -> bool {
        let first_event = self.events.len();
        let mut ctx = Ctx {
            id: &self.id,
            up_since: self.up_since,
            config: &self.config,
            now,
            cost: 0,
            rng: &mut self.rng,
            signer: self.signer.as_deref().map(|s| s as &dyn Signer),
            events: &mut self.events,
            out: Vec::new(),
        };
        for (uri, doc) in self.docs.iter_mut() {
            if target.map_or(true, |t| t == uri) {
                f(doc, &mut ctx);
            }
        }
        let cost = ctx.cost;
        let produced = std::mem::take(&mut ctx.out);
        for ev in &self.events[first_event..] {
            match &ev.kind {
                EventKind::Merged { cost, stats, .. } => {
                    self.stats.merges += 1;
                    self.stats.merge_time += cost;
                    self.stats.triples_touched += stats.triples_touched as u64;
                }
                EventKind::Rebased { count, .. } => {
                    self.stats.rebases += 1;
                    self.stats.rebased_revisions += *count as u64;
                }
                EventKind::Published(_) => self.stats.published += 1,
                EventKind::ElectionStarted => self.stats.elections += 1,
                EventKind::RequestSent(_) => self.stats.requests += 1,
                EventKind::Rejected(_) => self.stats.rejected += 1,
                _ => {}
            }
        }
        if cost > 0 {
            self.busy_until = now + cost;
            self.held = produced;
            true
        } else {
            out.extend(produced);
            false
        }
    }

    fn dispatch(doc: &mut DocState, ctx: &mut Ctx, input: Input) {
        match input {
            Input::LocalChange { delta, .. } => doc.local_change(ctx, delta),
            Input::Frame { frame, .. } => match frame.body {
                Body::Status(s) => doc.receive_status(ctx, s),
                Body::Revision(r) => doc.receive_revision(ctx, r),
                Body::RevisionRequest(q) => doc.receive_request(ctx, q),
                Body::Vote(v) => doc.receive_vote(ctx, v),
                Body::Transfer(_) => {}
            },
        }
    }
}
