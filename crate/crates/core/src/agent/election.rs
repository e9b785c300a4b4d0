//! Plurality vote with random tie-resolution rounds.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::RngCore;
use uuid::Uuid;

use crate::wire::VoteMsg;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ElectionStep {
    /// Plurality tie: a new round started and this vote must be sent.
    Vote(VoteMsg),
    Decided(Uuid),
}

/// One election as seen by one agent.
///
/// Round `r` closes at `election_ts + (r + 1) * window`, so agents that
/// joined at slightly different times still close rounds together.
#[derive(Debug, Clone)]
pub struct Election {
    me: Uuid,
    election_ts: i64,
    round: u32,
    deadline: i64,
    window: i64,
    candidates: Option<BTreeSet<Uuid>>,
    ballots: BTreeMap<Uuid, Uuid>,
}

impl Election {
    fn new(me: Uuid, election_ts: i64, round: u32, window: i64, now: i64) -> Self {
        let aligned = election_ts + (i64::from(round) + 1) * window;
        Election {
            me,
            election_ts,
            round,
            deadline: if aligned > now { aligned } else { now + window },
            window,
            candidates: None,
            ballots: BTreeMap::new(),
        }
    }

    fn cast(&mut self, candidate: Uuid, now: i64) -> VoteMsg {
        self.ballots.insert(self.me, candidate);
        VoteMsg {
            voter: self.me,
            candidate,
            round: self.round,
            vote_timestamp: now,
            election_timestamp: self.election_ts,
        }
    }

    /// Starts a new election, voting for `choice`.
    pub fn start(me: Uuid, now: i64, window: i64, choice: Uuid) -> (Self, VoteMsg) {
        let mut e = Election::new(me, now, 0, window, now);
        let v = e.cast(choice, now);
        (e, v)
    }

    /// Joins the election a received vote belongs to. In an opening round
    /// the agent votes `choice`; in a resolution round, whose tied set it
    /// never saw, it backs the received candidate.
    pub fn join(me: Uuid, now: i64, window: i64, msg: &VoteMsg, choice: Uuid) -> (Self, VoteMsg) {
        let mut e = Election::new(me, msg.election_timestamp, msg.round, window, now);
        e.ballots.insert(msg.voter, msg.candidate);
        let v = e.cast(if msg.round == 0 { choice } else { msg.candidate }, now);
        (e, v)
    }

    pub fn key(&self) -> (i64, u32) {
        (self.election_ts, self.round)
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn election_ts(&self) -> i64 {
        self.election_ts
    }

    pub fn deadline(&self) -> i64 {
        self.deadline
    }

    pub fn ballots(&self) -> &BTreeMap<Uuid, Uuid> {
        &self.ballots
    }

    /// Records a ballot of the current round. Returns `false` for any other
    /// round.
    pub fn record(&mut self, msg: &VoteMsg) -> bool {
        if (msg.election_timestamp, msg.round) != self.key() {
            return false;
        }
        self.ballots.insert(msg.voter, msg.candidate);
        true
    }

    /// Candidates with the most ballots, in UUID order.
    pub fn leaders(&self) -> Vec<Uuid> {
        let mut counts: BTreeMap<Uuid, usize> = BTreeMap::new();
        for c in self.ballots.values() {
            *counts.entry(*c).or_default() += 1;
        }
        let best = counts.values().copied().max().unwrap_or(0);
        counts.into_iter().filter(|(_, n)| *n == best).map(|(c, _)| c).collect()
    }

    /// Closes the round: a unique leader wins, otherwise a resolution round
    /// starts with a uniformly random vote among the leaders.
    pub fn on_deadline(&mut self, now: i64, rng: &mut dyn RngCore) -> ElectionStep {
        let leaders = self.leaders();
        if leaders.len() == 1 {
            return ElectionStep::Decided(leaders[0]);
        }
        let pool = if leaders.is_empty() { vec![self.me] } else { leaders };
        let pick = *pool.choose(rng).expect("non-empty pool");
        self.round += 1;
        self.deadline = {
            let aligned = self.election_ts + (i64::from(self.round) + 1) * self.window;
            if aligned > now {
                aligned
            } else {
                now + self.window
            }
        };
        self.candidates = Some(pool.into_iter().collect());
        self.ballots.clear();
        ElectionStep::Vote(self.cast(pick, now))
    }

    /// Candidates of the current resolution round, if any.
    pub fn candidates(&self) -> Option<&BTreeSet<Uuid>> {
        self.candidates.as_ref()
    }
}
