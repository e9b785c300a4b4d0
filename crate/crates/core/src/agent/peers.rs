//! The peer table: who is reachable, since when, and what they last said.

use std::collections::{BTreeMap, BTreeSet};

use uuid::Uuid;

use crate::revision::RevisionHash;
use crate::wire::{AgentId, StatusMsg};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerInfo {
    pub id: AgentId,
    pub head: RevisionHash,
    pub is_master: bool,
    pub up_since: i64,
    pub last_seen: i64,
    /// Start of the current uninterrupted connection.
    pub connected_since: i64,
}

#[derive(Debug, Clone, Default)]
pub struct PeerTable {
    peers: BTreeMap<Uuid, PeerInfo>,
    ever_seen: BTreeSet<Uuid>,
}

impl PeerTable {
    /// Records a status. Returns `true` if the peer was not in the table.
    ///
    /// On first contact the connection is dated from when both agents were
    /// up; after an expiry it is dated from `now`.
    pub fn update(&mut self, status: &StatusMsg, now: i64, my_up_since: i64) -> bool {
        let uuid = status.sender.uuid;
        if let Some(p) = self.peers.get_mut(&uuid) {
            p.id = status.sender.clone();
            p.head = status.head;
            p.is_master = status.is_master;
            p.up_since = status.up_since;
            p.last_seen = now;
            return false;
        }
        let connected_since = if self.ever_seen.insert(uuid) {
            my_up_since.max(status.up_since)
        } else {
            now
        };
        self.peers.insert(
            uuid,
            PeerInfo {
                id: status.sender.clone(),
                head: status.head,
                is_master: status.is_master,
                up_since: status.up_since,
                last_seen: now,
                connected_since,
            },
        );
        true
    }

    /// Drops peers not heard from since `now - timeout`.
    pub fn expire(&mut self, now: i64, timeout: i64) -> Vec<Uuid> {
        let gone: Vec<Uuid> = self
            .peers
            .values()
            .filter(|p| now - p.last_seen > timeout)
            .map(|p| p.id.uuid)
            .collect();
        for u in &gone {
            self.peers.remove(u);
        }
        gone
    }

    pub fn get(&self, uuid: &Uuid) -> Option<&PeerInfo> {
        self.peers.get(uuid)
    }

    pub fn contains(&self, uuid: &Uuid) -> bool {
        self.peers.contains_key(uuid)
    }

    pub fn len(&self) -> usize {
        self.peers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peers.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PeerInfo> {
        self.peers.values()
    }

    pub fn min_uuid(&self) -> Option<Uuid> {
        self.peers.keys().next().copied()
    }

    /// The candidate connected the longest, ties broken by earliest start
    /// then lowest UUID. `me` competes with `(my_up_since, my_up_since)`.
    pub fn longest_connected(&self, me: Uuid, my_up_since: i64) -> Uuid {
        self.peers
            .values()
            .map(|p| (p.connected_since, p.up_since, p.id.uuid))
            .chain(std::iter::once((my_up_since, my_up_since, me)))
            .min()
            .map(|(_, _, u)| u)
            .unwrap_or(me)
    }
}
