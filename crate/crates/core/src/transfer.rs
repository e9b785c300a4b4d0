//! Chunked dataset transfer: one sender, one or more receivers.
//!
//! Both ends are sans-IO state machines driven with simulated
//! milliseconds. The sender loop processes pending resend, throttle and
//! error messages, sends the next fresh chunk, then sleeps
//! `send_cost_ms + tau * tau_unit_ms`. After `Finished` it lingers,
//! answering resend requests and repeating `Finished` as a heartbeat, so
//! receivers can recover stragglers; an aborted sender repeats `Error`
//! instead. An aborted receiver answers further data with `Error`, and a
//! `Finished` whose last sequence differs from the declared one fails the
//! receive. A receiver also fails after `max_silent_rounds` consecutive
//! rounds without hearing from the sender.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use uuid::Uuid;

use crate::dataset::Payload;
use crate::error::TransferError;
use crate::wire::TransferMsg;

pub const CHUNK_SIZE: usize = 64 * 1024;

#[derive(Debug, Clone)]
pub struct SenderConfig {
    /// Give up waiting for missing `Ready` messages after this long and
    /// stream to the receivers that answered.
    pub ready_timeout_ms: i64,
    pub send_cost_ms: i64,
    pub tau_unit_ms: i64,
    pub heartbeat_ms: i64,
    /// Stop lingering after this long without a resend request.
    pub linger_ms: i64,
}

impl Default for SenderConfig {
    fn default() -> Self {
        SenderConfig {
            ready_timeout_ms: 2000,
            send_cost_ms: 1,
            tau_unit_ms: 10,
            heartbeat_ms: 400,
            linger_ms: 3000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SenderPhase {
    WaitingReady,
    Sending,
    Lingering,
    Done,
}

/// One loop iteration's throttle bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThrottleStep {
    pub ups: u32,
    pub downs: u32,
    pub tau: u32,
}

pub struct Sender {
    dataset: String,
    payload: Payload,
    cfg: SenderConfig,
    receivers: BTreeSet<Uuid>,
    ready: BTreeSet<Uuid>,
    phase: SenderPhase,
    started_at: i64,
    next_at: i64,
    next_sequence: u64,
    tau: u32,
    aborted: bool,
    last_request_at: i64,
    resend: VecDeque<(Uuid, Vec<u64>)>,
    ups: u32,
    downs: u32,
    error: bool,
    trace: Vec<ThrottleStep>,
    data_sent: u64,
}

impl Sender {
    /// Fails with `PayloadMissing` when the payload is not for `dataset`.
    pub fn new(
        dataset: impl Into<String>,
        payload: Option<Payload>,
        receivers: impl IntoIterator<Item = Uuid>,
        cfg: SenderConfig,
        now: i64,
    ) -> Result<Self, TransferError> {
        let dataset = dataset.into();
        let payload = match payload {
            Some(p) if p.dataset == dataset => p,
            _ => return Err(TransferError::PayloadMissing(dataset)),
        };
        Ok(Sender {
            dataset,
            payload,
            cfg,
            receivers: receivers.into_iter().collect(),
            ready: BTreeSet::new(),
            phase: SenderPhase::WaitingReady,
            started_at: now,
            next_at: now,
            next_sequence: 0,
            tau: 0,
            aborted: false,
            last_request_at: now,
            resend: VecDeque::new(),
            ups: 0,
            downs: 0,
            error: false,
            trace: Vec::new(),
            data_sent: 0,
        })
    }

    pub fn dataset(&self) -> &str {
        &self.dataset
    }

    pub fn phase(&self) -> SenderPhase {
        self.phase
    }

    pub fn tau(&self) -> u32 {
        self.tau
    }

    pub fn aborted(&self) -> bool {
        self.aborted
    }

    pub fn throttle_trace(&self) -> &[ThrottleStep] {
        &self.trace
    }

    pub fn data_frames_sent(&self) -> u64 {
        self.data_sent
    }

    pub fn on_message(&mut self, now: i64, from: Uuid, msg: TransferMsg) -> Vec<(Uuid, TransferMsg)> {
        if !self.receivers.contains(&from) {
            return Vec::new();
        }
        match msg {
            TransferMsg::Ready => {
                let late = self.phase != SenderPhase::WaitingReady;
                if self.ready.insert(from) && late && !self.aborted {
                    // joined after the start: catch up on everything sent so far
                    let sent: Vec<u64> = (0..self.next_sequence).collect();
                    if self.phase == SenderPhase::Lingering {
                        self.last_request_at = now;
                        let mut out = self.chunks_for(from, &sent);
                        out.push((from, self.finished_msg()));
                        return out;
                    }
                    self.resend.push_back((from, sent));
                }
            }
            TransferMsg::ResendRequest(seqs) => match self.phase {
                SenderPhase::Lingering => {
                    self.last_request_at = now;
                    if self.aborted {
                        return vec![(from, TransferMsg::Error)];
                    }
                    let mut out = self.chunks_for(from, &seqs);
                    out.push((from, self.finished_msg()));
                    return out;
                }
                SenderPhase::Done if self.aborted => return vec![(from, TransferMsg::Error)],
                _ => self.resend.push_back((from, seqs)),
            },
            TransferMsg::ThrottleUp => self.ups += 1,
            TransferMsg::ThrottleDown => self.downs += 1,
            TransferMsg::Error if self.phase == SenderPhase::Lingering && !self.aborted => {
                self.aborted = true;
                return self.ready.iter().map(|r| (*r, TransferMsg::Error)).collect();
            }
            TransferMsg::Error => self.error = true,
            TransferMsg::Data { .. } | TransferMsg::Finished(_) => {}
        }
        Vec::new()
    }

    pub fn next_wakeup(&self) -> Option<i64> {
        match self.phase {
            SenderPhase::WaitingReady => Some(self.started_at + self.cfg.ready_timeout_ms),
            SenderPhase::Sending | SenderPhase::Lingering => Some(self.next_at),
            SenderPhase::Done => None,
        }
    }

    pub fn poll(&mut self, now: i64) -> Vec<(Uuid, TransferMsg)> {
        let mut out = Vec::new();
        if self.phase == SenderPhase::WaitingReady {
            let all = self.ready.len() == self.receivers.len();
            if all || now >= self.started_at + self.cfg.ready_timeout_ms {
                if self.ready.is_empty() {
                    self.aborted = true;
                    self.phase = SenderPhase::Done;
                    return out;
                }
                self.phase = SenderPhase::Sending;
                self.next_at = now;
            }
        }
        while self.phase == SenderPhase::Sending && now >= self.next_at {
            self.iterate(&mut out);
            if self.phase == SenderPhase::Sending {
                self.next_at = now + self.cfg.send_cost_ms + i64::from(self.tau) * self.cfg.tau_unit_ms;
            } else {
                self.last_request_at = now;
                self.next_at = now + self.cfg.heartbeat_ms;
            }
        }
        if self.phase == SenderPhase::Lingering && now >= self.next_at {
            if now - self.last_request_at >= self.cfg.linger_ms {
                self.phase = SenderPhase::Done;
            } else {
                let beat = if self.aborted { TransferMsg::Error } else { self.finished_msg() };
                out.extend(self.ready.iter().map(|r| (*r, beat.clone())));
                self.next_at = now + self.cfg.heartbeat_ms;
            }
        }
        out
    }

    fn iterate(&mut self, out: &mut Vec<(Uuid, TransferMsg)>) {
        let mut finished = false;
        while let Some((to, seqs)) = self.resend.pop_front() {
            out.extend(self.chunks_for(to, &seqs));
        }
        let ups = std::mem::take(&mut self.ups);
        let downs = std::mem::take(&mut self.downs);
        for _ in 0..ups {
            self.tau = self.tau.saturating_sub(1);
        }
        self.tau += downs;
        if ups > 0 || downs > 0 {
            self.trace.push(ThrottleStep {
                ups,
                downs,
                tau: self.tau,
            });
        }
        if std::mem::take(&mut self.error) {
            self.aborted = true;
            finished = true;
            out.extend(self.ready.iter().map(|r| (*r, TransferMsg::Error)));
        } else if let Some(chunk) = self.payload.chunk(self.next_sequence) {
            let msg = TransferMsg::Data {
                sequence: self.next_sequence,
                data: chunk.to_vec(),
            };
            self.data_sent += self.ready.len() as u64;
            out.extend(self.ready.iter().map(|r| (*r, msg.clone())));
            self.next_sequence += 1;
        } else {
            finished = true;
        }
        if finished {
            let fin = self.finished_msg();
            out.extend(self.ready.iter().map(|r| (*r, fin.clone())));
            self.phase = SenderPhase::Lingering;
        }
    }

    fn chunks_for(&mut self, to: Uuid, seqs: &[u64]) -> Vec<(Uuid, TransferMsg)> {
        let mut out = Vec::new();
        for &s in seqs.iter().collect::<BTreeSet<_>>() {
            if s >= self.next_sequence {
                continue;
            }
            if let Some(chunk) = self.payload.chunk(s) {
                self.data_sent += 1;
                out.push((
                    to,
                    TransferMsg::Data {
                        sequence: s,
                        data: chunk.to_vec(),
                    },
                ));
            }
        }
        out
    }

    fn finished_msg(&self) -> TransferMsg {
        TransferMsg::Finished(self.next_sequence as i64 - 1)
    }
}

/// Replays a throttle trace from scratch: `tau` after each step must be
/// the clamped running total.
pub fn replay_throttle(trace: &[ThrottleStep]) -> bool {
    let mut tau: i64 = 0;
    trace.iter().all(|s| {
        tau = (tau - i64::from(s.ups)).max(0) + i64::from(s.downs);
        tau == i64::from(s.tau)
    })
}

#[derive(Debug, Clone)]
pub struct ReceiverConfig {
    pub chunk_size: usize,
    /// Highest sequence the sender may use, from the transfer plan.
    pub declared_last: i64,
    pub round_ms: i64,
    pub max_silent_rounds: u32,
    pub throttle_high: usize,
}

impl ReceiverConfig {
    pub fn for_payload_len(total_bytes: u64) -> Self {
        let chunks = total_bytes.div_ceil(CHUNK_SIZE as u64) as i64;
        ReceiverConfig {
            chunk_size: CHUNK_SIZE,
            declared_last: chunks - 1,
            round_ms: 500,
            max_silent_rounds: 10,
            throttle_high: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReceiverOutcome {
    Committed { total_bytes: u64 },
    Aborted { reason: String },
}

pub struct Receiver {
    dataset: String,
    blob_type: String,
    cfg: ReceiverConfig,
    received: BTreeSet<u64>,
    highest_seen: i64,
    last: Option<i64>,
    heard_any_data: bool,
    heard_this_round: bool,
    silent_rounds: u32,
    next_round: i64,
    outcome: Option<ReceiverOutcome>,
    throttle_ups: u32,
    throttle_downs: u32,
    requests_sent: u32,
}

impl Receiver {
    /// Opens a partial payload in `store` and emits `Ready`.
    pub fn start(
        dataset: impl Into<String>,
        blob_type: impl Into<String>,
        cfg: ReceiverConfig,
        now: i64,
        store: &mut dyn PayloadStore,
    ) -> (Self, Vec<TransferMsg>) {
        let dataset = dataset.into();
        let blob_type = blob_type.into();
        let mut r = Receiver {
            dataset,
            blob_type,
            next_round: now + cfg.round_ms,
            cfg,
            received: BTreeSet::new(),
            highest_seen: -1,
            last: None,
            heard_any_data: false,
            heard_this_round: false,
            silent_rounds: 0,
            outcome: None,
            throttle_ups: 0,
            throttle_downs: 0,
            requests_sent: 0,
        };
        if let Err(e) = store.begin(&r.dataset, &r.blob_type, r.cfg.chunk_size) {
            r.outcome = Some(ReceiverOutcome::Aborted {
                reason: format!("store: {e}"),
            });
            return (r, vec![TransferMsg::Error]);
        }
        (r, vec![TransferMsg::Ready])
    }

    pub fn dataset(&self) -> &str {
        &self.dataset
    }

    pub fn outcome(&self) -> Option<&ReceiverOutcome> {
        self.outcome.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn throttle_counts(&self) -> (u32, u32) {
        (self.throttle_ups, self.throttle_downs)
    }

    pub fn requests_sent(&self) -> u32 {
        self.requests_sent
    }

    pub fn next_wakeup(&self) -> Option<i64> {
        (!self.is_done()).then_some(self.next_round)
    }

    /// Handles one message. `queue_depth` is the number of transfer frames
    /// still waiting behind this one.
    pub fn on_message(&mut self, msg: TransferMsg, queue_depth: usize, store: &mut dyn PayloadStore) -> Vec<TransferMsg> {
        if self.is_done() {
            let failed = matches!(self.outcome, Some(ReceiverOutcome::Aborted { .. }));
            return match msg {
                TransferMsg::Data { .. } | TransferMsg::Finished(_) if failed => vec![TransferMsg::Error],
                _ => Vec::new(),
            };
        }
        self.heard_this_round = true;
        let mut out = Vec::new();
        match msg {
            TransferMsg::Data { sequence, data } => {
                self.heard_any_data = true;
                let valid = data.len() <= self.cfg.chunk_size && (sequence as i128) <= i128::from(self.cfg.declared_last);
                if !valid {
                    out.push(TransferMsg::Error);
                    self.abort(store, format!("invalid chunk {sequence} ({} bytes)", data.len()));
                    return out;
                }
                let seq = sequence as i64;
                if seq > self.highest_seen + 1 {
                    let gaps: Vec<u64> = ((self.highest_seen + 1) as u64..sequence)
                        .filter(|s| !self.received.contains(s))
                        .collect();
                    if !gaps.is_empty() {
                        self.requests_sent += 1;
                        out.push(TransferMsg::ResendRequest(gaps));
                    }
                }
                self.highest_seen = self.highest_seen.max(seq);
                if self.received.insert(sequence) {
                    if let Err(e) = store.put_chunk(&self.dataset, sequence, &data) {
                        out.push(TransferMsg::Error);
                        self.abort(store, format!("store: {e}"));
                        return out;
                    }
                }
                if queue_depth > self.cfg.throttle_high {
                    self.throttle_downs += 1;
                    out.push(TransferMsg::ThrottleDown);
                } else if queue_depth == 0 {
                    self.throttle_ups += 1;
                    out.push(TransferMsg::ThrottleUp);
                }
                if self.last.is_some() {
                    self.try_finalise(store, &mut out);
                }
            }
            TransferMsg::Finished(last) => {
                self.heard_any_data = true;
                if last != self.cfg.declared_last {
                    // an aborting sender still announces Finished; never commit a truncated payload
                    out.push(TransferMsg::Error);
                    self.abort(store, format!("finished at {last}, expected {}", self.cfg.declared_last));
                    return out;
                }
                if self.last.is_none() {
                    self.last = Some(last);
                    self.try_finalise(store, &mut out);
                    if !self.is_done() {
                        self.request_missing(&mut out);
                    }
                }
            }
            TransferMsg::Error => self.abort(store, "sender reported an error".into()),
            TransferMsg::Ready | TransferMsg::ResendRequest(_) | TransferMsg::ThrottleUp | TransferMsg::ThrottleDown => {}
        }
        out
    }

    /// Round timer: retries `Ready` or resend requests and counts silence.
    pub fn poll(&mut self, now: i64, store: &mut dyn PayloadStore) -> Vec<TransferMsg> {
        let mut out = Vec::new();
        while !self.is_done() && now >= self.next_round {
            self.next_round += self.cfg.round_ms;
            if std::mem::take(&mut self.heard_this_round) {
                self.silent_rounds = 0;
            } else {
                self.silent_rounds += 1;
                if self.silent_rounds >= self.cfg.max_silent_rounds {
                    self.abort(store, format!("sender silent for {} rounds", self.silent_rounds));
                    break;
                }
            }
            if !self.heard_any_data {
                out.push(TransferMsg::Ready);
            } else {
                self.request_missing(&mut out);
            }
        }
        out
    }

    fn missing(&self) -> Vec<u64> {
        let upto = self.last.unwrap_or(self.highest_seen);
        (0..=upto).map(|s| s as u64).filter(|s| !self.received.contains(s)).collect()
    }

    fn request_missing(&mut self, out: &mut Vec<TransferMsg>) {
        let missing = self.missing();
        if !missing.is_empty() {
            self.requests_sent += 1;
            out.push(TransferMsg::ResendRequest(missing));
        }
    }

    fn try_finalise(&mut self, store: &mut dyn PayloadStore, out: &mut Vec<TransferMsg>) {
        let Some(last) = self.last else { return };
        if !self.missing().is_empty() {
            return;
        }
        match store.commit(&self.dataset, last) {
            Ok(total_bytes) => self.outcome = Some(ReceiverOutcome::Committed { total_bytes }),
            Err(e) => {
                out.push(TransferMsg::Error);
                self.abort(store, format!("commit: {e}"));
            }
        }
    }

    fn abort(&mut self, store: &mut dyn PayloadStore, reason: String) {
        // best effort: a failing purge still leaves the transfer aborted
        let _ = store.abort(&self.dataset);
        self.outcome = Some(ReceiverOutcome::Aborted { reason });
    }
}

/// Storage for received payloads. Chunks go to a partial area until
/// `commit`; `abort` purges them.
pub trait PayloadStore {
    fn begin(&mut self, dataset: &str, blob_type: &str, chunk_size: usize) -> io::Result<()>;
    fn put_chunk(&mut self, dataset: &str, sequence: u64, data: &[u8]) -> io::Result<()>;
    /// Commits chunks `0..=last` and returns the payload size.
    fn commit(&mut self, dataset: &str, last: i64) -> io::Result<u64>;
    fn abort(&mut self, dataset: &str) -> io::Result<()>;
    fn get(&self, dataset: &str) -> io::Result<Option<Payload>>;
    fn has_partial(&self, dataset: &str) -> bool;
}

#[derive(Debug, Default)]
struct Partial {
    blob_type: String,
    chunk_size: usize,
    chunks: BTreeMap<u64, Vec<u8>>,
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    partial: BTreeMap<String, Partial>,
    committed: BTreeMap<String, Payload>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, payload: Payload) {
        self.committed.insert(payload.dataset.clone(), payload);
    }

    pub fn committed(&self) -> impl Iterator<Item = &Payload> {
        self.committed.values()
    }
}

fn missing_chunk(dataset: &str, s: i64) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, format!("{dataset}: chunk {s} missing at commit"))
}

impl PayloadStore for MemoryStore {
    fn begin(&mut self, dataset: &str, blob_type: &str, chunk_size: usize) -> io::Result<()> {
        self.partial.insert(
            dataset.to_string(),
            Partial {
                blob_type: blob_type.to_string(),
                chunk_size,
                chunks: BTreeMap::new(),
            },
        );
        Ok(())
    }

    fn put_chunk(&mut self, dataset: &str, sequence: u64, data: &[u8]) -> io::Result<()> {
        let p = self
            .partial
            .get_mut(dataset)
            .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, "no partial payload"))?;
        p.chunks.insert(sequence, data.to_vec());
        Ok(())
    }

    fn commit(&mut self, dataset: &str, last: i64) -> io::Result<u64> {
        let p = self
            .partial
            .remove(dataset)
            .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, "no partial payload"))?;
        let mut bytes = Vec::new();
        for s in 0..=last {
            bytes.extend_from_slice(p.chunks.get(&(s as u64)).ok_or_else(|| missing_chunk(dataset, s))?);
        }
        let payload = Payload::from_bytes(dataset, p.blob_type, &bytes, p.chunk_size.max(1));
        self.committed.insert(dataset.to_string(), payload);
        Ok(bytes.len() as u64)
    }

    fn abort(&mut self, dataset: &str) -> io::Result<()> {
        self.partial.remove(dataset);
        Ok(())
    }

    fn get(&self, dataset: &str) -> io::Result<Option<Payload>> {
        Ok(self.committed.get(dataset).cloned())
    }

    fn has_partial(&self, dataset: &str) -> bool {
        self.partial.contains_key(dataset)
    }
}

/// One file per dataset: a header (uri, blob type, chunk size, total bytes)
/// followed by the raw bytes. Chunks are written in place into
/// `<name>.partial`, which is renamed to `<name>.payload` on commit.
#[derive(Debug)]
pub struct FileStore {
    dir: PathBuf,
    open: BTreeMap<String, (PathBuf, u64, usize)>,
}

impl FileStore {
    pub fn new(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(FileStore {
            dir,
            open: BTreeMap::new(),
        })
    }

    fn stem(&self, dataset: &str) -> PathBuf {
        let digest = Sha256::digest(dataset.as_bytes());
        self.dir.join(hex::encode(&digest[..16]))
    }

    pub fn payload_path(&self, dataset: &str) -> PathBuf {
        self.stem(dataset).with_extension("payload")
    }

    pub fn partial_path(&self, dataset: &str) -> PathBuf {
        self.stem(dataset).with_extension("partial")
    }

    /// Stores a complete payload directly, as the original holder would.
    pub fn insert(&mut self, payload: &Payload, chunk_size: usize) -> io::Result<()> {
        let path = self.partial_path(&payload.dataset);
        let mut f = File::create(&path)?;
        let header = header(&payload.dataset, &payload.blob_type, chunk_size, payload.total_bytes());
        f.write_all(&header)?;
        f.write_all(&payload.to_bytes())?;
        f.sync_all()?;
        fs::rename(path, self.payload_path(&payload.dataset))
    }
}

fn header(uri: &str, blob_type: &str, chunk_size: usize, total: u64) -> Vec<u8> {
    let mut h = Vec::new();
    h.extend_from_slice(&(uri.len() as u16).to_be_bytes());
    h.extend_from_slice(uri.as_bytes());
    h.extend_from_slice(&(blob_type.len() as u16).to_be_bytes());
    h.extend_from_slice(blob_type.as_bytes());
    h.extend_from_slice(&(chunk_size as u32).to_be_bytes());
    h.extend_from_slice(&total.to_be_bytes());
    h
}

fn read_payload(path: &Path) -> io::Result<Payload> {
    let mut data = Vec::new();
    File::open(path)?.read_to_end(&mut data)?;
    let bad = || io::Error::new(io::ErrorKind::InvalidData, format!("{}: bad payload header", path.display()));
    let mut pos = 0usize;
    let mut take = |n: usize| -> io::Result<&[u8]> {
        let s = data.get(pos..pos + n).ok_or_else(bad)?;
        pos += n;
        Ok(s)
    };
    let ulen = u16::from_be_bytes(take(2)?.try_into().map_err(|_| bad())?) as usize;
    let uri = String::from_utf8(take(ulen)?.to_vec()).map_err(|_| bad())?;
    let blen = u16::from_be_bytes(take(2)?.try_into().map_err(|_| bad())?) as usize;
    let blob = String::from_utf8(take(blen)?.to_vec()).map_err(|_| bad())?;
    let chunk = u32::from_be_bytes(take(4)?.try_into().map_err(|_| bad())?) as usize;
    let total = u64::from_be_bytes(take(8)?.try_into().map_err(|_| bad())?);
    let body = take(total as usize)?.to_vec();
    Ok(Payload::from_bytes(uri, blob, &body, chunk.max(1)))
}

impl PayloadStore for FileStore {
    fn begin(&mut self, dataset: &str, blob_type: &str, chunk_size: usize) -> io::Result<()> {
        let path = self.partial_path(dataset);
        let h = header(dataset, blob_type, chunk_size, 0);
        File::create(&path)?.write_all(&h)?;
        self.open.insert(dataset.to_string(), (path, h.len() as u64, chunk_size));
        Ok(())
    }

    fn put_chunk(&mut self, dataset: &str, sequence: u64, data: &[u8]) -> io::Result<()> {
        let (path, offset, chunk) = self
            .open
            .get(dataset)
            .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, "no partial payload"))?;
        let mut f = OpenOptions::new().write(true).open(path)?;
        f.seek(SeekFrom::Start(offset + sequence * *chunk as u64))?;
        f.write_all(data)
    }

    fn commit(&mut self, dataset: &str, last: i64) -> io::Result<u64> {
        let (path, offset, _) = self
            .open
            .remove(dataset)
            .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, "no partial payload"))?;
        let mut f = OpenOptions::new().write(true).open(&path)?;
        let total = f.metadata()?.len() - offset;
        if last < 0 && total != 0 {
            return Err(missing_chunk(dataset, 0));
        }
        f.seek(SeekFrom::Start(offset - 8))?;
        f.write_all(&total.to_be_bytes())?;
        f.sync_all()?;
        fs::rename(&path, self.payload_path(dataset))?;
        Ok(total)
    }

    fn abort(&mut self, dataset: &str) -> io::Result<()> {
        self.open.remove(dataset);
        match fs::remove_file(self.partial_path(dataset)) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
            _ => Ok(()),
        }
    }

    fn get(&self, dataset: &str) -> io::Result<Option<Payload>> {
        let path = self.payload_path(dataset);
        if !path.exists() {
            return Ok(None);
        }
        read_payload(&path).map(Some)
    }

    fn has_partial(&self, dataset: &str) -> bool {
        self.partial_path(dataset).exists()
    }
}

/// A candidate sender for a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Holder {
    pub agent: Uuid,
    pub bandwidth: u64,
    pub load: u64,
}

/// The send/receive task pair for one dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferPlan {
    pub dataset: String,
    pub sender: Uuid,
    pub receivers: Vec<Uuid>,
}

/// Picks the holder with the highest bandwidth, then the lowest load, then
/// the lowest uuid.
pub fn plan_transfer(dataset: &str, holders: &[Holder], receivers: &[Uuid]) -> Result<TransferPlan, TransferError> {
    let best = holders
        .iter()
        .min_by(|a, b| {
            b.bandwidth
                .cmp(&a.bandwidth)
                .then(a.load.cmp(&b.load))
                .then(a.agent.cmp(&b.agent))
        })
        .ok_or_else(|| TransferError::NoHolder(dataset.to_string()))?;
    Ok(TransferPlan {
        dataset: dataset.to_string(),
        sender: best.agent,
        receivers: receivers.iter().copied().filter(|r| *r != best.agent).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(n: u128) -> Uuid {
        Uuid::from_u128(n)
    }

    #[test]
    fn lossless_trace() {
        let bytes: Vec<u8> = (0..10 * 16).map(|i| i as u8).collect();
        let payload = Payload::from_bytes("d", "b", &bytes, 16);
        let mut s = Sender::new("d", Some(payload), [id(1)], SenderConfig::default(), 0).unwrap();
        assert!(s.poll(0).is_empty());
        s.on_message(0, id(1), TransferMsg::Ready);
        let mut frames = Vec::new();
        for t in 0..20 {
            frames.extend(s.poll(t));
        }
        let kinds: Vec<_> = frames.iter().map(|(_, m)| m.clone()).collect();
        assert_eq!(kinds.len(), 11);
        for (i, m) in kinds[..10].iter().enumerate() {
            assert!(matches!(m, TransferMsg::Data { sequence, .. } if *sequence == i as u64));
        }
        assert_eq!(kinds[10], TransferMsg::Finished(9));
    }

    #[test]
    fn missing_payload() {
        assert!(matches!(
            Sender::new("d", None, [id(1)], SenderConfig::default(), 0),
            Err(TransferError::PayloadMissing(_))
        ));
    }

    #[test]
    fn tau_clamps_at_zero() {
        let payload = Payload::from_bytes("d", "b", &[0; 64], 8);
        let mut s = Sender::new("d", Some(payload), [id(1)], SenderConfig::default(), 0).unwrap();
        s.on_message(0, id(1), TransferMsg::Ready);
        s.poll(0);
        for _ in 0..3 {
            s.on_message(0, id(1), TransferMsg::ThrottleUp);
        }
        s.on_message(0, id(1), TransferMsg::ThrottleDown);
        s.poll(1);
        assert_eq!(s.tau(), 1);
        assert!(replay_throttle(s.throttle_trace()));
    }

    #[test]
    fn plan_prefers_bandwidth_then_load_then_uuid() {
        let h = |a, bw, load| Holder {
            agent: id(a),
            bandwidth: bw,
            load,
        };
        assert_eq!(plan_transfer("d", &[h(5, 10, 0)], &[id(9)]).unwrap().sender, id(5));
        assert_eq!(plan_transfer("d", &[h(5, 10, 1), h(3, 10, 1)], &[]).unwrap().sender, id(3));
        assert_eq!(plan_transfer("d", &[h(5, 10, 1), h(3, 10, 2)], &[]).unwrap().sender, id(5));
        assert_eq!(plan_transfer("d", &[h(5, 10, 1), h(3, 20, 9)], &[]).unwrap().sender, id(3));
        assert!(matches!(plan_transfer("d", &[], &[]), Err(TransferError::NoHolder(_))));
    }
}
