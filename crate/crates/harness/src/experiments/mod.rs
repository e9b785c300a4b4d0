//! The experiment set. Each runner returns a [`RunOutput`] whose checks
//! decide the exit code.

mod artifacts;
mod collab;
mod fuzz;
mod max_rate;
mod merge_scaling;
mod never_sync;
mod partition;
mod rebase_scaling;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use anyhow::{bail, Result};
use graphsync::{codec, Delta, Graph, GraphOfRevisions, Revision, Triple};
use uuid::Uuid;

use crate::output::{sha256_hex, RunOutput};

pub use collab::collab_mapping;
pub use fuzz::transfer_fuzz;
pub use max_rate::max_rate;
pub use merge_scaling::merge_scaling;
pub use never_sync::never_sync;
pub use artifacts::{describe_event, world_artifacts};
pub use partition::partition_12;
pub(crate) use partition::{final_checks as partition_final_checks, sample as partition_sample, timeline_table as partition_timeline};
pub use rebase_scaling::rebase_scaling;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Experiment {
    MergeScaling,
    RebaseScaling,
    Partition12,
    MaxRate,
    NeverSync,
    CollabMapping,
    TransferFuzz,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::MergeScaling,
        Experiment::RebaseScaling,
        Experiment::Partition12,
        Experiment::MaxRate,
        Experiment::NeverSync,
        Experiment::CollabMapping,
        Experiment::TransferFuzz,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::MergeScaling => "merge-scaling",
            Experiment::RebaseScaling => "rebase-scaling",
            Experiment::Partition12 => "partition-12",
            Experiment::MaxRate => "max-rate",
            Experiment::NeverSync => "never-sync",
            Experiment::CollabMapping => "collab-mapping",
            Experiment::TransferFuzz => "transfer-fuzz",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

/// Knobs shared by all experiments; `None` picks the experiment default.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub seed: u64,
    pub agents: Option<usize>,
    pub docs: Option<usize>,
    pub changes: Option<usize>,
    pub revisions: Option<usize>,
    pub runs: Option<usize>,
    pub reps: Option<usize>,
    pub loss: Option<f64>,
    pub no_partitions: bool,
}

impl Params {
    pub fn new(seed: u64) -> Self {
        Params {
            seed,
            agents: None,
            docs: None,
            changes: None,
            revisions: None,
            runs: None,
            reps: None,
            loss: None,
            no_partitions: false,
        }
    }

    pub(crate) fn record(&self, out: &mut RunOutput) {
        out.param("seed", self.seed);
        let opt = [
            ("agents", self.agents),
            ("docs", self.docs),
            ("changes", self.changes),
            ("revisions", self.revisions),
            ("runs", self.runs),
            ("reps", self.reps),
        ];
        for (k, v) in opt {
            if let Some(v) = v {
                out.param(k, v);
            }
        }
        if let Some(l) = self.loss {
            out.param("loss", l);
        }
        if self.no_partitions {
            out.param("no_partitions", true);
        }
    }
}

pub fn run(exp: Experiment, p: &Params) -> Result<RunOutput> {
    if let Some(l) = p.loss {
        if !(0.0..=1.0).contains(&l) {
            bail!("loss must lie in [0, 1]");
        }
    }
    match exp {
        Experiment::MergeScaling => merge_scaling(p),
        Experiment::RebaseScaling => rebase_scaling(p),
        Experiment::Partition12 => partition_12(p),
        Experiment::MaxRate => max_rate(p),
        Experiment::NeverSync => never_sync(p),
        Experiment::CollabMapping => collab_mapping(p),
        Experiment::TransferFuzz => transfer_fuzz(p),
    }
}

pub(crate) fn bounded(name: &str, v: usize, lo: usize, hi: usize) -> Result<usize> {
    if v < lo || v > hi {
        bail!("{name} must lie in {lo}..={hi}, got {v}");
    }
    Ok(v)
}

/// The `n`th triple written by `owner`.
pub fn owned_triple(owner: &str, n: usize) -> Triple {
    Triple::iris(&format!("urn:gs:{owner}/s{n}"), "urn:gs:p", &format!("urn:gs:{owner}/o{n}")).expect("valid iris")
}

pub fn owner_of(t: &Triple) -> Option<&str> {
    t.subject().as_iri()?.strip_prefix("urn:gs:")?.split('/').next()
}

/// SHA-256 over the canonical serialization of a graph's triples.
pub fn graph_digest(g: &Graph) -> String {
    graph_digest_of(g.triples())
}

pub fn graph_digest_of(triples: &BTreeSet<Triple>) -> String {
    let d = Delta::new(triples.iter().cloned(), []).expect("no removals");
    sha256_hex(&codec::canonical_bytes(&d))
}

pub(crate) fn insert_delta(triples: impl IntoIterator<Item = Triple>) -> Delta {
    Delta::new(triples, []).expect("no removals")
}

pub(crate) fn bench_uuid(n: u128) -> Uuid {
    Uuid::from_u128(0xbe_0000 + n)
}

/// A published child of the root holding `triples`.
pub(crate) fn seed_revision(gor: &mut GraphOfRevisions, triples: impl IntoIterator<Item = Triple>) -> graphsync::RevisionHash {
    let rev = Revision::new(bench_uuid(0), 0, vec![graphsync::ParentLink::new(gor.root(), insert_delta(triples))], None);
    let h = rev.hash();
    gor.insert(rev).expect("fresh revision");
    h
}

/// Runs `f` `reps` times and keeps the fastest wall time, in microseconds.
pub(crate) fn fastest<T>(reps: usize, mut f: impl FnMut() -> T) -> (T, f64) {
    let mut best = f64::INFINITY;
    let mut last = None;
    for _ in 0..reps.max(1) {
        let start = std::time::Instant::now();
        let v = f();
        best = best.min(start.elapsed().as_secs_f64() * 1e6);
        last = Some(v);
    }
    (last.expect("at least one rep"), best)
}
