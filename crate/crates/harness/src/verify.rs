//! Offline re-checks of a run directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use graphsync::store;
use graphsync::RevisionHash;

use crate::experiments::graph_digest;
use crate::output::{parse_manifest, sha256_hex, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// Nothing to check; counts as a pass.
    Vacuous,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub name: String,
    pub verdict: Verdict,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub findings: Vec<Finding>,
}

impl Report {
    fn add(&mut self, name: &str, verdict: Verdict, detail: impl Into<String>) {
        self.findings.push(Finding {
            name: name.to_string(),
            verdict,
            detail: detail.into(),
        });
    }

    fn check(&mut self, name: &str, ok: bool, detail: impl Into<String>) {
        self.add(name, if ok { Verdict::Pass } else { Verdict::Fail }, detail);
    }

    pub fn passed(&self) -> bool {
        self.findings.iter().all(|f| f.verdict != Verdict::Fail)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for x in &self.findings {
            let tag = match x.verdict {
                Verdict::Pass => "pass",
                Verdict::Fail => "FAIL",
                Verdict::Vacuous => "warn",
            };
            writeln!(f, "[{tag}] {}: {}", x.name, x.detail)?;
        }
        write!(f, "{}", if self.passed() { "verify: pass" } else { "verify: FAIL" })
    }
}

fn read_table(dir: &Path, name: &str) -> Option<Result<Table, String>> {
    let bytes = fs::read(dir.join(name)).ok()?;
    Some(Table::from_csv(&bytes).map_err(|e| e.to_string()))
}

/// Re-checks file hashes, event-log ordering, revision logs against the
/// recorded heads, convergence and transfer integrity.
pub fn verify(dir: &Path) -> Report {
    let mut r = Report::default();
    let Ok(text) = fs::read_to_string(dir.join("manifest.txt")) else {
        r.add("manifest", Verdict::Fail, format!("no manifest.txt in {}", dir.display()));
        return r;
    };
    let manifest = parse_manifest(&text);

    let mut bad = Vec::new();
    let mut files = 0;
    for (key, want) in &manifest {
        let Some(name) = key.strip_prefix("file.") else { continue };
        files += 1;
        match fs::read(dir.join(name)) {
            Ok(bytes) if sha256_hex(&bytes) == *want => {}
            Ok(_) => bad.push(format!("{name} modified")),
            Err(_) => bad.push(format!("{name} missing")),
        }
    }
    r.check("file_hashes", bad.is_empty(), if bad.is_empty() { format!("{files} files match") } else { bad.join(", ") });

    let failed: Vec<&str> = manifest
        .iter()
        .filter(|(k, v)| k.starts_with("check.") && v.as_str() != "pass")
        .map(|(k, _)| &k["check.".len()..])
        .collect();
    r.check("recorded_checks", failed.is_empty(), if failed.is_empty() { "all recorded checks passed".to_string() } else { failed.join(", ") });

    match read_table(dir, "events.csv") {
        None => r.add("event_log", Verdict::Vacuous, "no event log"),
        Some(Err(e)) => r.add("event_log", Verdict::Fail, e),
        Some(Ok(t)) if t.rows.is_empty() => r.add("event_log", Verdict::Vacuous, "event log is empty"),
        Some(Ok(t)) => {
            let col = t.column("time");
            let times: Option<Vec<i64>> = col.and_then(|c| t.rows.iter().map(|row| row.get(c)?.parse().ok()).collect());
            match times {
                Some(ts) => r.check("event_log", ts.windows(2).all(|w| w[0] <= w[1]), format!("{} records in time order", ts.len())),
                None => r.add("event_log", Verdict::Fail, "unreadable time column"),
            }
        }
    }

    check_heads(dir, &mut r);
    check_transfers(dir, &mut r);
    r
}

fn check_heads(dir: &Path, r: &mut Report) {
    let heads = match read_table(dir, "heads.csv") {
        None => {
            r.add("revision_logs", Verdict::Vacuous, "no heads recorded");
            return;
        }
        Some(Err(e)) => {
            r.add("revision_logs", Verdict::Fail, e);
            return;
        }
        Some(Ok(t)) => t,
    };
    let cols = ["doc", "name", "head", "digest"].map(|c| heads.column(c));
    let [Some(doc_c), Some(name_c), Some(head_c), Some(digest_c)] = cols else {
        r.add("revision_logs", Verdict::Fail, "heads.csv lacks doc/name/head/digest");
        return;
    };
    let recorded: BTreeMap<(String, String), (String, String)> = heads
        .rows
        .iter()
        .map(|row| ((row[doc_c].clone(), row[name_c].clone()), (row[head_c].clone(), row[digest_c].clone())))
        .collect();

    let mut logs: Vec<_> = fs::read_dir(dir)
        .map(|it| it.filter_map(|e| e.ok()).map(|e| e.path()).collect())
        .unwrap_or_default();
    logs.retain(|p: &std::path::PathBuf| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("gor_") && n.ends_with(".log")));
    logs.sort();
    let mut problems = Vec::new();
    let mut checked = 0;
    for path in &logs {
        let file = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let name = file.trim_end_matches(".log").splitn(3, '_').nth(2).unwrap_or_default().to_string();
        let loaded = match store::load(path) {
            Ok(l) => l,
            Err(e) => {
                problems.push(format!("{file}: {e}"));
                continue;
            }
        };
        let key = (loaded.gor.uri().to_string(), name);
        let Some((head_hex, digest)) = recorded.get(&key) else {
            problems.push(format!("{file}: no recorded head"));
            continue;
        };
        let graph = RevisionHash::from_hex(head_hex).and_then(|h| loaded.gor.materialize(&h).ok());
        match graph {
            Some(g) if graph_digest(&g) == *digest => checked += 1,
            Some(_) => problems.push(format!("{file}: head graph differs from recorded digest")),
            None => problems.push(format!("{file}: recorded head not in log")),
        }
    }
    if logs.is_empty() {
        r.add("revision_logs", Verdict::Vacuous, "no revision logs");
    } else {
        r.check("revision_logs", problems.is_empty(), if problems.is_empty() { format!("{checked} logs replayed") } else { problems.join("; ") });
    }

    let mut by_doc: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for ((doc, _), (_, digest)) in &recorded {
        by_doc.entry(doc).or_default().insert(digest);
    }
    let diverged: Vec<&str> = by_doc.iter().filter(|(_, d)| d.len() > 1).map(|(doc, _)| *doc).collect();
    r.check(
        "convergence",
        diverged.is_empty(),
        if diverged.is_empty() { format!("{} documents converged", by_doc.len()) } else { format!("diverged: {}", diverged.join(", ")) },
    );
}

fn check_transfers(dir: &Path, r: &mut Report) {
    match read_table(dir, "transfers.csv") {
        None => r.add("transfer_integrity", Verdict::Vacuous, "no transfers"),
        Some(Err(e)) => r.add("transfer_integrity", Verdict::Fail, e),
        Some(Ok(t)) => {
            let cols = ["outcome", "source_sha256", "received_sha256"].map(|c| t.column(c));
            let [Some(o), Some(src), Some(got)] = cols else {
                r.add("transfer_integrity", Verdict::Fail, "transfers.csv lacks hash columns");
                return;
            };
            let committed: Vec<_> = t.rows.iter().filter(|row| row[o] == "committed").collect();
            let bad = committed.iter().filter(|row| row[src].is_empty() || row[src] != row[got]).count();
            r.check("transfer_integrity", bad == 0, format!("{} committed, {bad} hash mismatches", committed.len()));
        }
    }
}
