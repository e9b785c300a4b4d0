use std::fs;
use std::path::Path;

use graphsync_harness::experiments::{self, Experiment, Params};
use graphsync_harness::output::{parse_manifest, sha256_hex, RunOutput};
use graphsync_harness::verify::{verify, Verdict};

fn header(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).lines().next().unwrap_or("").to_string()
}

fn collab(dir: &Path) -> RunOutput {
    let out = experiments::run(Experiment::CollabMapping, &Params::new(1)).unwrap();
    out.write(dir).unwrap();
    out
}

fn verdict(dir: &Path, name: &str) -> Verdict {
    verify(dir).findings.into_iter().find(|f| f.name == name).unwrap().verdict
}

/// Rewrites the manifest entry for `name` so only the deeper checks can
/// notice a change to it.
fn rehash(dir: &Path, name: &str) {
    let path = dir.join("manifest.txt");
    let text = fs::read_to_string(&path).unwrap();
    let key = format!("file.{name}=");
    let fresh = sha256_hex(&fs::read(dir.join(name)).unwrap());
    let lines: Vec<String> = text.lines().map(|l| if l.starts_with(&key) { format!("{key}{fresh}") } else { l.to_string() }).collect();
    fs::write(path, lines.join("\n") + "\n").unwrap();
}

#[test]
fn frozen_csv_headers() {
    let out = experiments::run(Experiment::CollabMapping, &Params::new(1)).unwrap();
    assert_eq!(header(&out.metrics.to_csv()), "agent,A,B,C,D'");
    assert_eq!(header(&out.files["events.csv"]), "time,action,from,to,kind,size");
    assert_eq!(header(&out.files["agent_events.csv"]), "time,agent,uri,event,detail");
    assert_eq!(header(&out.files["heads.csv"]), "doc,agent,name,head,triples,digest,master");
    assert_eq!(
        header(&out.files["transfers.csv"]),
        "time,dataset,sender,receiver,outcome,bytes,source_sha256,received_sha256,throttle_ups,throttle_downs"
    );

    let out = experiments::run(Experiment::NeverSync, &Params::new(1)).unwrap();
    assert_eq!(header(&out.metrics.to_csv()), "policy,time,agent,head,triples,foreign_triples");
    assert_eq!(header(&out.files["agent_events.csv"]), "policy,time,agent,uri,event,detail");

    let mut p = Params::new(1);
    p.runs = Some(2);
    let out = experiments::run(Experiment::TransferFuzz, &p).unwrap();
    assert_eq!(
        header(&out.metrics.to_csv()),
        "seed,case,receiver,outcome,bytes,hash_match,throttle_ups,throttle_downs,finished_at,sender_data_frames,sender_final_tau,sender_trace_ok"
    );

    let mut p = Params::new(1);
    (p.agents, p.docs, p.changes) = (Some(2), Some(1), Some(10));
    let out = experiments::run(Experiment::MaxRate, &p).unwrap();
    assert_eq!(header(&out.metrics.to_csv()), "agents,docs,changes,merges,avg_triples_touched,avg_merge_ms,max_rate_hz,final_triples,digest");
}

#[test]
fn manifest_lists_every_file_and_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = collab(dir.path());
    let m = parse_manifest(&fs::read_to_string(dir.path().join("manifest.txt")).unwrap());
    assert_eq!(m["experiment"], "collab-mapping");
    assert_eq!(m["file.metrics.csv"], sha256_hex(&fs::read(dir.path().join("metrics.csv")).unwrap()));
    for name in out.files.keys() {
        assert_eq!(m[&format!("file.{name}")], sha256_hex(&out.files[name]));
    }
    for c in &out.checks {
        assert_eq!(m[&format!("check.{}", c.name)], "pass");
    }
}

#[test]
fn verify_passes_on_a_golden_run() {
    let dir = tempfile::tempdir().unwrap();
    collab(dir.path());
    let report = verify(dir.path());
    assert!(report.passed(), "{report}");
    assert!(report.findings.iter().all(|f| f.verdict == Verdict::Pass), "{report}");
}

#[test]
fn tampered_file_fails_the_hash_check() {
    let dir = tempfile::tempdir().unwrap();
    collab(dir.path());
    let path = dir.path().join("metrics.csv");
    let mut bytes = fs::read(&path).unwrap();
    bytes.push(b'\n');
    fs::write(&path, bytes).unwrap();
    assert_eq!(verdict(dir.path(), "file_hashes"), Verdict::Fail);
    assert!(!verify(dir.path()).passed());
}

#[test]
fn missing_file_fails_the_hash_check() {
    let dir = tempfile::tempdir().unwrap();
    collab(dir.path());
    fs::remove_file(dir.path().join("heads.csv")).unwrap();
    assert_eq!(verdict(dir.path(), "file_hashes"), Verdict::Fail);
}

#[test]
fn forged_transfer_hash_is_caught_even_with_a_fixed_manifest() {
    let dir = tempfile::tempdir().unwrap();
    collab(dir.path());
    let path = dir.path().join("transfers.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut cells: Vec<String> = lines[1].split(',').map(str::to_string).collect();
    cells[7] = "0".repeat(64);
    lines[1] = cells.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    rehash(dir.path(), "transfers.csv");
    assert_eq!(verdict(dir.path(), "file_hashes"), Verdict::Pass);
    assert_eq!(verdict(dir.path(), "transfer_integrity"), Verdict::Fail);
}

#[test]
fn forged_head_is_caught_even_with_a_fixed_manifest() {
    let dir = tempfile::tempdir().unwrap();
    collab(dir.path());
    let path = dir.path().join("heads.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut cells: Vec<String> = lines[1].split(',').map(str::to_string).collect();
    cells[5] = "f".repeat(64);
    lines[1] = cells.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    rehash(dir.path(), "heads.csv");
    assert_eq!(verdict(dir.path(), "revision_logs"), Verdict::Fail);
}

#[test]
fn failed_recorded_check_fails_verify() {
    let dir = tempfile::tempdir().unwrap();
    let mut out = experiments::run(Experiment::NeverSync, &Params::new(1)).unwrap();
    out.check("synthetic", false, "forced");
    out.write(dir.path()).unwrap();
    assert_eq!(verdict(dir.path(), "recorded_checks"), Verdict::Fail);
}

#[test]
fn absent_or_empty_event_log_is_vacuous() {
    let dir = tempfile::tempdir().unwrap();
    let out = experiments::run(Experiment::NeverSync, &Params::new(1)).unwrap();
    out.write(dir.path()).unwrap();
    assert!(!dir.path().join("events.csv").exists());
    assert_eq!(verdict(dir.path(), "event_log"), Verdict::Vacuous);
    assert!(verify(dir.path()).passed());

    let mut out = out;
    out.file("events.csv", b"time,action,from,to,kind,size\n".to_vec());
    out.write(dir.path()).unwrap();
    assert_eq!(verdict(dir.path(), "event_log"), Verdict::Vacuous);
    assert!(verify(dir.path()).passed());
}

#[test]
fn out_of_order_event_log_fails() {
    let dir = tempfile::tempdir().unwrap();
    let mut out = experiments::run(Experiment::NeverSync, &Params::new(1)).unwrap();
    out.file("events.csv", b"time,action,from,to,kind,size\n5,send,a,b,status,1\n3,send,a,b,status,1\n".to_vec());
    out.write(dir.path()).unwrap();
    assert_eq!(verdict(dir.path(), "event_log"), Verdict::Fail);
}

#[test]
fn directory_without_manifest_fails() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!verify(dir.path()).passed());
}
