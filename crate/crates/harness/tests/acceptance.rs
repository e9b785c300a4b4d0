//! Acceptance run: one pass/fail line per criterion, nonzero exit on any
//! failure. Built with `harness = false`.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use graphsync::agent::{Election, ElectionStep};
use graphsync::reconcile::RebaseOptions;
use graphsync::{codec, merge_revision, rebase_revisions, Delta, Graph, GraphOfRevisions, MergeOutcome, ParentLink, Revision, RevisionHash, Term, Triple};
use graphsync_harness::experiments::{self, Experiment, Params};
use graphsync_harness::output::RunOutput;
use graphsync_harness::verify::verify;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uuid::Uuid;

const DOC: &str = "urn:acceptance:doc";

struct Outcome {
    pass: bool,
    detail: String,
}

fn ok(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn t(i: usize) -> Triple {
    Triple::iris(&format!("urn:ex:T{i}"), "urn:ex:p", &format!("urn:ex:o{i}")).unwrap()
}

fn set(ids: &[usize]) -> BTreeSet<Triple> {
    ids.iter().map(|&i| t(i)).collect()
}

fn delta(ins: &[usize], rem: &[usize]) -> Delta {
    Delta::new(set(ins), set(rem)).unwrap()
}

fn failed_checks(out: &RunOutput) -> Vec<String> {
    out.checks.iter().filter(|c| !c.pass).map(|c| format!("{}: {}", c.name, c.detail)).collect()
}

fn experiment(exp: Experiment, seed: u64) -> Outcome {
    match experiments::run(exp, &Params::new(seed)) {
        Ok(out) => {
            let failed = failed_checks(&out);
            let detail = if failed.is_empty() { format!("{} checks passed", out.checks.len()) } else { failed.join("; ") };
            ok(failed.is_empty(), detail)
        }
        Err(e) => ok(false, format!("run error: {e:#}")),
    }
}

fn worked_example() -> Outcome {
    let mut gor = GraphOfRevisions::new(DOC);
    let g0 = Revision::new(Uuid::from_u128(1), 1, vec![ParentLink::new(gor.root(), delta(&[0, 1, 2], &[]))], None);
    gor.insert(g0.clone()).unwrap();
    let g1 = Revision::new(Uuid::from_u128(2), 2, vec![ParentLink::new(g0.hash(), delta(&[3, 4], &[0, 1]))], None);
    let g2 = Revision::new(Uuid::from_u128(3), 3, vec![ParentLink::new(g0.hash(), delta(&[4, 5], &[1, 2]))], None);
    gor.insert(g1.clone()).unwrap();
    let mut rebased = gor.clone();
    gor.insert(g2.clone()).unwrap();

    let MergeOutcome::Merged { revision, graph, .. } = merge_revision(&gor, &g1.hash(), &g2.hash(), Uuid::from_u128(4), 4, None).unwrap() else {
        return ok(false, "diverged branches did not merge");
    };
    let edge = |p: &RevisionHash| revision.parents().iter().find(|l| l.parent == *p).map(|l| l.delta.clone());
    let merge_ok = graph.triples() == &set(&[3, 4, 5]) && edge(&g1.hash()) == Some(delta(&[5], &[2])) && edge(&g2.hash()) == Some(delta(&[3], &[0]));

    rebased.insert_local(g2.clone()).unwrap();
    let copies = rebase_revisions(&mut rebased, &g2.hash(), &g1.hash(), 5, RebaseOptions::default(), None).unwrap();
    let tip = rebased.materialize(&copies[0].hash()).unwrap();
    let rebase_ok = copies.len() == 1 && tip.triples() == &set(&[3, 4, 5]);
    ok(merge_ok && rebase_ok, format!("merge G3 and edge deltas {}, rebased tip {}", verdict(merge_ok), verdict(rebase_ok)))
}

fn verdict(b: bool) -> &'static str {
    if b {
        "exact"
    } else {
        "wrong"
    }
}

/// Runs partition-12 twice with one seed, checks both outputs, compares
/// every artifact byte for byte and re-verifies the written directory.
fn partition(dir: &Path) -> Outcome {
    let runs: Vec<RunOutput> = match (0..2).map(|_| experiments::run(Experiment::Partition12, &Params::new(3))).collect() {
        Ok(v) => v,
        Err(e) => return ok(false, format!("run error: {e:#}")),
    };
    let failed = failed_checks(&runs[0]);
    let a = dir.join("partition-a");
    let b = dir.join("partition-b");
    if let Err(e) = runs[0].write(&a).and_then(|_| runs[1].write(&b)) {
        return ok(false, format!("write error: {e:#}"));
    }
    let mut names: Vec<String> = runs[0].files.keys().cloned().collect();
    names.extend(["metrics.csv".to_string(), "manifest.txt".to_string()]);
    let differing: Vec<&String> = names.iter().filter(|n| fs::read(a.join(n)).ok() != fs::read(b.join(n)).ok()).collect();
    let report = verify(&a);
    let pass = failed.is_empty() && differing.is_empty() && report.passed();
    let detail = format!(
        "{} checks, {} failed; {} artifacts compared, {} differ; verify {}",
        runs[0].checks.len(),
        failed.len(),
        names.len(),
        differing.len(),
        if report.passed() { "pass" } else { "FAIL" }
    );
    ok(pass, if failed.is_empty() { detail } else { format!("{detail}: {}", failed.join("; ")) })
}

fn never_sync() -> Outcome {
    match experiments::run(Experiment::NeverSync, &Params::new(1)) {
        Ok(out) => {
            let failed = failed_checks(&out);
            let decomposition = out.notes.iter().find(|n| n.starts_with("T_Total")).cloned().unwrap_or_default();
            ok(failed.is_empty() && !decomposition.is_empty(), if failed.is_empty() { decomposition } else { failed.join("; ") })
        }
        Err(e) => ok(false, format!("run error: {e:#}")),
    }
}

fn universe_triple(i: usize) -> Triple {
    let s = Term::iri(format!("urn:u:s{}", i % 7)).unwrap();
    let p = Term::iri(format!("urn:u:p{}", (i / 7) % 3)).unwrap();
    let o = match i % 4 {
        0 => Term::literal(format!("v\"{i}\\\n\t")),
        1 => Term::typed_literal(format!("{i}"), "http://www.w3.org/2001/XMLSchema#integer").unwrap(),
        _ => Term::iri(format!("urn:u:o{i}")).unwrap(),
    };
    Triple::new(s, p, o).unwrap()
}

fn random_set(rng: &mut impl Rng, universe: usize) -> BTreeSet<Triple> {
    (0..universe).filter(|_| rng.gen_bool(0.4)).map(universe_triple).collect()
}

fn delta_cases(rng: &mut ChaCha8Rng, cases: usize) -> Result<(), String> {
    for k in 0..cases {
        let a = Graph::from_triples(DOC, random_set(rng, 40));
        let b = Graph::from_triples(DOC, random_set(rng, 40));
        let d = Delta::compute(&a, &b);
        // element-wise difference oracle
        let ins: BTreeSet<Triple> = b.triples().iter().filter(|x| !a.triples().contains(x)).cloned().collect();
        let rem: BTreeSet<Triple> = a.triples().iter().filter(|x| !b.triples().contains(x)).cloned().collect();
        if d.inserted() != &ins || d.removed() != &rem || d.apply(&a) != b {
            return Err(format!("case {k}: compute/apply"));
        }
        if d.invert().invert() != d || d.invert().apply(&b) != a {
            return Err(format!("case {k}: involution"));
        }
        if codec::parse(&codec::serialize(&d)).ok().as_ref() != Some(&d) {
            return Err(format!("case {k}: codec round trip"));
        }
    }
    Ok(())
}

fn random_dag(rng: &mut ChaCha8Rng, steps: usize) -> (GraphOfRevisions, Vec<Revision>) {
    let mut gor = GraphOfRevisions::new(DOC);
    let mut made = Vec::new();
    for ts in 1..=steps as i64 {
        let known: Vec<RevisionHash> = gor.revisions().map(|r| r.hash()).collect();
        if known.len() > 2 && rng.gen_bool(0.35) {
            let (a, b) = (*known.choose(rng).unwrap(), *known.choose(rng).unwrap());
            if let Ok(MergeOutcome::Merged { revision, .. }) = merge_revision(&gor, &a, &b, Uuid::from_u128(rng.gen_range(1..4)), ts, None) {
                gor.insert(revision.clone()).unwrap();
                made.push(revision);
                continue;
            }
        }
        let parent = *known.choose(rng).unwrap();
        let before = gor.materialize(&parent).unwrap();
        let d = Delta::compute(&before, &Graph::from_triples(DOC, random_set(rng, 12)));
        let rev = Revision::new(Uuid::from_u128(rng.gen_range(1..4)), ts, vec![ParentLink::new(parent, d)], None);
        gor.insert(rev.clone()).unwrap();
        made.push(rev);
    }
    (gor, made)
}

fn merge_cases(rng: &mut ChaCha8Rng, cases: usize) -> Result<(), String> {
    for k in 0..cases {
        let (gor, made) = random_dag(rng, 12);
        for rev in made.iter().filter(|r| r.is_merge()) {
            let target = gor.materialize(&rev.hash()).unwrap();
            for link in rev.parents() {
                if link.delta.apply(&gor.materialize(&link.parent).unwrap()) != target {
                    return Err(format!("dag {k}: parent paths disagree"));
                }
            }
        }
        let (a, b) = (made.choose(rng).unwrap().hash(), made.choose(rng).unwrap().hash());
        let ab = merge_revision(&gor, &a, &b, Uuid::from_u128(9), 99, None).unwrap();
        let ba = merge_revision(&gor, &b, &a, Uuid::from_u128(9), 99, None).unwrap();
        let same = match (ab, ba) {
            (MergeOutcome::Merged { graph: x, .. }, MergeOutcome::Merged { graph: y, .. }) => x == y,
            (MergeOutcome::FastForward(x), MergeOutcome::FastForward(y)) => x == y,
            _ => false,
        };
        if !same {
            return Err(format!("dag {k}: merge not symmetric"));
        }
    }
    Ok(())
}

fn permutation_cases(rng: &mut ChaCha8Rng, cases: usize) -> Result<(), String> {
    for k in 0..cases {
        let (reference, mut made) = random_dag(rng, 10);
        made.shuffle(rng);
        let mut gor = GraphOfRevisions::new(DOC);
        for r in &made {
            gor.insert(r.clone()).map_err(|e| format!("case {k}: {e}"))?;
        }
        let hashes = |g: &GraphOfRevisions| g.revisions().map(|r| r.hash()).collect::<BTreeSet<_>>();
        if gor.pending_len() != 0 || gor.heads() != reference.heads() || hashes(&gor) != hashes(&reference) {
            return Err(format!("case {k}: order-dependent result"));
        }
    }
    Ok(())
}

/// Lockstep tie scenarios; returns the largest number of rounds used.
fn election_cases(rng: &mut ChaCha8Rng, cases: usize) -> Result<u32, String> {
    let mut worst = 0;
    let mut done = 0;
    while done < cases {
        let n = rng.gen_range(2..=6);
        let voters: Vec<Uuid> = (0..n).map(|i| Uuid::from_u128(50 + i as u128)).collect();
        let opening: Vec<Uuid> = (0..n).map(|_| voters[rng.gen_range(0..n)]).collect();
        let mut counts = std::collections::BTreeMap::new();
        for c in &opening {
            *counts.entry(*c).or_insert(0) += 1;
        }
        let best = *counts.values().max().unwrap();
        if counts.values().filter(|c| **c == best).count() < 2 {
            continue;
        }
        done += 1;
        let mut rngs: Vec<StdRng> = (0..n).map(|i| StdRng::seed_from_u64(rng.gen::<u64>() ^ i as u64)).collect();
        let (mut es, mut votes): (Vec<Election>, Vec<_>) = voters.iter().zip(&opening).map(|(&me, &c)| Election::start(me, 0, 2000, c)).unzip();
        let mut rounds = 0;
        let winner = loop {
            for e in es.iter_mut() {
                for v in &votes {
                    e.record(v);
                }
            }
            let deadline = es[0].deadline();
            let steps: Vec<ElectionStep> = es.iter_mut().zip(rngs.iter_mut()).map(|(e, r)| e.on_deadline(deadline, r)).collect();
            rounds += 1;
            if rounds > 20 {
                return Err(format!("scenario {done}: more than 20 rounds"));
            }
            if let ElectionStep::Decided(w) = steps[0] {
                if steps.iter().any(|s| *s != ElectionStep::Decided(w)) {
                    return Err(format!("scenario {done}: split decision"));
                }
                break w;
            }
            votes = steps
                .into_iter()
                .map(|s| match s {
                    ElectionStep::Vote(v) => Ok(v),
                    ElectionStep::Decided(_) => Err(format!("scenario {done}: split decision")),
                })
                .collect::<Result<_, _>>()?;
        };
        if counts.get(&winner) != Some(&best) {
            return Err(format!("scenario {done}: winner outside the tie"));
        }
        worst = worst.max(rounds);
    }
    Ok(worst)
}

fn property_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let results = [
        delta_cases(&mut rng, 10_000).map(|_| "10000 delta cases".to_string()),
        merge_cases(&mut rng, 1_000).map(|_| "1000 merge DAGs".to_string()),
        permutation_cases(&mut rng, 1_000).map(|_| "1000 insert orders".to_string()),
        election_cases(&mut rng, 1_000).map(|w| format!("1000 tie elections (max {w} rounds)")),
    ];
    let pass = results.iter().all(Result::is_ok);
    let detail: Vec<String> = results.into_iter().map(|r| r.unwrap_or_else(|e| format!("FAIL {e}"))).collect();
    ok(pass, detail.join(", "))
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().expect("temp dir");
    let dir = scratch.path().to_path_buf();
    type Criterion<'a> = (u32, &'a str, Duration, Box<dyn Fn() -> Outcome + 'a>);
    let criteria: Vec<Criterion> = vec![
        (1, "worked merge and rebase example", Duration::from_secs(1), Box::new(worked_example)),
        (2, "merge scaling", Duration::from_secs(120), Box::new(|| experiment(Experiment::MergeScaling, 1))),
        (3, "rebase scaling", Duration::from_secs(60), Box::new(|| experiment(Experiment::RebaseScaling, 1))),
        (4, "partition resilience", Duration::from_secs(120), Box::new(|| partition(&dir))),
        (5, "never-synchronized problem", Duration::from_secs(30), Box::new(never_sync)),
        (6, "transfer integrity", Duration::from_secs(120), Box::new(|| experiment(Experiment::TransferFuzz, 1))),
        (7, "collaborative mapping", Duration::from_secs(30), Box::new(|| experiment(Experiment::CollabMapping, 1))),
        (8, "property suites", Duration::from_secs(120), Box::new(property_suites)),
    ];
    let mut all = true;
    for (n, name, budget, run) in &criteria {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let in_time = took <= *budget;
        let pass = outcome.pass && in_time;
        all &= pass;
        let timing = format!("{:.2}s of {}s", took.as_secs_f64(), budget.as_secs());
        println!(
            "criterion {n} [{}] {name} ({timing}{}): {}",
            if pass { "pass" } else { "FAIL" },
            if in_time { "" } else { ", over budget" },
            outcome.detail
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
