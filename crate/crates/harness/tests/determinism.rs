use graphsync_harness::experiments::{self, Experiment, Params};

fn max_rate(seed: u64) -> Params {
    let mut p = Params::new(seed);
    (p.agents, p.docs, p.changes) = (Some(2), Some(1), Some(10));
    p
}

#[test]
fn max_rate_metrics_repeat_per_seed() {
    let mut distinct = Vec::new();
    for seed in [1, 2, 3] {
        let a = experiments::run(Experiment::MaxRate, &max_rate(seed)).unwrap();
        let b = experiments::run(Experiment::MaxRate, &max_rate(seed)).unwrap();
        assert!(a.passed(), "{}", a.summary());
        assert_eq!(a.metrics.to_csv(), b.metrics.to_csv(), "seed {seed}");
        distinct.push(a.metrics.to_csv());
    }
    distinct.dedup();
    assert!(distinct.len() > 1, "different seeds should produce different runs");
}

#[test]
fn never_sync_and_collab_artifacts_repeat() {
    for exp in [Experiment::NeverSync, Experiment::CollabMapping] {
        let a = experiments::run(exp, &Params::new(5)).unwrap();
        let b = experiments::run(exp, &Params::new(5)).unwrap();
        assert_eq!(a.manifest(), b.manifest(), "{}", exp.name());
        assert_eq!(a.files, b.files);
    }
}

#[test]
fn fuzz_metrics_repeat() {
    let mut p = Params::new(9);
    p.runs = Some(3);
    let a = experiments::run(Experiment::TransferFuzz, &p).unwrap();
    let b = experiments::run(Experiment::TransferFuzz, &p).unwrap();
    assert_eq!(a.metrics.to_csv(), b.metrics.to_csv());
}
