use graphsync::agent::{Election, ElectionStep};
use graphsync::wire::VoteMsg;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use uuid::Uuid;

const WINDOW: i64 = 2000;

/// Runs agents in lockstep: every ballot reaches every agent before the
/// round closes. Returns (winner, rounds used).
fn lockstep(voters: &[Uuid], opening: &[Uuid], seed: u64) -> (Uuid, u32) {
    let mut rngs: Vec<StdRng> = (0..voters.len()).map(|i| StdRng::seed_from_u64(seed * 1000 + i as u64)).collect();
    let (mut elections, mut votes): (Vec<Election>, Vec<VoteMsg>) = voters.iter().zip(opening).map(|(&me, &c)| Election::start(me, 0, WINDOW, c)).unzip();
    let mut rounds = 0;
    loop {
        for e in elections.iter_mut() {
            for v in &votes {
                assert!(e.record(v), "ballot from the same round rejected");
            }
        }
        let deadline = elections[0].deadline();
        assert!(elections.iter().all(|e| e.deadline() == deadline), "rounds out of step");
        let steps: Vec<ElectionStep> = elections.iter_mut().zip(rngs.iter_mut()).map(|(e, rng)| e.on_deadline(deadline, rng)).collect();
        rounds += 1;
        match &steps[0] {
            ElectionStep::Decided(w) => {
                assert!(steps.iter().all(|s| *s == ElectionStep::Decided(*w)), "agents decided differently");
                return (*w, rounds);
            }
            ElectionStep::Vote(_) => {
                votes = steps
                    .into_iter()
                    .map(|s| match s {
                        ElectionStep::Vote(v) => v,
                        ElectionStep::Decided(_) => panic!("one agent decided while another opened a round"),
                    })
                    .collect();
                assert!(votes.iter().all(|v| v.round == rounds));
            }
        }
    }
}

/// Plurality count written out by hand.
fn tied(opening: &[Uuid]) -> Vec<Uuid> {
    let mut counts: Vec<(Uuid, usize)> = Vec::new();
    for c in opening {
        match counts.iter_mut().find(|(u, _)| u == c) {
            Some((_, n)) => *n += 1,
            None => counts.push((*c, 1)),
        }
    }
    let best = counts.iter().map(|(_, n)| *n).max().unwrap();
    counts.into_iter().filter(|(_, n)| *n == best).map(|(u, _)| u).collect()
}

#[test]
fn two_agents_voting_for_each_other_terminate() {
    let (a, b) = (Uuid::from_u128(1), Uuid::from_u128(2));
    let mut worst = 0;
    for seed in 0..1000 {
        let (w, rounds) = lockstep(&[a, b], &[b, a], seed);
        assert!(w == a || w == b);
        assert!(rounds <= 20, "seed {seed} took {rounds} rounds");
        worst = worst.max(rounds);
    }
    assert!(worst > 2, "some trial should need several resolution rounds");
}

#[test]
fn random_tie_scenarios_terminate_within_twenty_rounds() {
    let mut gen = StdRng::seed_from_u64(42);
    let mut scenarios = 0;
    while scenarios < 1000 {
        let n = gen.gen_range(2..=7);
        let voters: Vec<Uuid> = (0..n).map(|i| Uuid::from_u128(100 + i as u128)).collect();
        let opening: Vec<Uuid> = (0..n).map(|_| voters[gen.gen_range(0..n)]).collect();
        let tie = tied(&opening);
        if tie.len() < 2 {
            continue;
        }
        scenarios += 1;
        let (w, rounds) = lockstep(&voters, &opening, scenarios);
        assert!(tie.contains(&w), "winner outside the tied set");
        assert!(rounds <= 20, "scenario {scenarios} took {rounds} rounds");
    }
}

#[test]
fn unique_plurality_decides_in_one_round() {
    let v: Vec<Uuid> = (1..=5).map(Uuid::from_u128).collect();
    let opening = [v[2], v[2], v[0], v[1], v[2]];
    assert_eq!(lockstep(&v, &opening, 0), (v[2], 1));
}
