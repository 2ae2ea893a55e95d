mod common;

use rme_core::harness::{explore, replay, ExploreConfig, Move};
use rme_core::{Algorithm, Mutant, Pid, ViolationCode};

#[test]
fn single_process_graph_is_small_and_clean() {
    for alg in [Algorithm::Cc, Algorithm::Dsm] {
        let r = explore(&ExploreConfig::new(alg, 1, 1)).unwrap();
        assert!(r.passed() && r.complete && r.liveness_checked, "{r:?}");
        assert!(r.states > 10);
    }
}

#[test]
fn crash_free_two_process_counts_are_stable() {
    let cc = explore(&ExploreConfig::new(Algorithm::Cc, 2, 0)).unwrap();
    assert!(cc.passed());
    assert_eq!(cc.states, 1346);
    let again = explore(&ExploreConfig::new(Algorithm::Cc, 2, 0)).unwrap();
    assert_eq!(
        (cc.states, cc.transitions),
        (again.states, again.transitions)
    );
}

#[test]
fn witness_replays_to_the_same_violation() {
    let mut cfg = ExploreConfig::new(Algorithm::Cc, 2, 0);
    cfg.mutant = Mutant::DropE3;
    let r = explore(&cfg).unwrap();
    assert!(!r.passed());
    let w = r
        .violations
        .iter()
        .find(|v| v.code != ViolationCode::Starvation)
        .expect("a safety witness");
    let events = replay(&cfg, &w.path).unwrap();
    assert!(events.iter().any(|e| matches!(
        &e.kind,
        rme_core::trace::EventKind::Violation { code, .. } if *code == w.code
    )));
}

#[test]
fn moves_round_trip_through_text() {
    for m in [
        Move::Step(Pid(3)),
        Move::SpuriousRecover(Pid(0)),
        Move::Crash,
    ] {
        assert_eq!(m.to_string().parse::<Move>().unwrap(), m);
    }
    assert!("q1".parse::<Move>().is_err());
}

#[test]
fn spurious_recover_branches_stay_clean() {
    let mut cfg = ExploreConfig::new(Algorithm::Cc, 2, 0);
    cfg.spurious_recover = true;
    cfg.passages = 1;
    let r = explore(&cfg).unwrap();
    assert!(r.passed(), "{:?}", r.violations);
}

#[test]
fn skip_abandon_starves_a_third_process() {
    assert!(common::third_waiter_finishes(Mutant::None));
    assert!(!common::third_waiter_finishes(Mutant::SkipAbandon));
}

#[test]
fn skip_abandon_is_invisible_to_two_processes() {
    let mut cfg = ExploreConfig::new(Algorithm::Dsm, 2, 0);
    cfg.mutant = Mutant::SkipAbandon;
    assert!(explore(&cfg).unwrap().passed());
}
