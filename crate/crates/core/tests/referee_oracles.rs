mod common;

use rand::Rng as _;

use surfrl::lattice::{CodeLayout, ErrorConfig, Syndrome};
use surfrl::referee::{referee_by_name, survives, LookupReferee, MatchingReferee, Referee};
use surfrl::rng::{stream, Stream};

#[test]
fn matching_is_minimum_weight_at_d3() {
    let layout = CodeLayout::new(3).unwrap();
    let best = common::min_weight_table(&layout);
    let referee = MatchingReferee::new(&layout);
    for bits in 0u128..(1 << 9) {
        let s = layout.z_syndrome(&ErrorConfig::from_bits(9, bits)).unwrap();
        let c = referee.correction(&s).unwrap();
        assert_eq!(layout.z_syndrome(c.flips()).unwrap(), s);
        assert_eq!(c.weight() as u32, best[s.bits() as usize], "syndrome {:04b}", s.bits());
    }
}

#[test]
fn lookup_agrees_with_matching_on_weight() {
    let layout = CodeLayout::new(3).unwrap();
    let matching = MatchingReferee::new(&layout);
    let lookup = LookupReferee::new(&layout).unwrap();
    for bits in 0u64..(1 << layout.num_z_checks()) {
        let s = Syndrome::from_bits(layout.num_z_checks(), bits);
        let a = matching.correction(&s).unwrap();
        let b = lookup.correction(&s).unwrap();
        assert_eq!(a.weight(), b.weight());
        assert_eq!(layout.z_syndrome(b.flips()).unwrap(), s);
    }
}

#[test]
fn every_single_flip_is_corrected() {
    for d in [3, 5, 7] {
        let layout = CodeLayout::new(d).unwrap();
        let referee = MatchingReferee::new(&layout);
        for q in 0..layout.num_qubits() {
            let e = ErrorConfig::from_qubits(layout.num_qubits(), [q]);
            assert!(survives(&layout, &referee, &e).unwrap(), "d {d} qubit {q}");
        }
    }
}

#[test]
fn corrects_up_to_half_distance_at_d5() {
    let layout = CodeLayout::new(5).unwrap();
    let referee = MatchingReferee::new(&layout);
    let n = layout.num_qubits();
    for a in 0..n {
        for b in a + 1..n {
            let e = ErrorConfig::from_qubits(n, [a, b]);
            assert!(survives(&layout, &referee, &e).unwrap(), "qubits {a} {b}");
        }
    }
}

fn failure_rate(layout: &CodeLayout, referee: &MatchingReferee, p: f64, trials: u32, seed: u64) -> f64 {
    let mut rng = stream(seed, Stream::Evaluation);
    let n = layout.num_qubits();
    let mut failures = 0;
    for _ in 0..trials {
        let e = ErrorConfig::from_qubits(n, (0..n).filter(|_| rng.random::<f64>() < p));
        if !survives(layout, referee, &e).unwrap() {
            failures += 1;
        }
    }
    failures as f64 / trials as f64
}

#[test]
fn fewer_flips_fail_less_often_at_d5() {
    let layout = CodeLayout::new(5).unwrap();
    let referee = MatchingReferee::new(&layout);
    let trials = 10_000;
    let low = failure_rate(&layout, &referee, 0.05, trials, 1);
    let high = failure_rate(&layout, &referee, 0.10, trials, 2);
    let sigma = ((low * (1.0 - low) + high * (1.0 - high)) / trials as f64).sqrt();
    assert!(high - low > 5.0 * sigma, "p=0.05: {low}, p=0.10: {high}");
}

#[test]
fn registry_resolves_names() {
    let layout = CodeLayout::new(3).unwrap();
    assert_eq!(referee_by_name("matching", &layout).unwrap().name(), "matching");
    assert_eq!(referee_by_name("lookup", &layout).unwrap().name(), "lookup");
    assert!(referee_by_name("neural", &layout).is_err());
    assert!(referee_by_name("lookup", &CodeLayout::new(7).unwrap()).is_err());
}
