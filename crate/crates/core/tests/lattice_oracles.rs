mod common;

use proptest::prelude::*;
use rand::Rng as _;

use surfrl::lattice::{CodeLayout, ErrorConfig, MAX_DISTANCE, MIN_DISTANCE};
use surfrl::rng::{stream, Stream};

fn random_errors(layout: &CodeLayout, bits: u128) -> ErrorConfig {
    let n = layout.num_qubits();
    let mask = if n == 128 { u128::MAX } else { (1u128 << n) - 1 };
    ErrorConfig::from_bits(n, bits & mask)
}

fn column_parity(layout: &CodeLayout, e: &ErrorConfig, col: usize) -> bool {
    let d = layout.distance();
    (0..d).filter(|&r| e.contains(r * d + col)).count() % 2 == 1
}

#[test]
fn z_checks_sit_on_the_checkerboard() {
    for d in (MIN_DISTANCE..=MAX_DISTANCE).step_by(2) {
        let layout = CodeLayout::new(d).unwrap();
        let got: std::collections::BTreeSet<_> = layout.z_check_coords().iter().copied().collect();
        assert_eq!(got, common::expected_z_cells(d), "d = {d}");
        assert_eq!(layout.num_z_checks(), (d * d - 1) / 2);
    }
}

#[test]
fn syndrome_matches_geometry_exhaustively_at_d3() {
    let layout = CodeLayout::new(3).unwrap();
    for bits in 0u128..(1 << 9) {
        let e = ErrorConfig::from_bits(9, bits);
        assert_eq!(
            layout.z_syndrome(&e).unwrap().bits(),
            common::brute_force_z_syndrome(&layout, bits),
            "errors {bits:09b}"
        );
    }
}

#[test]
fn syndrome_matches_geometry_on_random_configs() {
    let mut rng = stream(11, Stream::Evaluation);
    for d in [5, 7, 9] {
        let layout = CodeLayout::new(d).unwrap();
        for _ in 0..10_000 {
            let e = random_errors(&layout, rng.random());
            assert_eq!(
                layout.z_syndrome(&e).unwrap().bits(),
                common::brute_force_z_syndrome(&layout, e.bits())
            );
        }
    }
}

#[test]
fn single_flips_hit_one_or_two_checks() {
    for d in [3, 5, 7] {
        let layout = CodeLayout::new(d).unwrap();
        for q in 0..layout.num_qubits() {
            let w = layout.z_syndrome(&ErrorConfig::from_qubits(layout.num_qubits(), [q])).unwrap().weight();
            assert!(w == 1 || w == 2, "d {d} qubit {q} weight {w}");
        }
    }
}

#[test]
fn logical_class_is_column_parity() {
    let layout = CodeLayout::new(3).unwrap();
    for bits in 0u128..(1 << 9) {
        let e = ErrorConfig::from_bits(9, bits);
        if !layout.z_syndrome(&e).unwrap().is_zero() {
            assert!(layout.is_logical_x(&e).is_err());
            continue;
        }
        let class = layout.is_logical_x(&e).unwrap();
        for col in 0..3 {
            assert_eq!(column_parity(&layout, &e, col), class, "errors {bits:09b}");
        }
    }
    assert!(layout.is_logical_x(&layout.logical_x()).unwrap());
}

fn layout_strategy() -> impl Strategy<Value = CodeLayout> {
    prop_oneof![Just(3usize), Just(5), Just(7)].prop_map(|d| CodeLayout::new(d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn syndrome_is_linear(layout in layout_strategy(), a in any::<u128>(), b in any::<u128>()) {
        let (ea, eb) = (random_errors(&layout, a), random_errors(&layout, b));
        let sum = ea.compose(&eb).unwrap();
        let s = |e: &ErrorConfig| layout.z_syndrome(e).unwrap();
        prop_assert_eq!(s(&sum), s(&ea).xor(&s(&eb)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    /// Multiplying by an X stabilizer changes neither syndrome nor class.
    #[test]
    fn class_is_stabilizer_invariant(layout in layout_strategy(), a in any::<u128>(), pick in any::<prop::sample::Index>()) {
        let e = random_errors(&layout, a);
        let n = layout.num_qubits();
        let x = pick.get(layout.x_checks());
        let shifted = e.compose(&ErrorConfig::from_qubits(n, x.iter().copied())).unwrap();
        prop_assert_eq!(layout.z_syndrome(&e).unwrap(), layout.z_syndrome(&shifted).unwrap());
        let logical = layout.logical_x();
        let with_logical = e.compose(&logical).unwrap();
        prop_assert_eq!(layout.z_syndrome(&e).unwrap(), layout.z_syndrome(&with_logical).unwrap());
        if layout.z_syndrome(&e).unwrap().is_zero() {
            let class = layout.is_logical_x(&e).unwrap();
            prop_assert_eq!(layout.is_logical_x(&shifted).unwrap(), class);
            prop_assert_eq!(layout.is_logical_x(&with_logical).unwrap(), !class);
        }
    }
}
