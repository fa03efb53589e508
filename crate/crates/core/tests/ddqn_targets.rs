mod common;

use common::StubQ;
use proptest::prelude::*;
use rand::Rng as _;

use surfrl::agent::{ddqn_targets, dqn_targets, Architecture, DdqnAgent, ReplayMemory, TrainingConfig, Transition};
use surfrl::rng::{stream, Stream};

#[test]
fn targets_match_brute_force_bitwise() {
    let mut rng = stream(3, Stream::Replay);
    for trial in 0..1000u64 {
        let batch = common::random_transitions(rng.random_range(1..40), &mut rng);
        let refs: Vec<&Transition> = batch.iter().collect();
        let online = StubQ { actions: 10, salt: trial };
        let target = StubQ { actions: 10, salt: trial + 7919 };
        let gamma = rng.random_range(0.0..1.0f32);
        let got = ddqn_targets(&refs, &online, &target, gamma).unwrap();
        let want = common::brute_force_ddqn(&refs, &online, &target, gamma);
        assert_eq!(
            got.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            want.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            "trial {trial}"
        );
    }
}

#[test]
fn shared_network_reduces_to_single_network_target() {
    let mut rng = stream(4, Stream::Replay);
    for trial in 0..1000u64 {
        let batch = common::random_transitions(32, &mut rng);
        let refs: Vec<&Transition> = batch.iter().collect();
        let q = StubQ { actions: 10, salt: trial };
        let a = ddqn_targets(&refs, &q, &q, 0.99).unwrap();
        let b = dqn_targets(&refs, &q, 0.99).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn terminal_transitions_keep_the_reward() {
    let mut rng = stream(5, Stream::Replay);
    let mut batch = common::random_transitions(16, &mut rng);
    for t in &mut batch {
        t.next_state = None;
    }
    let refs: Vec<&Transition> = batch.iter().collect();
    let q = StubQ { actions: 10, salt: 1 };
    let rewards: Vec<f32> = batch.iter().map(|t| t.reward).collect();
    assert_eq!(ddqn_targets(&refs, &q, &q, 0.99).unwrap(), rewards);
}

#[test]
fn mismatched_action_counts_are_rejected() {
    let mut rng = stream(6, Stream::Replay);
    let batch = common::random_transitions(8, &mut rng);
    let refs: Vec<&Transition> = batch.iter().filter(|t| t.next_state.is_some()).collect();
    let r = ddqn_targets(&refs, &StubQ { actions: 10, salt: 0 }, &StubQ { actions: 9, salt: 0 }, 0.9);
    assert!(r.is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn double_target_never_exceeds_max_target(seed in any::<u64>(), salt in any::<u64>(), gamma in 0.0f32..1.0) {
        let mut rng = stream(seed, Stream::Replay);
        let batch = common::random_transitions(16, &mut rng);
        let refs: Vec<&Transition> = batch.iter().collect();
        let online = StubQ { actions: 10, salt };
        let target = StubQ { actions: 10, salt: salt.wrapping_add(1) };
        let double = ddqn_targets(&refs, &online, &target, gamma).unwrap();
        let single = dqn_targets(&refs, &target, gamma).unwrap();
        for (d, s) in double.iter().zip(&single) {
            prop_assert!(d <= s);
        }
    }

    #[test]
    fn replay_keeps_the_newest_in_order(capacity in 1usize..20, pushes in 0usize..60, seed in any::<u64>()) {
        let mut rng = stream(seed, Stream::Replay);
        let items = common::random_transitions(pushes, &mut rng);
        let mut memory = ReplayMemory::new(capacity);
        for t in &items {
            memory.push(t.clone());
        }
        let kept: Vec<&Transition> = memory.iter().collect();
        let start = pushes.saturating_sub(capacity);
        prop_assert_eq!(kept.len(), pushes - start);
        for (k, t) in kept.iter().zip(&items[start..]) {
            prop_assert_eq!(*k, t);
        }
        let n = memory.len().min(5);
        if n > 0 {
            let sample = memory.sample(n, &mut rng).unwrap();
            let distinct: std::collections::HashSet<*const Transition> = sample.iter().map(|t| *t as *const _).collect();
            prop_assert_eq!(distinct.len(), n);
        }
        prop_assert!(memory.sample(memory.len() + 1, &mut rng).is_none());
    }
}

fn single_transition_agent(next_state: bool, gamma: f32) -> (DdqnAgent, Transition) {
    let config = TrainingConfig {
        gamma,
        batch_size: 1,
        replay_capacity: 1,
        ..TrainingConfig::default()
    };
    let arch = Architecture { conv_channels: [4, 4, 4], hidden: 16 };
    let mut agent = DdqnAgent::new(3, 1, arch, config, 5).unwrap();
    let mut rng = stream(6, Stream::Environment);
    let mut t = common::random_transitions(1, &mut rng).remove(0);
    t.reward = 1.0;
    t.next_state = next_state.then(|| t.state.clone());
    agent.memory_mut().push(t.clone());
    (agent, t)
}

#[test]
fn single_terminal_transition_converges_to_its_reward() {
    let (mut agent, t) = single_transition_agent(false, 0.99);
    for _ in 0..5000 {
        agent.train_step().unwrap();
    }
    let q = agent.online().q_values(&t.state).unwrap()[t.action.0];
    assert!((q - 1.0).abs() < 1e-2, "q {q}");
}

#[test]
fn synced_self_loop_reaches_its_bellman_fixed_point() {
    let (mut agent, t) = single_transition_agent(true, 0.5);
    for i in 0..5000 {
        agent.train_step().unwrap();
        if i % 10 == 9 {
            agent.sync_target().unwrap();
        }
    }
    let q = agent.online().q_values(&t.state).unwrap();
    let fixed_point = 1.0 + 0.5 * q[surfrl::agent::argmax(&q)];
    assert!((q[t.action.0] - fixed_point).abs() < 5e-2, "q {} vs {fixed_point}", q[t.action.0]);
}
