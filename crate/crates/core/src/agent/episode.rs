use super::ddqn::DdqnAgent;
use super::replay::Transition;
use super::{select_action, QFunction, QNetwork};
use crate::env::{qubit_lifetime, ActionId, EnvState, EpisodeLog, SurfaceEnv};
use crate::error::Result;
use crate::rng::Rng;

/// Picks the action for the current step.
pub trait ActionChooser {
    fn choose(&mut self, state: &EnvState, online: &QNetwork, explore: &mut Rng) -> Result<ActionId>;

    /// Called once after every environment step.
    fn after_step(&mut self) {}
}

/// Epsilon-greedy on the learner's own Q-values.
#[derive(Clone, Copy, Debug)]
pub struct EpsilonGreedy {
    pub epsilon: f64,
}

impl ActionChooser for EpsilonGreedy {
    fn choose(&mut self, state: &EnvState, online: &QNetwork, explore: &mut Rng) -> Result<ActionId> {
        let q = online.q_batch(&[state])?;
        Ok(select_action(&q, self.epsilon, explore))
    }
}

/// Greedy on the learner without touching the exploration stream.
#[derive(Clone, Copy, Debug, Default)]
pub struct Greedy;

impl ActionChooser for Greedy {
    fn choose(&mut self, state: &EnvState, online: &QNetwork, _explore: &mut Rng) -> Result<ActionId> {
        online.greedy(state)
    }
}

/// Fixed policy given as a closure.
pub struct Scripted<F>(pub F);

impl<F: FnMut(&EnvState) -> ActionId> ActionChooser for Scripted<F> {
    fn choose(&mut self, state: &EnvState, _online: &QNetwork, _explore: &mut Rng) -> Result<ActionId> {
        Ok((self.0)(state))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpisodeMode {
    /// Store transitions and optimise after every step.
    Train,
    /// Act only.
    Evaluate,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EpisodeResult {
    /// Undiscounted sum of rewards.
    pub total_reward: f64,
    pub lifetime: u64,
    pub steps: u64,
    pub died: bool,
    pub last_loss: Option<f32>,
}

/// One row of the per-episode metrics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub episode: u64,
    /// Policy index used (0 = the learner itself).
    pub policy: usize,
    pub total_reward: f64,
    pub lifetime: u64,
    pub psi_end: f64,
    pub epsilon: f64,
}

/// Resets `env` and plays at most `max_steps` steps.
pub fn run_episode(
    env: &mut SurfaceEnv,
    agent: &mut DdqnAgent,
    chooser: &mut dyn ActionChooser,
    mode: EpisodeMode,
) -> Result<EpisodeResult> {
    let mut state = env.reset();
    let mut log = EpisodeLog::default();
    let mut last_loss = None;
    for _ in 0..agent.config.max_steps {
        let action = chooser.choose(&state, &agent.online, &mut agent.explore_rng)?;
        let outcome = env.step(action)?;
        chooser.after_step();
        log.record(&outcome);
        let done = outcome.done;
        let next = outcome.next_state;
        if mode == EpisodeMode::Train {
            agent.memory.push(Transition {
                state,
                action,
                reward: outcome.reward,
                next_state: next.clone(),
            });
            if let Some(loss) = agent.train_step()? {
                last_loss = Some(loss);
            }
        }
        match next {
            Some(s) if !done => state = s,
            _ => break,
        }
    }
    Ok(EpisodeResult {
        total_reward: log.total_reward,
        lifetime: qubit_lifetime(&log),
        steps: log.steps,
        died: log.died,
        last_loss,
    })
}

/// A learning episode driven by epsilon-greedy on the learner.
pub fn run_scratch_episode(env: &mut SurfaceEnv, agent: &mut DdqnAgent, epsilon: f64) -> Result<EpisodeResult> {
    run_episode(env, agent, &mut EpsilonGreedy { epsilon }, EpisodeMode::Train)
}

/// Scratch training for `agent.config().episodes` episodes; the target network
/// is synced after every `target_update`-th episode.
pub fn train_scratch(
    env: &mut SurfaceEnv,
    agent: &mut DdqnAgent,
    mut on_episode: impl FnMut(&EpisodeRecord),
) -> Result<Vec<EpisodeRecord>> {
    let mut records = Vec::with_capacity(agent.config.episodes as usize);
    for e in 0..agent.config.episodes {
        let epsilon = agent.config.epsilon.at(e);
        let result = run_scratch_episode(env, agent, epsilon)?;
        let record = EpisodeRecord {
            episode: e + 1,
            policy: 0,
            total_reward: result.total_reward,
            lifetime: result.lifetime,
            psi_end: 0.0,
            epsilon,
        };
        on_episode(&record);
        records.push(record);
        if (e + 1) % agent.config.target_update == 0 {
            agent.sync_target()?;
        }
    }
    Ok(records)
}

/// Greedy evaluation of a frozen network (no learning), one record per episode.
pub fn evaluate(
    env: &mut SurfaceEnv,
    policy: &QNetwork,
    episodes: u64,
    max_steps: u64,
) -> Result<Vec<EpisodeResult>> {
    let config = super::TrainingConfig {
        max_steps,
        batch_size: 1,
        replay_capacity: 1,
        ..Default::default()
    };
    let mut agent = DdqnAgent::with_network(policy.clone(), config, 0);
    (0..episodes)
        .map(|_| run_episode(env, &mut agent, &mut Greedy, EpisodeMode::Evaluate))
        .collect()
}
