//! Independent random streams derived from one experiment seed.
//!
//! Every consumer of randomness draws from its own ChaCha stream so that,
//! for example, policy selection in a reuse run never perturbs the replay
//! sampling sequence of the learner.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Environment = 1,
    Exploration = 2,
    Replay = 3,
    Reuse = 4,
    Selection = 5,
    Init = 6,
    Baseline = 7,
    Evaluation = 8,
}

pub fn stream(seed: u64, which: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
