//! Double deep Q-learning agent over [`EnvState`] observations.

mod ddqn;
mod episode;
mod replay;

pub use ddqn::{
    ddqn_targets, dqn_targets, train_step, DdqnAgent, EpsilonSchedule, TrainingConfig,
};
pub use episode::{
    evaluate, run_episode, run_scratch_episode, train_scratch, ActionChooser, EpisodeMode, EpisodeRecord,
    EpisodeResult, EpsilonGreedy, Greedy, Scripted,
};
pub use replay::{ReplayMemory, Transition};

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng as _;

use crate::env::{ActionId, EnvState};
use crate::error::{Error, Result};
use crate::rng::{stream, Rng, Stream};
use crate::tensor::{self, LayerKind, Network, Tensor};

/// Anything that scores every action for a batch of states.
pub trait QFunction {
    fn num_actions(&self) -> usize;

    /// Row-major `[states.len(), num_actions]`.
    fn q_batch(&self, states: &[&EnvState]) -> Result<Vec<f32>>;
}

/// Conv channel counts and hidden width of the Q-network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub conv_channels: [usize; 3],
    pub hidden: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            conv_channels: [32, 64, 64],
            hidden: 512,
        }
    }
}

impl Architecture {
    /// Three convs (kernel/stride 3/2, 2/1, 2/1) then two dense layers.
    pub fn layer_kinds(&self, d: usize, depth: usize) -> Vec<LayerKind> {
        let [c1, c2, c3] = self.conv_channels;
        let spatial = d - 2;
        vec![
            LayerKind::Conv2d {
                in_channels: depth + 1,
                out_channels: c1,
                kernel: 3,
                stride: 2,
            },
            LayerKind::Conv2d {
                in_channels: c1,
                out_channels: c2,
                kernel: 2,
                stride: 1,
            },
            LayerKind::Conv2d {
                in_channels: c2,
                out_channels: c3,
                kernel: 2,
                stride: 1,
            },
            LayerKind::Dense {
                inputs: c3 * spatial * spatial,
                outputs: self.hidden,
            },
            LayerKind::Dense {
                inputs: self.hidden,
                outputs: d * d + 1,
            },
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork {
    d: usize,
    depth: usize,
    net: Network,
}

impl QNetwork {
    pub fn new(d: usize, depth: usize, arch: Architecture, seed: u64) -> Result<Self> {
        if d < 3 || d.is_multiple_of(2) {
            return Err(Error::InvalidDistance(d));
        }
        let side = 2 * d + 1;
        let mut rng = stream(seed, Stream::Init);
        let net = Network::new(vec![depth + 1, side, side], &arch.layer_kinds(d, depth), &mut rng, seed)?;
        Ok(Self { d, depth, net })
    }

    pub fn from_network(d: usize, depth: usize, net: Network) -> Result<Self> {
        let side = 2 * d + 1;
        if net.input_shape() != [depth + 1, side, side] || net.output_len() != d * d + 1 {
            return Err(Error::Shape(format!(
                "network {:?} -> {} does not fit d={d}, depth={depth}",
                net.input_shape(),
                net.output_len()
            )));
        }
        Ok(Self { d, depth, net })
    }

    pub fn distance(&self) -> usize {
        self.d
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn state_len(&self) -> usize {
        self.net.input_shape().iter().product()
    }

    pub(crate) fn batch_tensor(&self, states: &[&EnvState]) -> Result<Tensor> {
        let per = self.state_len();
        let mut data = vec![0.0f32; per * states.len()];
        for (chunk, s) in data.chunks_mut(per).zip(states) {
            if s.shape()[..] != self.net.input_shape()[..] {
                return Err(Error::Shape(format!(
                    "state shape {:?} does not match network input {:?}",
                    s.shape(),
                    self.net.input_shape()
                )));
            }
            s.write_f32(chunk);
        }
        let mut shape = vec![states.len()];
        shape.extend_from_slice(self.net.input_shape());
        Tensor::new(shape, data)
    }

    pub fn q_values(&self, state: &EnvState) -> Result<Vec<f32>> {
        self.q_batch(&[state])
    }

    pub fn greedy(&self, state: &EnvState) -> Result<ActionId> {
        Ok(ActionId(argmax(&self.q_values(state)?)))
    }

    /// Copies parameters into `self` (the target network update).
    pub fn sync_from(&mut self, online: &QNetwork) -> Result<()> {
        self.net.copy_params_from(&online.net)
    }

    pub fn save(&self, stem: &Path, extra: &BTreeMap<String, String>) -> Result<()> {
        let mut meta = extra.clone();
        meta.insert("d".into(), self.d.to_string());
        meta.insert("volume_depth".into(), self.depth.to_string());
        tensor::io::save(stem, &self.net, &meta)
    }

    pub fn load(stem: &Path) -> Result<(Self, BTreeMap<String, String>)> {
        let (net, manifest) = tensor::io::load(stem)?;
        let field = |k: &str| -> Result<usize> {
            manifest
                .get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Corrupt {
                    path: tensor::io::manifest_path(stem),
                    reason: format!("missing or invalid `{k}`"),
                })
        };
        let q = Self::from_network(field("d")?, field("volume_depth")?, net)?;
        Ok((q, manifest))
    }
}

impl QFunction for QNetwork {
    fn num_actions(&self) -> usize {
        self.d * self.d + 1
    }

    fn q_batch(&self, states: &[&EnvState]) -> Result<Vec<f32>> {
        if states.is_empty() {
            return Ok(Vec::new());
        }
        let x = self.batch_tensor(states)?;
        Ok(self.net.forward(&x)?.into_data())
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy: one uniform draw decides between a uniformly random
/// action and the greedy one.
pub fn select_action(q: &[f32], epsilon: f64, rng: &mut Rng) -> ActionId {
    if rng.random::<f64>() < epsilon {
        ActionId(rng.random_range(0..q.len()))
    } else {
        ActionId(argmax(q))
    }
}
