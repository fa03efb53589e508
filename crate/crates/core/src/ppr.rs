//! Probabilistic policy reuse: a library of frozen policies, Boltzmann
//! selection over their running returns, and pi-exploration episodes that
//! blend a past policy into the learner's behaviour.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;

use crate::agent::{
    run_episode, ActionChooser, DdqnAgent, EpisodeMode, EpisodeRecord, EpisodeResult,
    EpsilonGreedy, QFunction, QNetwork,
};
use crate::env::{ActionId, EnvState, SurfaceEnv};
use crate::error::{Error, Result};
use crate::rng::{stream, Rng, Stream};
use crate::tensor::io;

/// `P_j = exp(tau W_j) / sum_p exp(tau W_p)`, shifted by the max exponent.
pub fn policy_probabilities(w: &[f64], tau: f64) -> Result<Vec<f64>> {
    if w.is_empty() {
        return Err(Error::Config("no policies to select from".into()));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("policy scores"));
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::Config(format!("temperature must be finite and >= 0, got {tau}")));
    }
    if tau == 0.0 {
        return Ok(vec![1.0 / w.len() as f64; w.len()]);
    }
    let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = w.iter().map(|&v| (tau * (v - max)).exp()).collect();
    let z: f64 = e.iter().sum();
    Ok(e.into_iter().map(|x| x / z).collect())
}

/// Categorical draw from `p`.
pub fn select_policy(p: &[f64], rng: &mut Rng) -> Result<usize> {
    if p.is_empty() || p.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::Config("invalid probability vector".into()));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("probabilities sum to {total}, not 1")));
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &x) in p.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        acc += x;
        last = i;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(last)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReuseParams {
    pub tau0: f64,
    pub delta_tau: f64,
    pub psi0: f64,
    pub nu: f64,
}

impl Default for ReuseParams {
    fn default() -> Self {
        Self {
            tau0: 0.0,
            delta_tau: 0.01,
            psi0: 1.0,
            nu: 0.95,
        }
    }
}

impl ReuseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau0.is_finite() && self.tau0 >= 0.0) {
            return Err(Error::Config("tau0 must be >= 0".into()));
        }
        if !(self.delta_tau.is_finite() && self.delta_tau >= 0.0) {
            return Err(Error::Config("delta_tau must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.psi0) {
            return Err(Error::InvalidProbability {
                name: "psi0",
                value: self.psi0,
            });
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::Config("nu must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Probability of following the past policy at step `t` of an episode.
    pub fn psi_at(&self, t: u64) -> f64 {
        self.psi0 * self.nu.powi(t.min(i32::MAX as u64) as i32)
    }
}

/// Running scores `W`, selection counts `U` and the temperature.
#[derive(Clone, Debug, PartialEq)]
pub struct ReuseState {
    w: Vec<f64>,
    u: Vec<u64>,
    tau0: f64,
    delta_tau: f64,
    updates: u64,
}

impl ReuseState {
    /// Slot 0 is the new policy; slots `1..=library_len` the library.
    pub fn new(library_len: usize, tau0: f64, delta_tau: f64) -> Self {
        Self {
            w: vec![0.0; library_len + 1],
            u: vec![0; library_len + 1],
            tau0,
            delta_tau,
            updates: 0,
        }
    }

    pub fn scores(&self) -> &[f64] {
        &self.w
    }

    pub fn counts(&self) -> &[u64] {
        &self.u
    }

    pub fn tau(&self) -> f64 {
        self.tau0 + self.updates as f64 * self.delta_tau
    }

    pub fn probabilities(&self) -> Result<Vec<f64>> {
        policy_probabilities(&self.w, self.tau())
    }

    pub fn update_scores(&mut self, k: usize, reward: f64) -> Result<()> {
        if k >= self.w.len() {
            return Err(Error::Config(format!("policy index {k} out of range 0..{}", self.w.len())));
        }
        let u = self.u[k] as f64;
        self.w[k] = (self.w[k] * u + reward) / (u + 1.0);
        self.u[k] += 1;
        self.updates += 1;
        Ok(())
    }
}

/// Follows `past` greedily with probability `psi`, otherwise the learner
/// greedily; `psi` decays by `nu` after every step.
pub struct PiExploration<'a> {
    past: &'a QNetwork,
    params: ReuseParams,
    steps: u64,
    rng: &'a mut Rng,
}

impl<'a> PiExploration<'a> {
    pub fn new(past: &'a QNetwork, params: ReuseParams, rng: &'a mut Rng) -> Self {
        Self {
            past,
            params,
            steps: 0,
            rng,
        }
    }

    pub fn psi(&self) -> f64 {
        self.params.psi_at(self.steps)
    }
}

impl ActionChooser for PiExploration<'_> {
    fn choose(&mut self, state: &EnvState, online: &QNetwork, _explore: &mut Rng) -> Result<ActionId> {
        let p: f64 = self.rng.random();
        if p <= self.psi() && self.psi() > 0.0 {
            self.past.greedy(state)
        } else {
            online.greedy(state)
        }
    }

    fn after_step(&mut self) {
        self.steps += 1;
    }
}

/// One pi-exploration episode; returns the result and the final `psi`.
pub fn run_pi_exploration_episode(
    env: &mut SurfaceEnv,
    agent: &mut DdqnAgent,
    past: &QNetwork,
    params: ReuseParams,
    rng: &mut Rng,
) -> Result<(EpisodeResult, f64)> {
    let mut chooser = PiExploration::new(past, params, rng);
    let result = run_episode(env, agent, &mut chooser, EpisodeMode::Train)?;
    Ok((result, chooser.psi()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LibraryEntry {
    pub policy: QNetwork,
    /// Error rate of the environment the policy was trained on, if known.
    pub source_p_err: Option<f64>,
    pub manifest: BTreeMap<String, String>,
}

/// Ordered frozen policies; entry `i` is policy index `i + 1` during reuse.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PolicyLibrary {
    entries: Vec<LibraryEntry>,
}

pub const LIBRARY_INDEX: &str = "index.manifest";

impl PolicyLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LibraryEntry] {
        &self.entries
    }

    pub fn get(&self, i: usize) -> Option<&LibraryEntry> {
        self.entries.get(i)
    }

    pub fn push(&mut self, policy: QNetwork, source_p_err: Option<f64>) {
        self.entries.push(LibraryEntry {
            policy,
            source_p_err,
            manifest: BTreeMap::new(),
        });
    }

    pub fn check_compatible(&self, d: usize, depth: usize) -> Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            if e.policy.distance() != d || e.policy.depth() != depth {
                return Err(Error::Config(format!(
                    "library policy {} has d={}, V={} but the environment has d={d}, V={depth}",
                    i + 1,
                    e.policy.distance(),
                    e.policy.depth()
                )));
            }
        }
        Ok(())
    }

    /// Writes `policy-<i>` checkpoints and the index manifest into `dir`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut index = format!("format = surfrl-library\ncount = {}\n", self.len());
        for (i, e) in self.entries.iter().enumerate() {
            let name = format!("policy-{i}");
            let mut extra = e.manifest.clone();
            for k in ["d", "volume_depth", "source_p_err"] {
                extra.remove(k);
            }
            if let Some(p) = e.source_p_err {
                extra.insert("source_p_err".into(), p.to_string());
            }
            e.policy.save(&dir.join(&name), &extra)?;
            let sha = io::sha256_hex(&io::payload_bytes(e.policy.network()));
            let p = e.source_p_err.map_or_else(|| "unknown".to_string(), |p| p.to_string());
            index.push_str(&format!("policy.{i}.file = {name}\npolicy.{i}.p_err = {p}\npolicy.{i}.sha256 = {sha}\n"));
        }
        let path = dir.join(LIBRARY_INDEX);
        fs::write(&path, index).map_err(|e| Error::io(&path, e))
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let path = dir.join(LIBRARY_INDEX);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let kv = parse_kv(&text);
        let corrupt = |reason: String| Error::Corrupt {
            path: path.clone(),
            reason,
        };
        if kv.get("format").map(String::as_str) != Some("surfrl-library") {
            return Err(corrupt("not a policy library index".into()));
        }
        let count: usize = kv
            .get("count")
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| corrupt("missing count".into()))?;
        let mut lib = Self::new();
        for i in 0..count {
            let field = |k: &str| {
                kv.get(&format!("policy.{i}.{k}"))
                    .ok_or_else(|| corrupt(format!("missing policy.{i}.{k}")))
            };
            let stem = dir.join(field("file")?);
            let want = field("sha256")?;
            let (policy, manifest) = QNetwork::load(&stem)?;
            if manifest.get("payload_sha256") != Some(want) {
                return Err(corrupt(format!("checksum of policy {i} disagrees with its checkpoint")));
            }
            let source_p_err = field("p_err")?.parse().ok();
            lib.entries.push(LibraryEntry {
                policy,
                source_p_err,
                manifest,
            });
        }
        Ok(lib)
    }

    /// Each path is a library directory or a single checkpoint stem
    /// (with or without the `.manifest` extension).
    pub fn load_paths(paths: &[PathBuf]) -> Result<Self> {
        let mut lib = Self::new();
        for p in paths {
            if p.join(LIBRARY_INDEX).is_file() {
                lib.entries.extend(Self::load_dir(p)?.entries);
                continue;
            }
            let stem = if p.extension().is_some_and(|e| e == "manifest") {
                p.with_extension("")
            } else {
                p.clone()
            };
            let (policy, manifest) = QNetwork::load(&stem)?;
            let source_p_err = manifest.get("source_p_err").and_then(|v| v.parse().ok());
            lib.entries.push(LibraryEntry {
                policy,
                source_p_err,
                manifest,
            });
        }
        Ok(lib)
    }
}

pub(crate) fn parse_kv(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PprLog {
    pub records: Vec<EpisodeRecord>,
    /// `W` after each episode.
    pub scores: Vec<Vec<f64>>,
    pub state: ReuseState,
}

/// Reuse training of `agent` on `env` against `library`.
///
/// The selection and psi draws use their own streams of `seed`, so with an
/// empty library the learner sees exactly the scratch-training sequence.
pub fn run_ppr(
    env: &mut SurfaceEnv,
    agent: &mut DdqnAgent,
    library: &PolicyLibrary,
    params: ReuseParams,
    seed: u64,
    mut on_episode: impl FnMut(&EpisodeRecord),
) -> Result<PprLog> {
    params.validate()?;
    library.check_compatible(env.layout().distance(), env.depth())?;
    if agent.online().num_actions() != env.num_actions() {
        return Err(Error::Shape("learner does not match the environment".into()));
    }
    let mut selection = stream(seed, Stream::Selection);
    let mut reuse = stream(seed, Stream::Reuse);
    let mut state = ReuseState::new(library.len(), params.tau0, params.delta_tau);
    let episodes = agent.config().episodes;
    let mut records = Vec::with_capacity(episodes as usize);
    let mut scores = Vec::with_capacity(episodes as usize);
    for e in 0..episodes {
        let p = state.probabilities()?;
        let k = select_policy(&p, &mut selection)?;
        let (result, psi_end, epsilon) = if k == 0 {
            let epsilon = agent.config().epsilon.at(e);
            let r = run_episode(env, agent, &mut EpsilonGreedy { epsilon }, EpisodeMode::Train)?;
            (r, 0.0, epsilon)
        } else {
            let past = &library.entries[k - 1].policy;
            let (r, psi) = run_pi_exploration_episode(env, agent, past, params, &mut reuse)?;
            (r, psi, 0.0)
        };
        state.update_scores(k, result.total_reward)?;
        let record = EpisodeRecord {
            episode: e + 1,
            policy: k,
            total_reward: result.total_reward,
            lifetime: result.lifetime,
            psi_end,
            epsilon,
        };
        on_episode(&record);
        records.push(record);
        scores.push(state.scores().to_vec());
        if (e + 1) % agent.config().target_update == 0 {
            agent.sync_target()?;
        }
    }
    Ok(PprLog { records, scores, state })
}
