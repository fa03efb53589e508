use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use super::baseline::single_qubit_baseline;
use super::config::ExperimentConfig;
use super::metrics::{
    self, RunMeta, Summary, EPISODES_FILE, HISTOGRAM_FILE, ROLLING_FILE, SUMMARY_FILE,
};
use crate::agent::{self, DdqnAgent, EpisodeRecord, QNetwork};
use crate::env::SurfaceEnv;
use crate::error::{Error, Result};
use crate::lattice::build_layout;
use crate::ppr::{run_ppr, PolicyLibrary};
use crate::referee::referee_by_name;
use crate::rng::{stream, Stream};

pub const POLICY_STEM: &str = "policy";
pub const SCORES_FILE: &str = "scores.csv";
pub const CONFIG_FILE: &str = "config.json";

/// Everything a run produced, before it is written anywhere.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub meta: RunMeta,
    pub records: Vec<EpisodeRecord>,
    pub summary: Option<Summary>,
    /// Policy scores `W` after every episode (reuse runs only).
    pub scores: Vec<Vec<f64>>,
    pub baseline_mean_lifetime: Option<f64>,
    pub policy: Option<QNetwork>,
}

impl RunOutcome {
    pub fn lifetimes(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.lifetime).collect()
    }
}

/// One way of running an experiment, selected by `ExperimentConfig::mode`.
pub trait RunMode: Sync {
    fn name(&self) -> &'static str;
    fn run(&self, config: &ExperimentConfig) -> Result<RunOutcome>;
}

pub static RUN_MODES: &[&dyn RunMode] = &[&ScratchMode, &PprMode, &BaselineMode, &EvaluateMode];

pub fn mode_by_name(name: &str) -> Result<&'static dyn RunMode> {
    RUN_MODES
        .iter()
        .copied()
        .find(|m| m.name() == name)
        .ok_or_else(|| Error::UnknownStrategy {
            kind: "mode",
            name: name.to_string(),
            available: RUN_MODES.iter().map(|m| m.name()).collect::<Vec<_>>().join(", "),
        })
}

/// Validates, runs the configured mode and, if `output_dir` is set, writes
/// the metrics files and the final policy there.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let outcome = mode_by_name(&config.mode)?.run(config)?;
    if let Some(dir) = &config.output_dir {
        write_outcome(dir, config, &outcome)?;
    }
    Ok(outcome)
}

pub fn meta_for(config: &ExperimentConfig) -> RunMeta {
    RunMeta {
        mode: config.mode.clone(),
        config_hash: config.config_hash(),
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

pub fn build_env(config: &ExperimentConfig, randomness: Stream) -> Result<SurfaceEnv> {
    let layout = Arc::new(build_layout(config.d)?);
    let referee = Arc::from(referee_by_name(&config.referee, &layout)?);
    SurfaceEnv::new(
        layout,
        referee,
        config.noise()?,
        config.volume_depth(),
        stream(config.seed, randomness),
    )
}

pub fn build_agent(config: &ExperimentConfig) -> Result<DdqnAgent> {
    DdqnAgent::new(
        config.d,
        config.volume_depth(),
        config.architecture(),
        config.training(),
        config.seed,
    )
}

fn training_outcome(
    config: &ExperimentConfig,
    records: Vec<EpisodeRecord>,
    scores: Vec<Vec<f64>>,
    policy: Option<QNetwork>,
) -> Result<RunOutcome> {
    let summary = Summary::from_records(&records, config.rolling_window, config.lifetime_threshold)?;
    Ok(RunOutcome {
        meta: meta_for(config),
        records,
        summary: Some(summary),
        scores,
        baseline_mean_lifetime: None,
        policy,
    })
}

/// Scratch training; returns the records and the trained policy.
pub fn train_scratch_run(config: &ExperimentConfig) -> Result<(Vec<EpisodeRecord>, QNetwork)> {
    let mut env = build_env(config, Stream::Environment)?;
    let mut agent = build_agent(config)?;
    let records = agent::train_scratch(&mut env, &mut agent, |_| {})?;
    Ok((records, agent.into_online()))
}

/// Reuse training against `library`.
pub fn train_ppr_run(
    config: &ExperimentConfig,
    library: &PolicyLibrary,
) -> Result<(Vec<EpisodeRecord>, Vec<Vec<f64>>, QNetwork)> {
    let mut env = build_env(config, Stream::Environment)?;
    let mut agent = build_agent(config)?;
    let log = run_ppr(&mut env, &mut agent, library, config.reuse(), config.seed, |_| {})?;
    Ok((log.records, log.scores, agent.into_online()))
}

/// Greedy play of a frozen policy for `config.episodes` episodes.
pub fn evaluate_policy(config: &ExperimentConfig, policy: &QNetwork) -> Result<Vec<EpisodeRecord>> {
    if policy.distance() != config.d || policy.depth() != config.volume_depth() {
        return Err(Error::Config(format!(
            "policy expects d={}, V={}; config has d={}, V={}",
            policy.distance(),
            policy.depth(),
            config.d,
            config.volume_depth()
        )));
    }
    let mut env = build_env(config, Stream::Evaluation)?;
    let results = agent::evaluate(&mut env, policy, config.episodes, config.max_steps)?;
    Ok(results
        .iter()
        .enumerate()
        .map(|(i, r)| EpisodeRecord {
            episode: i as u64 + 1,
            policy: 0,
            total_reward: r.total_reward,
            lifetime: r.lifetime,
            psi_end: 0.0,
            epsilon: 0.0,
        })
        .collect())
}

/// Mean lifetime of a freshly initialised, never-trained network.
pub fn untrained_mean_lifetime(config: &ExperimentConfig) -> Result<f64> {
    let policy = QNetwork::new(config.d, config.volume_depth(), config.architecture(), config.seed)?;
    let records = evaluate_policy(config, &policy)?;
    Ok(records.iter().map(|r| r.lifetime as f64).sum::<f64>() / records.len() as f64)
}

pub struct ScratchMode;

impl RunMode for ScratchMode {
    fn name(&self) -> &'static str {
        "scratch"
    }

    fn run(&self, config: &ExperimentConfig) -> Result<RunOutcome> {
        let (records, policy) = train_scratch_run(config)?;
        training_outcome(config, records, Vec::new(), Some(policy))
    }
}

pub struct PprMode;

impl RunMode for PprMode {
    fn name(&self) -> &'static str {
        "ppr"
    }

    fn run(&self, config: &ExperimentConfig) -> Result<RunOutcome> {
        let library = PolicyLibrary::load_paths(&config.library)?;
        let (records, scores, policy) = train_ppr_run(config, &library)?;
        training_outcome(config, records, scores, Some(policy))
    }
}

pub struct BaselineMode;

impl RunMode for BaselineMode {
    fn name(&self) -> &'static str {
        "baseline"
    }

    fn run(&self, config: &ExperimentConfig) -> Result<RunOutcome> {
        let mut rng = stream(config.seed, Stream::Baseline);
        let mean = single_qubit_baseline(config.p_phys()?, config.baseline_trials, &mut rng)?;
        Ok(RunOutcome {
            meta: meta_for(config),
            records: Vec::new(),
            summary: None,
            scores: Vec::new(),
            baseline_mean_lifetime: Some(mean),
            policy: None,
        })
    }
}

/// Greedy evaluation of the first library entry.
pub struct EvaluateMode;

impl RunMode for EvaluateMode {
    fn name(&self) -> &'static str {
        "evaluate"
    }

    fn run(&self, config: &ExperimentConfig) -> Result<RunOutcome> {
        let library = PolicyLibrary::load_paths(&config.library)?;
        let entry = library
            .get(0)
            .ok_or_else(|| Error::Config("evaluate needs a policy in `library`".into()))?;
        let records = evaluate_policy(config, &entry.policy)?;
        training_outcome(config, records, Vec::new(), None)
    }
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    meta: &'a RunMeta,
    p_phys: f64,
    p_meas: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    summary: Option<&'a Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline_trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline_mean_lifetime: Option<f64>,
}

/// Checkpoint metadata recorded next to a trained policy.
pub fn policy_metadata(config: &ExperimentConfig) -> Result<BTreeMap<String, String>> {
    let [c1, c2, c3] = config.conv_channels;
    Ok(BTreeMap::from([
        ("conv_channels".into(), format!("{c1},{c2},{c3}")),
        ("hidden_width".into(), config.hidden_width.to_string()),
        ("source_p_err".into(), config.p_phys()?.to_string()),
        ("episodes".into(), config.episodes.to_string()),
        ("train_seed".into(), config.seed.to_string()),
        ("config_hash".into(), config.config_hash()),
    ]))
}

pub fn write_outcome(dir: &Path, config: &ExperimentConfig, outcome: &RunOutcome) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = &outcome.meta;
    let noise = config.noise()?;
    metrics::write_json(
        &dir.join(SUMMARY_FILE),
        &SummaryFile {
            meta,
            p_phys: noise.p_phys(),
            p_meas: noise.p_meas(),
            summary: outcome.summary.as_ref(),
            baseline_trials: outcome.baseline_mean_lifetime.map(|_| config.baseline_trials),
            baseline_mean_lifetime: outcome.baseline_mean_lifetime,
        },
    )?;
    let mut stored = config.clone();
    stored.output_dir = None;
    let config_path = dir.join(CONFIG_FILE);
    fs::write(&config_path, stored.to_json() + "\n").map_err(|e| Error::io(&config_path, e))?;
    if !outcome.records.is_empty() {
        let lifetimes = outcome.lifetimes();
        metrics::write_episodes(&dir.join(EPISODES_FILE), meta, &outcome.records)?;
        metrics::write_rolling(&dir.join(ROLLING_FILE), meta, &lifetimes, config.rolling_window)?;
        metrics::write_histogram(&dir.join(HISTOGRAM_FILE), meta, &lifetimes, config.histogram_bin)?;
    }
    if !outcome.scores.is_empty() {
        write_scores(&dir.join(SCORES_FILE), meta, &outcome.scores)?;
    }
    if let Some(policy) = &outcome.policy {
        let mut extra = policy_metadata(config)?;
        extra.insert("run_stamp".into(), meta.comment_line().trim_start_matches("# ").to_string());
        policy.save(&dir.join(POLICY_STEM), &extra)?;
    }
    Ok(())
}

fn write_scores(path: &Path, meta: &RunMeta, scores: &[Vec<f64>]) -> Result<()> {
    let mut text = meta.comment_line();
    text.push('\n');
    let n = scores[0].len();
    text.push_str("episode");
    for k in 0..n {
        text.push_str(&format!(",w{k}"));
    }
    text.push('\n');
    for (e, row) in scores.iter().enumerate() {
        text.push_str(&(e + 1).to_string());
        for w in row {
            text.push_str(&format!(",{w}"));
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
