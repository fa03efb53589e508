//! Reproduction harness: configuration, run modes, curriculum, baselines and
//! metrics files.

mod baseline;
mod config;
mod curriculum;
pub mod metrics;
mod modes;

pub use baseline::single_qubit_baseline;
pub use config::ExperimentConfig;
pub use curriculum::{run_curriculum, stage_config, stage_dir, CurriculumOutcome, CURRICULUM_FILE, LIBRARY_DIR};
pub use metrics::{episodes_to_threshold, histogram, rolling_mean, RunMeta, Summary};
pub use modes::{
    build_agent, build_env, evaluate_policy, meta_for, mode_by_name, policy_metadata, run_experiment,
    train_ppr_run, train_scratch_run, untrained_mean_lifetime, write_outcome, RunMode, RunOutcome,
    CONFIG_FILE, POLICY_STEM, RUN_MODES, SCORES_FILE,
};
