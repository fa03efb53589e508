use std::path::PathBuf;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::metrics::{self, RunMeta};
use super::modes::{meta_for, train_ppr_run, train_scratch_run, write_outcome, RunOutcome};
use super::Summary;
use crate::error::{Error, Result};
use crate::ppr::PolicyLibrary;

pub const LIBRARY_DIR: &str = "library";
pub const CURRICULUM_FILE: &str = "curriculum.json";

#[derive(Clone, Debug)]
pub struct CurriculumOutcome {
    pub library: PolicyLibrary,
    pub stages: Vec<RunOutcome>,
}

#[derive(Serialize)]
struct CurriculumFile<'a> {
    meta: &'a RunMeta,
    p_errs: &'a [f64],
    stages_completed: usize,
    stage_dirs: Vec<String>,
}

/// Configuration of stage `i` at error rate `p`.
pub fn stage_config(base: &ExperimentConfig, i: usize, p: f64) -> ExperimentConfig {
    ExperimentConfig {
        mode: if i == 0 { "scratch" } else { "ppr" }.into(),
        p_err: Some(p),
        p_phys: None,
        p_meas: None,
        seed: base.seed.wrapping_add(i as u64),
        library: Vec::new(),
        output_dir: base.output_dir.as_deref().map(|d| stage_dir(d, i)),
        ..base.clone()
    }
}

/// Stage 0 trains from scratch; stage `i > 0` reuses the policies of all
/// earlier stages, in order. Every stage's policy joins the library.
pub fn run_curriculum(base: &ExperimentConfig, p_errs: &[f64]) -> Result<CurriculumOutcome> {
    if p_errs.is_empty() {
        return Err(Error::Config("curriculum needs at least one error rate".into()));
    }
    if p_errs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("curriculum error rates must be strictly increasing".into()));
    }
    base.validate()?;
    let mut library = PolicyLibrary::new();
    let mut stages = Vec::with_capacity(p_errs.len());
    let meta = RunMeta {
        mode: "curriculum".into(),
        ..meta_for(base)
    };
    for (i, &p) in p_errs.iter().enumerate() {
        let config = stage_config(base, i, p);
        let stage = || -> Result<RunOutcome> {
            config.validate()?;
            let (records, scores, policy) = if i == 0 {
                let (r, p) = train_scratch_run(&config)?;
                (r, Vec::new(), p)
            } else {
                train_ppr_run(&config, &library)?
            };
            let summary = Summary::from_records(&records, config.rolling_window, config.lifetime_threshold)?;
            let outcome = RunOutcome {
                meta: meta_for(&config),
                records,
                summary: Some(summary),
                scores,
                baseline_mean_lifetime: None,
                policy: Some(policy),
            };
            if let Some(dir) = &config.output_dir {
                write_outcome(dir, &config, &outcome)?;
            }
            Ok(outcome)
        };
        let outcome = stage().map_err(|e| Error::Stage {
            stage: i,
            completed: i,
            source: Box::new(e),
        })?;
        library.push(outcome.policy.clone().expect("training yields a policy"), Some(p));
        stages.push(outcome);
        if let Some(dir) = &base.output_dir {
            library.save_dir(&dir.join(LIBRARY_DIR))?;
            metrics::write_json(
                &dir.join(CURRICULUM_FILE),
                &CurriculumFile {
                    meta: &meta,
                    p_errs,
                    stages_completed: i + 1,
                    stage_dirs: (0..=i).map(|s| format!("stage-{s}")).collect(),
                },
            )?;
        }
    }
    Ok(CurriculumOutcome { library, stages })
}

/// Output directory of stage `i` under `root`.
pub fn stage_dir(root: &std::path::Path, i: usize) -> PathBuf {
    root.join(format!("stage-{i}"))
}
