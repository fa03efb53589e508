use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{Architecture, EpsilonSchedule, TrainingConfig};
use crate::env::NoiseParams;
use crate::error::{Error, Result};
use crate::ppr::ReuseParams;

/// Every knob of one run. Serialized as flat JSON; unknown keys are errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: String,
    pub d: usize,
    /// Syndrome rounds per volume; defaults to `d`.
    pub volume_depth: Option<usize>,
    /// Sets both error rates unless they are given separately.
    pub p_err: Option<f64>,
    pub p_phys: Option<f64>,
    pub p_meas: Option<f64>,
    pub episodes: u64,
    pub max_steps: u64,
    pub replay_capacity: usize,
    pub lr: f32,
    pub gamma: f32,
    pub batch_size: usize,
    pub target_update: u64,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    pub epsilon_decay: f64,
    pub tau0: f64,
    pub delta_tau: f64,
    pub psi0: f64,
    pub nu: f64,
    pub seed: u64,
    pub library: Vec<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub conv_channels: [usize; 3],
    pub hidden_width: usize,
    pub referee: String,
    pub rolling_window: usize,
    pub histogram_bin: u64,
    /// Lifetime used for the episodes-to-threshold summary.
    pub lifetime_threshold: Option<f64>,
    pub baseline_trials: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainingConfig::default();
        let r = ReuseParams::default();
        let a = Architecture::default();
        Self {
            mode: "scratch".into(),
            d: 3,
            volume_depth: None,
            p_err: Some(0.003),
            p_phys: None,
            p_meas: None,
            episodes: 2000,
            max_steps: t.max_steps,
            replay_capacity: t.replay_capacity,
            lr: t.lr,
            gamma: t.gamma,
            batch_size: t.batch_size,
            target_update: t.target_update,
            epsilon_start: t.epsilon.start,
            epsilon_min: t.epsilon.min,
            epsilon_decay: t.epsilon.decay,
            tau0: r.tau0,
            delta_tau: r.delta_tau,
            psi0: r.psi0,
            nu: r.nu,
            seed: 0,
            library: Vec::new(),
            output_dir: None,
            conv_channels: a.conv_channels,
            hidden_width: a.hidden,
            referee: "matching".into(),
            rolling_window: 100,
            histogram_bin: 50,
            lifetime_threshold: None,
            baseline_trials: 1_000_000,
        }
    }
}

impl ExperimentConfig {
    /// d = 3, 2000 episodes, with epsilon reaching its floor well before the
    /// last fifth of training.
    pub fn desk() -> Self {
        Self {
            lr: 5e-4,
            epsilon_min: 0.005,
            epsilon_decay: 0.997,
            ..Self::default()
        }
    }

    /// d = 5, 10000 episodes with the published reuse hyperparameters.
    pub fn paper_d5() -> Self {
        Self {
            d: 5,
            episodes: 10_000,
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn volume_depth(&self) -> usize {
        self.volume_depth.unwrap_or(self.d)
    }

    pub fn noise(&self) -> Result<NoiseParams> {
        let phys = self.p_phys.or(self.p_err);
        let meas = self.p_meas.or(self.p_err);
        match (phys, meas) {
            (Some(p), Some(q)) => NoiseParams::new(p, q),
            _ => Err(Error::Config("set p_err, or both p_phys and p_meas".into())),
        }
    }

    /// The physical error rate, used to label policies and baselines.
    pub fn p_phys(&self) -> Result<f64> {
        Ok(self.noise()?.p_phys())
    }

    pub fn training(&self) -> TrainingConfig {
        TrainingConfig {
            gamma: self.gamma,
            lr: self.lr,
            batch_size: self.batch_size,
            replay_capacity: self.replay_capacity,
            target_update: self.target_update,
            epsilon: EpsilonSchedule {
                start: self.epsilon_start,
                min: self.epsilon_min,
                decay: self.epsilon_decay,
            },
            episodes: self.episodes,
            max_steps: self.max_steps,
            ..TrainingConfig::default()
        }
    }

    pub fn reuse(&self) -> ReuseParams {
        ReuseParams {
            tau0: self.tau0,
            delta_tau: self.delta_tau,
            psi0: self.psi0,
            nu: self.nu,
        }
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            conv_channels: self.conv_channels,
            hidden: self.hidden_width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 3 || self.d > 9 || self.d.is_multiple_of(2) {
            return Err(Error::InvalidDistance(self.d));
        }
        if self.volume_depth() == 0 {
            return Err(Error::Config("volume_depth must be >= 1".into()));
        }
        self.noise()?;
        self.training().validate()?;
        self.reuse().validate()?;
        if self.conv_channels.contains(&0) || self.hidden_width == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.rolling_window == 0 || self.histogram_bin == 0 {
            return Err(Error::Config("rolling_window and histogram_bin must be >= 1".into()));
        }
        if self.baseline_trials == 0 {
            return Err(Error::Config("baseline_trials must be >= 1".into()));
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON, ignoring
    /// `output_dir` so relocated runs hash alike.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))[..16].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::from_json(r#"{"d": 3, "learning_rate": 0.1}"#).unwrap_err();
        assert!(err.to_string().contains("learning_rate"));
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c = ExperimentConfig::from_json(r#"{"d": 5, "p_err": 0.007, "seed": 9}"#).unwrap();
        assert_eq!(c.volume_depth(), 5);
        assert_eq!(c.noise().unwrap(), NoiseParams::uniform(0.007).unwrap());
        assert_eq!(c.episodes, 2000);
        c.validate().unwrap();
    }

    #[test]
    fn separate_rates_override_p_err() {
        let c = ExperimentConfig {
            p_err: Some(0.01),
            p_meas: Some(0.0),
            ..Default::default()
        };
        let n = c.noise().unwrap();
        assert_eq!((n.p_phys(), n.p_meas()), (0.01, 0.0));
        let none = ExperimentConfig {
            p_err: None,
            p_phys: Some(0.01),
            ..Default::default()
        };
        assert!(none.noise().is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        for bad in [
            ExperimentConfig { d: 4, ..Default::default() },
            ExperimentConfig { p_err: Some(1.5), ..Default::default() },
            ExperimentConfig { episodes: 0, ..Default::default() },
            ExperimentConfig { batch_size: 20_000, ..Default::default() },
            ExperimentConfig { nu: 0.0, ..Default::default() },
            ExperimentConfig { psi0: -0.1, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn hash_tracks_content_not_location() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output_dir = Some("/elsewhere".into());
        assert_eq!(a.config_hash(), b.config_hash());
        b.seed = 1;
        assert_ne!(a.config_hash(), b.config_hash());
        let back = ExperimentConfig::from_json(&a.to_json()).unwrap();
        assert_eq!(back, a);
    }
}
