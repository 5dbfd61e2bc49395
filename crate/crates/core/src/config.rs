//! Resolved run configuration.
//!
//! The config file is TOML with optional sections:
//!
//! ```toml
//! seed = 0
//!
//! [scoring]
//! sigma = 0.1
//! eps_pos = 0.14
//! delta_text = 0.5
//! sim_threshold = 0.9
//!
//! [shaping]
//! lambda = 0.1
//! epsilon = 1e-6
//! gamma = 0.95
//!
//! [experiment]
//! buckets = [[1, 5], [6, 13], [14, 20]]
//! modes = ["sparse", "shaped"]
//! seeds = [0, 1, 2, 3, 4]
//! n_rollouts = 8
//! updates = 300
//! tasks_per_bucket = 4
//!
//! [simulate]
//! tasks = 20
//! min_len = 1
//! max_len = 20
//!
//! [simulate.noise]
//! click_noise_std = 0.05
//! ```
//!
//! Precedence is command-line flags, then the file, then defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reconstruction::DEFAULT_ROLLOUTS;
use crate::scoring::ScoringConfig;
use crate::shaping::ShapingConfig;
use crate::synthenv::{ExperimentConfig, NoisePolicy};

pub const CONFIG_ENV: &str = "SOLAR_SHAPER_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub tasks: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub branching: usize,
    pub n_rollouts: usize,
    pub noise: NoisePolicy,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            tasks: 20,
            min_len: 1,
            max_len: 20,
            branching: 4,
            n_rollouts: DEFAULT_ROLLOUTS,
            noise: NoisePolicy::default(),
        }
    }
}

impl SimulateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_len < 1 || self.min_len > self.max_len {
            return Err(Error::Config(format!(
                "simulate lengths must satisfy 1 <= min_len <= max_len, got {}..{}",
                self.min_len, self.max_len
            )));
        }
        if self.n_rollouts == 0 {
            return Err(Error::Config("simulate.n_rollouts must be positive".into()));
        }
        self.noise.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; does not affect results, so it is left out of
    /// output headers.
    #[serde(skip_serializing)]
    pub jobs: Option<usize>,
    pub scoring: ScoringConfig,
    pub shaping: ShapingConfig,
    pub experiment: ExperimentConfig,
    pub simulate: SimulateConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Picks the explicit path, else the environment fallback, else defaults;
    /// then applies flag overrides and validates.
    pub fn resolve(
        explicit: Option<&Path>,
        env_path: Option<PathBuf>,
        seed: Option<u64>,
        jobs: Option<usize>,
    ) -> Result<Self> {
        let path = explicit.map(Path::to_path_buf).or(env_path);
        let mut cfg = match path {
            Some(p) => Self::from_file(&p)?,
            None => Self::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if jobs.is_some() {
            cfg.jobs = jobs;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.scoring.validate()?;
        self.shaping.validate()?;
        self.experiment.validate()?;
        self.simulate.validate()?;
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be positive".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config is always representable")
    }
}
