use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::derive_seed;
use super::trainer::{train_policy, RewardMode, TrainerConfig};
use super::world::{generate_task, SyntheticWorld};
use crate::error::{Error, Result};
use crate::scoring::ScoringConfig;
use crate::shaping::ShapingConfig;

pub const CSV_COLUMNS: [&str; 8] = [
    "bucket",
    "mode",
    "seed",
    "update",
    "mean_reward",
    "success_rate",
    "nonzero_frac",
    "adv_var",
];

/// The `[experiment]` section of the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Inclusive `[min, max]` task lengths.
    pub buckets: Vec<[usize; 2]>,
    pub modes: Vec<RewardMode>,
    pub seeds: Vec<u64>,
    pub n_rollouts: usize,
    pub updates: usize,
    pub tasks_per_bucket: usize,
    pub learning_rate: f64,
    pub branching: usize,
    pub click_noise_std: f64,
    pub init_bias: f64,
    pub collapse_ratio: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainerConfig::default();
        Self {
            buckets: vec![[1, 5], [6, 13], [14, 20]],
            modes: vec![RewardMode::Sparse, RewardMode::Shaped],
            seeds: (0..5).collect(),
            n_rollouts: t.n_rollouts,
            updates: t.updates,
            tasks_per_bucket: 4,
            learning_rate: t.learning_rate,
            branching: 4,
            click_noise_std: t.click_noise_std,
            init_bias: t.init_bias,
            collapse_ratio: t.collapse_ratio,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        for b in &self.buckets {
            if b[0] < 1 || b[0] > b[1] {
                return Err(Error::Config(format!("invalid bucket [{}, {}]", b[0], b[1])));
            }
        }
        if self.n_rollouts == 0 || self.tasks_per_bucket == 0 {
            return Err(Error::Config(
                "n_rollouts and tasks_per_bucket must be positive".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config("learning_rate must be >= 0".into()));
        }
        Ok(())
    }

    pub fn trainer(&self, scoring: ScoringConfig, shaping: ShapingConfig) -> TrainerConfig {
        TrainerConfig {
            learning_rate: self.learning_rate,
            n_rollouts: self.n_rollouts,
            updates: self.updates,
            click_noise_std: self.click_noise_std,
            init_bias: self.init_bias,
            adv_eps: TrainerConfig::default().adv_eps,
            collapse_ratio: self.collapse_ratio,
            scoring,
            shaping,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub bucket: String,
    pub mode: RewardMode,
    pub seed: u64,
    pub update: usize,
    pub mean_reward: f64,
    pub success_rate: f64,
    pub nonzero_frac: f64,
    pub adv_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub bucket: String,
    pub mode: RewardMode,
    pub seed: u64,
    pub final_success: f64,
    pub final_mean_reward: f64,
    pub peak_mean_reward: f64,
    pub min_peak_ratio: f64,
    pub collapsed: bool,
    pub divergence_events: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ExperimentRow>,
    pub summaries: Vec<RunSummary>,
}

impl ExperimentReport {
    /// Mean final success over seeds for one bucket and mode.
    pub fn mean_final_success(&self, bucket: &str, mode: RewardMode) -> Option<f64> {
        let xs: Vec<f64> = self
            .summaries
            .iter()
            .filter(|s| s.bucket == bucket && s.mode == mode)
            .map(|s| s.final_success)
            .collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

pub fn bucket_label(b: &[usize; 2]) -> String {
    format!("{}-{}", b[0], b[1])
}

/// Tasks for one (bucket, seed) pair; shared by every reward mode so the
/// comparison runs on identical worlds.
fn bucket_tasks(
    cfg: &ExperimentConfig,
    bucket_idx: usize,
    seed: u64,
    master_seed: u64,
) -> Result<Vec<SyntheticWorld>> {
    let [lo, hi] = cfg.buckets[bucket_idx];
    (0..cfg.tasks_per_bucket)
        .map(|k| {
            let task_seed = derive_seed(master_seed, &[1, bucket_idx as u64, seed, k as u64]);
            let len = lo + (task_seed % (hi - lo + 1) as u64) as usize;
            Ok(generate_task(len, cfg.branching, task_seed)?.0)
        })
        .collect()
}

/// Runs every (bucket, mode, seed) combination. Runs are independent and
/// execute on the current rayon pool; output order is bucket, mode, seed.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    scoring: &ScoringConfig,
    shaping: &ShapingConfig,
    master_seed: u64,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let trainer = cfg.trainer(*scoring, *shaping);
    let mut jobs = Vec::new();
    for (b, _) in cfg.buckets.iter().enumerate() {
        for &mode in &cfg.modes {
            for &seed in &cfg.seeds {
                jobs.push((b, mode, seed));
            }
        }
    }
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(b, mode, seed)| {
            let worlds = bucket_tasks(cfg, b, seed, master_seed)?;
            let run_seed = derive_seed(master_seed, &[2, b as u64, seed]);
            let curve = train_policy(&worlds, mode, &trainer, run_seed)?;
            Ok::<_, Error>((b, mode, seed, curve))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (b, mode, seed, curve) in results {
        let bucket = bucket_label(&cfg.buckets[b]);
        rows.extend(curve.rows.iter().map(|r| ExperimentRow {
            bucket: bucket.clone(),
            mode,
            seed,
            update: r.update,
            mean_reward: r.mean_reward,
            success_rate: r.success_rate,
            nonzero_frac: r.nonzero_frac,
            adv_var: r.adv_var,
        }));
        summaries.push(RunSummary {
            bucket,
            mode,
            seed,
            final_success: curve.final_success(0.1),
            final_mean_reward: curve.final_mean_reward(0.1),
            peak_mean_reward: curve.peak_mean_reward(),
            min_peak_ratio: curve.min_peak_ratio(),
            collapsed: curve.collapsed(cfg.collapse_ratio),
            divergence_events: curve.divergence_events.len(),
        });
    }
    Ok(ExperimentReport { rows, summaries })
}

pub fn write_report_csv<W: Write>(w: W, rows: &[ExperimentRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_COLUMNS)
        .map_err(|e| Error::domain(e.to_string()))?;
    for r in rows {
        out.serialize((
            &r.bucket,
            r.mode.as_str(),
            r.seed,
            r.update,
            r.mean_reward,
            r.success_rate,
            r.nonzero_frac,
            r.adv_var,
        ))
        .map_err(|e| Error::domain(e.to_string()))?;
    }
    out.flush().map_err(|e| Error::domain(e.to_string()))
}
