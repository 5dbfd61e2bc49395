//! Synthetic GUI-navigation world and a toy policy-gradient trainer.
//!
//! Each task is a chain of screens with one expert action per screen. A
//! tabular softmax policy picks among discrete action templates per screen;
//! training compares a sparse terminal-success reward against the shaped
//! step rewards produced by [`crate::shaping`].

mod experiment;
mod noise;
mod policy;
mod trainer;
mod world;

pub use experiment::{
    run_experiment, write_report_csv, ExperimentConfig, ExperimentReport, ExperimentRow,
    RunSummary, CSV_COLUMNS,
};
pub use noise::{sample_candidates, simulate_task, NoisePolicy};
pub use policy::ToyPolicy;
pub use trainer::{
    sparse_rewards, train_policy, CurveRow, LearningCurve, RewardMode, TrainerConfig,
};
pub use world::{generate_task, ActionTemplate, Element, Screen, SyntheticWorld, APPS, PHRASES};

/// Mixes a base seed with stream identifiers (splitmix64 finalizer) so every
/// run, task and rollout draws from an independent, reproducible stream.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base;
    for &p in parts {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p.wrapping_mul(0xD6E8_FEB8_6659_FD93));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}
