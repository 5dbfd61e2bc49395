use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::derive_seed;
use super::world::{generate_task, jitter, SyntheticWorld, APPS, PHRASES};
use crate::action::{Action, ActionKind, Direction, Point};
use crate::error::{Error, Result};
use crate::reconstruction::{StepRecord, TaskRecord};

/// How candidate rollouts deviate from the expert action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoisePolicy {
    /// Per-axis Gaussian jitter on pointer coordinates.
    pub click_noise_std: f64,
    pub wrong_kind_prob: f64,
    /// Per-token (Type) or per-character (Launch) corruption probability.
    pub text_corruption_rate: f64,
    pub early_finish_prob: f64,
    pub seed: u64,
}

impl Default for NoisePolicy {
    fn default() -> Self {
        Self {
            click_noise_std: 0.05,
            wrong_kind_prob: 0.05,
            text_corruption_rate: 0.1,
            early_finish_prob: 0.02,
            seed: 0,
        }
    }
}

impl NoisePolicy {
    pub fn none() -> Self {
        Self {
            click_noise_std: 0.0,
            wrong_kind_prob: 0.0,
            text_corruption_rate: 0.0,
            early_finish_prob: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("wrong_kind_prob", self.wrong_kind_prob),
            ("text_corruption_rate", self.text_corruption_rate),
            ("early_finish_prob", self.early_finish_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.click_noise_std.is_finite() && self.click_noise_std >= 0.0) {
            return Err(Error::Config(format!(
                "click_noise_std must be >= 0, got {}",
                self.click_noise_std
            )));
        }
        Ok(())
    }
}

fn random_point<R: Rng>(rng: &mut R) -> Point {
    Point::clamped(rng.random(), rng.random())
}

fn random_of_kind<R: Rng>(kind: ActionKind, rng: &mut R) -> Action {
    match kind {
        ActionKind::Click => Action::Click(random_point(rng)),
        ActionKind::LongPress => Action::LongPress(random_point(rng)),
        ActionKind::Scroll => Action::Scroll {
            start: random_point(rng),
            direction: Direction::ALL[rng.random_range(0..4)],
        },
        ActionKind::Type => Action::Type(PHRASES[rng.random_range(0..PHRASES.len())].to_string()),
        ActionKind::Launch => Action::Launch(APPS[rng.random_range(0..APPS.len())].to_string()),
        system => Action::system(system).expect("remaining kinds are system kinds"),
    }
}

fn corrupt_tokens<R: Rng>(text: &str, rate: f64, rng: &mut R) -> String {
    text.split_whitespace()
        .map(|tok| {
            if rate > 0.0 && rng.random_bool(rate) {
                format!("q{}", rng.random_range(0..1000u32))
            } else {
                tok.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn corrupt_chars<R: Rng>(text: &str, rate: f64, rng: &mut R) -> String {
    text.chars()
        .map(|c| {
            if rate > 0.0 && rng.random_bool(rate) {
                char::from(b'a' + rng.random_range(0..26u8))
            } else {
                c
            }
        })
        .collect()
}

fn perturb<R: Rng>(expert: &Action, noise: &NoisePolicy, rng: &mut R) -> Action {
    if noise.wrong_kind_prob > 0.0 && rng.random_bool(noise.wrong_kind_prob) {
        let others: Vec<ActionKind> = ActionKind::ALL
            .into_iter()
            .filter(|k| *k != expert.kind())
            .collect();
        let kind = others[rng.random_range(0..others.len())];
        return random_of_kind(kind, rng);
    }
    if *expert != Action::Finished
        && noise.early_finish_prob > 0.0
        && rng.random_bool(noise.early_finish_prob)
    {
        return Action::Finished;
    }
    let std = noise.click_noise_std;
    match expert {
        Action::Click(p) => Action::Click(jitter(*p, std, rng)),
        Action::LongPress(p) => Action::LongPress(jitter(*p, std, rng)),
        Action::Scroll { start, direction } => Action::Scroll {
            start: jitter(*start, std, rng),
            direction: *direction,
        },
        Action::Type(t) => Action::Type(corrupt_tokens(t, noise.text_corruption_rate, rng)),
        Action::Launch(a) => Action::Launch(corrupt_chars(a, noise.text_corruption_rate, rng)),
        other => other.clone(),
    }
}

/// `n` noisy candidates per expert step, reproducible from `seed` and the
/// policy's own seed.
pub fn sample_candidates(
    world: &SyntheticWorld,
    expert: &[Action],
    noise: &NoisePolicy,
    n: usize,
    seed: u64,
) -> Vec<Vec<Action>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[noise.seed, world.seed]));
    expert
        .iter()
        .map(|a| (0..n).map(|_| perturb(a, noise, &mut rng)).collect())
        .collect()
}

/// Generates a world and wraps its expert path plus sampled candidates as
/// a [`TaskRecord`].
pub fn simulate_task(
    task_id: impl Into<String>,
    length: usize,
    branching: usize,
    noise: &NoisePolicy,
    n: usize,
    seed: u64,
) -> Result<TaskRecord> {
    if n == 0 {
        return Err(Error::domain("need at least one rollout per step"));
    }
    let (world, expert) = generate_task(length, branching, seed)?;
    let candidates = sample_candidates(&world, &expert, noise, n, seed);
    let steps = expert
        .into_iter()
        .zip(candidates)
        .map(|(gt, candidates)| StepRecord { gt, candidates })
        .collect();
    TaskRecord::new(task_id, format!("synthetic task of {length} steps"), steps, None)
}
