use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::policy::ToyPolicy;
use super::world::{ActionTemplate, SyntheticWorld};
use crate::error::{Error, Result};
use crate::grouping::{group_advantages, step_advantages, TaskGroup};
use crate::reconstruction::{reconstruct_with_discarded, ReconstructedTrajectory, StepRecord, TaskRecord};
use crate::scoring::{score_action, ScoringConfig};
use crate::shaping::{shape_batch, ShapingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Terminal success indicator only.
    Sparse,
    /// Target-aligned step rewards.
    Shaped,
}

impl RewardMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RewardMode::Sparse => "sparse",
            RewardMode::Shaped => "shaped",
        }
    }
}

impl FromStr for RewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(RewardMode::Sparse),
            "shaped" => Ok(RewardMode::Shaped),
            other => Err(Error::Config(format!("unknown reward mode `{other}`"))),
        }
    }
}

impl fmt::Display for RewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    pub n_rollouts: usize,
    pub updates: usize,
    /// Pointer jitter applied when rendering sampled templates.
    pub click_noise_std: f64,
    /// Initial logit bonus on each screen's expert template (warm start).
    pub init_bias: f64,
    pub adv_eps: f64,
    /// Mean reward below this fraction of its running peak counts as collapse.
    pub collapse_ratio: f64,
    pub scoring: ScoringConfig,
    pub shaping: ShapingConfig,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1.0,
            n_rollouts: 8,
            updates: 300,
            click_noise_std: 0.02,
            init_bias: 3.0,
            adv_eps: 1e-6,
            collapse_ratio: 0.5,
            scoring: ScoringConfig::default(),
            shaping: ShapingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveRow {
    pub update: usize,
    /// Expected raw score per step under the current policy.
    pub mean_reward: f64,
    /// Expected probability of a fully valid rollout, averaged over tasks.
    pub success_rate: f64,
    /// Fraction of retained sampled steps carrying a nonzero reward.
    pub nonzero_frac: f64,
    /// Population variance of the per-step advantages of the update.
    pub adv_var: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    pub mode: RewardMode,
    pub rows: Vec<CurveRow>,
    /// Updates at which non-finite logits were found and reset.
    pub divergence_events: Vec<usize>,
}

impl LearningCurve {
    /// Mean success rate over the last `frac` of updates (at least one).
    pub fn final_success(&self, frac: f64) -> f64 {
        tail_mean(self.rows.iter().map(|r| r.success_rate), frac)
    }

    pub fn final_mean_reward(&self, frac: f64) -> f64 {
        tail_mean(self.rows.iter().map(|r| r.mean_reward), frac)
    }

    pub fn peak_mean_reward(&self) -> f64 {
        self.rows.iter().map(|r| r.mean_reward).fold(0.0, f64::max)
    }

    /// Lowest `mean_reward / running peak` over the updates after the first
    /// quarter.
    pub fn min_peak_ratio(&self) -> f64 {
        let warmup = self.rows.len() / 4;
        let mut peak = f64::NEG_INFINITY;
        let mut worst = 1.0f64;
        for (u, r) in self.rows.iter().enumerate() {
            peak = peak.max(r.mean_reward);
            if u >= warmup && peak > 0.0 {
                worst = worst.min(r.mean_reward / peak);
            }
        }
        worst
    }

    pub fn collapsed(&self, ratio: f64) -> bool {
        self.min_peak_ratio() < ratio
    }
}

fn tail_mean(values: impl ExactSizeIterator<Item = f64>, frac: f64) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    let k = ((n as f64 * frac).ceil() as usize).clamp(1, n);
    values.skip(n - k).sum::<f64>() / k as f64
}

/// Sparse reward vector: the success indicator on the last retained step.
pub fn sparse_rewards(traj: &ReconstructedTrajectory) -> Vec<f64> {
    let mut r = vec![0.0; traj.len()];
    if traj.success {
        if let Some(last) = r.last_mut() {
            *last = 1.0;
        }
    }
    r
}

struct TaskView<'a> {
    world: &'a SyntheticWorld,
    offset: usize,
    templates: Vec<Vec<ActionTemplate>>,
    /// Per screen, template indices whose unjittered rendering is valid.
    valid_mask: Vec<Vec<bool>>,
    template_scores: Vec<Vec<f64>>,
}

fn build_views<'a>(worlds: &'a [SyntheticWorld], cfg: &ScoringConfig) -> Vec<TaskView<'a>> {
    let mut offset = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    worlds
        .iter()
        .map(|world| {
            let templates: Vec<Vec<ActionTemplate>> = world.screens.iter().map(|s| s.templates()).collect();
            let mut valid_mask = Vec::new();
            let mut template_scores = Vec::new();
            for (screen, ts) in world.screens.iter().zip(&templates) {
                let scored: Vec<_> = ts
                    .iter()
                    .map(|t| score_action(&screen.render(*t, 0.0, &mut rng), &screen.expert, cfg))
                    .collect();
                valid_mask.push(scored.iter().map(|s| s.valid).collect());
                template_scores.push(scored.iter().map(|s| s.s_raw).collect());
            }
            let view = TaskView {
                world,
                offset,
                templates,
                valid_mask,
                template_scores,
            };
            offset += world.len();
            view
        })
        .collect()
}

fn evaluate(policy: &ToyPolicy, views: &[TaskView<'_>]) -> (f64, f64) {
    let mut reward_sum = 0.0;
    let mut steps = 0usize;
    let mut success_sum = 0.0;
    for v in views {
        let mut p_success = 1.0;
        for t in 0..v.world.len() {
            let probs = policy.probs(v.offset + t);
            reward_sum += probs.iter().zip(&v.template_scores[t]).map(|(p, s)| p * s).sum::<f64>();
            p_success *= probs
                .iter()
                .zip(&v.valid_mask[t])
                .filter(|(_, ok)| **ok)
                .map(|(p, _)| p)
                .sum::<f64>();
            steps += 1;
        }
        success_sum += p_success;
    }
    (reward_sum / steps.max(1) as f64, success_sum / views.len().max(1) as f64)
}

fn population_variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Score-function policy gradient over `worlds`.
///
/// Each update samples `n_rollouts` templates per expert screen (the
/// semi-online setting: every step conditions on the expert history),
/// reconstructs and shapes the batch, computes per-step advantages for the
/// chosen reward mode and takes one ascent step. Sparse mode discounts the
/// group-normalized success advantage back from the last retained step by
/// `gamma`; shaped mode uses the group-relative dense advantages directly.
pub fn train_policy(
    worlds: &[SyntheticWorld],
    mode: RewardMode,
    cfg: &TrainerConfig,
    seed: u64,
) -> Result<LearningCurve> {
    if worlds.is_empty() {
        return Err(Error::domain("training needs at least one task"));
    }
    if cfg.n_rollouts == 0 {
        return Err(Error::Config("n_rollouts must be positive".into()));
    }
    let views = build_views(worlds, &cfg.scoring);
    let sizes: Vec<usize> = views.iter().flat_map(|v| v.templates.iter().map(Vec::len)).collect();
    let mut policy = ToyPolicy::new(&sizes, cfg.learning_rate);
    for v in &views {
        for (t, screen) in v.world.screens.iter().enumerate() {
            policy.logits_mut(v.offset + t)[screen.expert_template()] += cfg.init_bias;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n_rollouts;
    let mut rows = Vec::with_capacity(cfg.updates);
    let mut divergence_events = Vec::new();

    for update in 0..cfg.updates {
        let (mean_reward, success_rate) = evaluate(&policy, &views);

        // sample, reconstruct
        let mut choices: Vec<Vec<Vec<usize>>> = Vec::with_capacity(views.len());
        let mut recon: Vec<ReconstructedTrajectory> = Vec::with_capacity(views.len() * n);
        for (k, v) in views.iter().enumerate() {
            let mut per_rollout = vec![Vec::with_capacity(v.world.len()); n];
            let steps: Vec<StepRecord> = v
                .world
                .screens
                .iter()
                .enumerate()
                .map(|(t, screen)| {
                    let candidates = per_rollout
                        .iter_mut()
                        .map(|chosen: &mut Vec<usize>| {
                            let idx = policy.sample(v.offset + t, &mut rng);
                            chosen.push(idx);
                            screen.render(v.templates[t][idx], cfg.click_noise_std, &mut rng)
                        })
                        .collect();
                    StepRecord {
                        gt: screen.expert.clone(),
                        candidates,
                    }
                })
                .collect();
            let task = TaskRecord::new(format!("task-{k}"), "", steps, None)?;
            recon.extend(
                reconstruct_with_discarded(&task, &cfg.scoring)?
                    .into_iter()
                    .map(|(kept, _)| kept),
            );
            choices.push(per_rollout);
        }

        let shaped = shape_batch(&recon, &cfg.shaping)?;

        // per-step advantages and reward density
        let mut advantages: Vec<Vec<f64>> = Vec::with_capacity(recon.len());
        let mut nonzero = 0usize;
        let mut retained = 0usize;
        for k in 0..views.len() {
            let trajs = &recon[k * n..(k + 1) * n];
            let members = &shaped[k * n..(k + 1) * n];
            match mode {
                RewardMode::Sparse => {
                    let returns: Vec<f64> = trajs.iter().map(|t| if t.success { 1.0 } else { 0.0 }).collect();
                    let group = group_advantages(&returns, cfg.adv_eps);
                    for (traj, a) in trajs.iter().zip(group) {
                        let len = traj.len();
                        advantages.push(
                            (0..len)
                                .map(|t| a * cfg.shaping.gamma.powi((len - 1 - t) as i32))
                                .collect(),
                        );
                        nonzero += sparse_rewards(traj).iter().filter(|r| **r != 0.0).count();
                        retained += len;
                    }
                }
                RewardMode::Shaped => {
                    let group = TaskGroup::new(members.iter().collect())?;
                    advantages.extend(step_advantages(&group, cfg.adv_eps));
                    for m in members {
                        nonzero += m.steps.iter().filter(|s| s.r_final != 0.0).count();
                        retained += m.len();
                    }
                }
            }
        }

        let mut grads = policy.zero_grads();
        for (k, v) in views.iter().enumerate() {
            for i in 0..n {
                let adv = &advantages[k * n + i];
                for (t, a) in adv.iter().enumerate() {
                    let screen = v.offset + t;
                    let action = choices[k][i][t];
                    policy.accumulate_grad(screen, action, a / n as f64, &mut grads[screen]);
                }
            }
        }
        policy.apply(&grads);

        let bad = policy.non_finite_screens();
        if !bad.is_empty() {
            log::warn!("update {update}: non-finite logits on {} screens, resetting", bad.len());
            divergence_events.push(update);
            for s in bad {
                policy.logits_mut(s).iter_mut().for_each(|l| *l = 0.0);
            }
        }

        let flat: Vec<f64> = advantages.iter().flatten().copied().collect();
        rows.push(CurveRow {
            update,
            mean_reward,
            success_rate,
            nonzero_frac: if retained == 0 { 0.0 } else { nonzero as f64 / retained as f64 },
            adv_var: population_variance(&flat),
        });
    }

    Ok(LearningCurve {
        mode,
        rows,
        divergence_events,
    })
}
