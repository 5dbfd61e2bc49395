//! Index-chained trajectory reconstruction with breakdown truncation.
//!
//! Candidate `i` of every step is chained into rollout `i`. Each chained
//! rollout is scored step by step against the expert action and cut right
//! after its first invalid step. The breakdown step itself is kept because
//! it carries the penalty during shaping.

use serde::{Deserialize, Serialize};

use crate::action::{Action, ActionKind};
use crate::error::{Error, Result};
use crate::scoring::{score_action, ScoringConfig, StepScore};

pub const DEFAULT_ROLLOUTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub gt: Action,
    /// Position in this list is the rollout index (0-based here, 1-based in output).
    pub candidates: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskRecord {
    pub task_id: String,
    pub instruction: String,
    pub steps: Vec<StepRecord>,
    pub n_ref: usize,
    pub n_rollouts: usize,
}

impl TaskRecord {
    /// Builds a task, inferring `n_rollouts` from the first step and
    /// defaulting `n_ref` to the number of expert steps.
    pub fn new(
        task_id: impl Into<String>,
        instruction: impl Into<String>,
        steps: Vec<StepRecord>,
        n_ref: Option<usize>,
    ) -> Result<Self> {
        let first = steps
            .first()
            .ok_or_else(|| Error::schema("steps", "task must have at least one step in"))?;
        let task = Self {
            task_id: task_id.into(),
            instruction: instruction.into(),
            n_ref: n_ref.unwrap_or(steps.len()),
            n_rollouts: first.candidates.len(),
            steps,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::schema("steps", "task must have at least one step in"));
        }
        if self.n_ref == 0 {
            return Err(Error::schema("n_ref", "must be positive:"));
        }
        if self.n_rollouts == 0 {
            return Err(Error::schema("steps[0].candidates", "need at least one rollout in"));
        }
        for (t, step) in self.steps.iter().enumerate() {
            if step.candidates.len() != self.n_rollouts {
                return Err(Error::schema(
                    format!("steps[{t}].candidates"),
                    format!(
                        "ragged candidates: expected {} got {} at",
                        self.n_rollouts,
                        step.candidates.len()
                    ),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredStep {
    pub action: Action,
    pub score: StepScore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedTrajectory {
    pub task_id: String,
    /// 1-based rollout index.
    pub rollout_index: usize,
    pub steps: Vec<ScoredStep>,
    /// 0-based index of the first invalid step, if any.
    pub breakdown_step: Option<usize>,
    pub success: bool,
    pub n_ref: usize,
}

impl ReconstructedTrajectory {
    /// Number of retained steps `T`.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn scores(&self) -> Vec<StepScore> {
        self.steps.iter().map(|s| s.score).collect()
    }
}

/// A chained rollout before truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredChain {
    pub task_id: String,
    pub rollout_index: usize,
    pub n_ref: usize,
    pub steps: Vec<ScoredStep>,
}

/// Chains same-index candidates across steps into `N` rollouts.
pub fn chain_candidates(task: &TaskRecord) -> Result<Vec<Vec<Action>>> {
    task.validate()?;
    Ok((0..task.n_rollouts)
        .map(|i| task.steps.iter().map(|s| s.candidates[i].clone()).collect())
        .collect())
}

/// Index of the first `false`.
pub fn detect_breakdown(validity: &[bool]) -> Option<usize> {
    validity.iter().position(|v| !v)
}

/// Keeps steps `0..=t*` (everything when `t*` is absent) and sets the
/// success flag.
pub fn truncate_at_breakdown(chain: ScoredChain, t_star: Option<usize>) -> ReconstructedTrajectory {
    let (kept, _) = split_at_breakdown(chain, t_star);
    kept
}

fn split_at_breakdown(
    mut chain: ScoredChain,
    t_star: Option<usize>,
) -> (ReconstructedTrajectory, Vec<ScoredStep>) {
    let discarded = match t_star {
        Some(t) if t + 1 < chain.steps.len() => chain.steps.split_off(t + 1),
        _ => Vec::new(),
    };
    let success = t_star.is_none()
        && chain.steps.len() == chain.n_ref
        && chain
            .steps
            .last()
            .is_some_and(|s| s.action.kind() == ActionKind::Finished && s.score.valid);
    let traj = ReconstructedTrajectory {
        task_id: chain.task_id,
        rollout_index: chain.rollout_index,
        steps: chain.steps,
        breakdown_step: t_star,
        success,
        n_ref: chain.n_ref,
    };
    (traj, discarded)
}

/// Full reconstruction of one task into its `N` trajectories.
pub fn reconstruct(task: &TaskRecord, cfg: &ScoringConfig) -> Result<Vec<ReconstructedTrajectory>> {
    Ok(reconstruct_with_discarded(task, cfg)?
        .into_iter()
        .map(|(t, _)| t)
        .collect())
}

/// Like [`reconstruct`], also returning the scored steps cut after each
/// breakdown.
pub fn reconstruct_with_discarded(
    task: &TaskRecord,
    cfg: &ScoringConfig,
) -> Result<Vec<(ReconstructedTrajectory, Vec<ScoredStep>)>> {
    let chains = chain_candidates(task)?;
    Ok(chains
        .into_iter()
        .enumerate()
        .map(|(i, actions)| {
            let steps: Vec<ScoredStep> = actions
                .into_iter()
                .zip(&task.steps)
                .map(|(action, step)| ScoredStep {
                    score: score_action(&action, &step.gt, cfg),
                    action,
                })
                .collect();
            let validity: Vec<bool> = steps.iter().map(|s| s.score.valid).collect();
            let t_star = detect_breakdown(&validity);
            let chain = ScoredChain {
                task_id: task.task_id.clone(),
                rollout_index: i + 1,
                n_ref: task.n_ref,
                steps,
            };
            split_at_breakdown(chain, t_star)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::Point;

    fn click(x: f64) -> Action {
        Action::Click(Point::new(x, 0.5).unwrap())
    }

    fn task(gt: Vec<Action>, candidates: Vec<Vec<Action>>) -> TaskRecord {
        let steps = gt
            .into_iter()
            .zip(candidates)
            .map(|(gt, candidates)| StepRecord { gt, candidates })
            .collect();
        TaskRecord::new("t", "", steps, None).unwrap()
    }

    #[test]
    fn chaining_by_index() {
        let (a, b, c, d, e, f) = (click(0.0), click(0.1), click(0.2), click(0.3), click(0.4), click(0.5));
        let t = task(
            vec![Action::Wait, Action::Wait, Action::Wait],
            vec![vec![a.clone(), b.clone()], vec![c.clone(), d.clone()], vec![e.clone(), f.clone()]],
        );
        let chains = chain_candidates(&t).unwrap();
        assert_eq!(chains, vec![vec![a, c, e], vec![b, d, f]]);

        let single = task(vec![Action::Wait, Action::Finished], vec![vec![click(0.1)], vec![click(0.2)]]);
        assert_eq!(chain_candidates(&single).unwrap(), vec![vec![click(0.1), click(0.2)]]);
    }

    #[test]
    fn ragged_candidates_name_the_step() {
        let steps = vec![
            StepRecord { gt: Action::Wait, candidates: vec![Action::Wait, Action::Wait] },
            StepRecord { gt: Action::Wait, candidates: vec![Action::Wait, Action::Wait] },
            StepRecord { gt: Action::Wait, candidates: vec![Action::Wait; 3] },
        ];
        let err = TaskRecord::new("t", "", steps, None).unwrap_err();
        assert!(err.to_string().contains("steps[2]"), "{err}");
    }

    #[test]
    fn breakdown_detection() {
        assert_eq!(detect_breakdown(&[true, true, false, true]), Some(2));
        assert_eq!(detect_breakdown(&[true, true, true]), None);
        assert_eq!(detect_breakdown(&[false, true]), Some(0));
    }

    fn chain_of(validity: &[bool]) -> ScoredChain {
        ScoredChain {
            task_id: "t".into(),
            rollout_index: 1,
            n_ref: validity.len(),
            steps: validity
                .iter()
                .map(|&v| ScoredStep {
                    action: Action::Wait,
                    score: StepScore { s_raw: if v { 1.0 } else { 0.0 }, valid: v },
                })
                .collect(),
        }
    }

    #[test]
    fn truncation_keeps_breakdown_step() {
        let v = [true, true, false, true, false];
        let r = truncate_at_breakdown(chain_of(&v), detect_breakdown(&v));
        assert_eq!(r.len(), 3);
        assert!(!r.steps[2].score.valid);

        let v = [true; 5];
        let r = truncate_at_breakdown(chain_of(&v), None);
        assert_eq!(r.len(), 5);
        // last action is Wait, so not a success
        assert!(!r.success);

        let v = [false, true, true, true, true];
        let r = truncate_at_breakdown(chain_of(&v), Some(0));
        assert_eq!(r.len(), 1);
        assert!(!r.success);
    }

    #[test]
    fn perfect_rollouts_succeed() {
        let gt = vec![click(0.2), Action::Type("abc".into()), Action::Finished];
        let cands = gt.iter().map(|a| vec![a.clone(); 4]).collect();
        let out = reconstruct(&task(gt, cands), &ScoringConfig::default()).unwrap();
        assert_eq!(out.len(), 4);
        for (i, r) in out.iter().enumerate() {
            assert_eq!(r.rollout_index, i + 1);
            assert_eq!(r.breakdown_step, None);
            assert!(r.success);
            assert_eq!(r.len(), 3);
        }
    }

    #[test]
    fn immediate_breakdown_everywhere() {
        let gt = vec![click(0.2), Action::Finished];
        let cands = vec![vec![Action::PressHome; 3], vec![Action::Finished; 3]];
        let out = reconstruct(&task(gt, cands), &ScoringConfig::default()).unwrap();
        assert!(out.iter().all(|r| r.len() == 1 && !r.success && r.breakdown_step == Some(0)));
    }

    #[test]
    fn success_requires_reference_length() {
        let gt = vec![Action::Wait, Action::Finished];
        let cands = gt.iter().map(|a| vec![a.clone()]).collect::<Vec<_>>();
        let steps = gt
            .into_iter()
            .zip(cands)
            .map(|(gt, candidates)| StepRecord { gt, candidates })
            .collect();
        let t = TaskRecord::new("t", "", steps, Some(4)).unwrap();
        let out = reconstruct(&t, &ScoringConfig::default()).unwrap();
        assert!(!out[0].success);
    }

    #[test]
    fn discarded_suffix_is_reported() {
        let gt = vec![Action::Wait, Action::PressBack, Action::Finished];
        let cands = vec![vec![Action::Wait], vec![Action::Wait], vec![Action::Finished]];
        let out = reconstruct_with_discarded(&task(gt, cands), &ScoringConfig::default()).unwrap();
        let (kept, dropped) = &out[0];
        assert_eq!(kept.len(), 2);
        assert_eq!(dropped.len(), 1);
        assert_eq!(dropped[0].action, Action::Finished);
    }
}
