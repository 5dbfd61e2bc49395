//! Group-relative advantages over the `N` reconstructions of one task.
//!
//! The per-step scheme ([`step_advantages`]) is this crate's own dense
//! advantage: the trajectory's group-normalized return, plus each step's
//! deviation from the trajectory's mean shaped reward.

use crate::error::{Error, Result};
use crate::shaping::ShapedTrajectory;

#[derive(Debug, Clone)]
pub struct TaskGroup<'a> {
    pub task_id: String,
    pub members: Vec<&'a ShapedTrajectory>,
}

impl<'a> TaskGroup<'a> {
    pub fn new(members: Vec<&'a ShapedTrajectory>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::domain("task group must have at least one member"))?;
        let task_id = first.task_id.clone();
        if let Some(other) = members.iter().find(|m| m.task_id != task_id) {
            return Err(Error::domain(format!(
                "task group mixes task ids `{task_id}` and `{}`",
                other.task_id
            )));
        }
        Ok(Self { task_id, members })
    }
}

/// Splits shaped trajectories into consecutive runs sharing a task id.
pub fn group_by_task(shaped: &[ShapedTrajectory]) -> Vec<TaskGroup<'_>> {
    let mut groups: Vec<TaskGroup<'_>> = Vec::new();
    for s in shaped {
        match groups.last_mut() {
            Some(g) if g.task_id == s.task_id => g.members.push(s),
            _ => groups.push(TaskGroup {
                task_id: s.task_id.clone(),
                members: vec![s],
            }),
        }
    }
    groups
}

/// `(R_i - mean) / (population std + eps)`.
pub fn group_advantages(returns: &[f64], eps: f64) -> Vec<f64> {
    if returns.is_empty() {
        return Vec::new();
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt() + eps;
    returns.iter().map(|r| (r - mean) / denom).collect()
}

pub fn step_advantages(group: &TaskGroup<'_>, eps: f64) -> Vec<Vec<f64>> {
    let returns: Vec<f64> = group.members.iter().map(|m| m.sum_r_final()).collect();
    let traj_adv = group_advantages(&returns, eps);
    group
        .members
        .iter()
        .zip(traj_adv)
        .map(|(m, a)| {
            if m.steps.is_empty() {
                return Vec::new();
            }
            let mean = m.sum_r_final() / m.steps.len() as f64;
            m.steps.iter().map(|s| a + (s.r_final - mean)).collect()
        })
        .collect()
}

/// Fills the `advantage` field of every step, grouping consecutive records
/// by task id.
pub fn attach_advantages(shaped: &mut [ShapedTrajectory], eps: f64) {
    let all: Vec<Vec<f64>> = group_by_task(shaped)
        .iter()
        .flat_map(|g| step_advantages(g, eps))
        .collect();
    for (traj, adv) in shaped.iter_mut().zip(all) {
        for (step, a) in traj.steps.iter_mut().zip(adv) {
            step.advantage = Some(a);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shaping::ShapedStep;
    use proptest::prelude::*;

    fn shaped(task: &str, r_final: &[f64]) -> ShapedTrajectory {
        ShapedTrajectory {
            task_id: task.into(),
            rollout_index: 1,
            breakdown_step: None,
            success: false,
            r_target: r_final.iter().sum(),
            delta: 0.0,
            n_pos: r_final.len(),
            n_err: 0,
            s_pos_sum: 0.0,
            s_neg_sum: 0.0,
            aligned: true,
            steps: r_final
                .iter()
                .map(|&r| ShapedStep {
                    s_raw: 1.0,
                    valid: true,
                    s_signed: 1.0,
                    r_base: r,
                    r_final: r,
                    advantage: None,
                })
                .collect(),
        }
    }

    #[test]
    fn group_advantage_examples() {
        let a = group_advantages(&[1.0, 2.0, 3.0], 1e-6);
        let expect = 1.0 / ((2.0f64 / 3.0).sqrt() + 1e-6);
        assert!((a[0] + expect).abs() < 1e-12);
        assert_eq!(a[1], 0.0);
        assert!((a[2] - expect).abs() < 1e-12);
        assert!((a[2] - 1.224744).abs() < 1e-6);
        assert_eq!(group_advantages(&[5.0, 5.0, 5.0], 1e-6), vec![0.0; 3]);
        assert_eq!(group_advantages(&[7.0], 1e-6), vec![0.0]);
    }

    #[test]
    fn equal_returns_leave_only_step_offsets() {
        let a = shaped("t", &[1.0, 2.0]);
        let b = shaped("t", &[0.5, 2.5]);
        let g = TaskGroup::new(vec![&a, &b]).unwrap();
        let adv = step_advantages(&g, 1e-6);
        assert_eq!(adv[0], vec![-0.5, 0.5]);
        assert_eq!(adv[1], vec![-1.0, 1.0]);

        let c = shaped("t", &[0.7, 0.7, 0.7]);
        let g = TaskGroup::new(vec![&c]).unwrap();
        assert!(step_advantages(&g, 1e-6)[0].iter().all(|&x| x.abs() < 1e-15));
    }

    #[test]
    fn groups_reject_mixed_tasks() {
        let a = shaped("a", &[1.0]);
        let b = shaped("b", &[1.0]);
        assert!(TaskGroup::new(vec![&a, &b]).is_err());
        assert!(TaskGroup::new(vec![]).is_err());
        let all = vec![a.clone(), a.clone(), b.clone(), a];
        let groups = group_by_task(&all);
        assert_eq!(groups.iter().map(|g| g.members.len()).collect::<Vec<_>>(), vec![2, 1, 1]);
    }

    proptest! {
        #[test]
        fn zero_sum_and_shift_invariant_ranking(
            returns in prop::collection::vec(-10.0f64..10.0, 1..12),
            shift in -100.0f64..100.0,
        ) {
            let a = group_advantages(&returns, 1e-6);
            prop_assert!(a.iter().sum::<f64>().abs() < 1e-9);
            let shifted: Vec<f64> = returns.iter().map(|r| r + shift).collect();
            let b = group_advantages(&shifted, 1e-6);
            for i in 0..a.len() {
                for j in 0..a.len() {
                    if returns[i] < returns[j] - 1e-9 {
                        prop_assert!(a[i] < a[j] && b[i] < b[j]);
                    }
                }
            }
        }
    }
}
