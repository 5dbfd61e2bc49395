//! Trajectory-aware reward shaping.
//!
//! Pipeline per trajectory:
//!
//! 1. `R_target` = mean raw score + `T / N_ref` + success indicator.
//! 2. Raw scores become signed scores: valid steps keep `s_raw`, invalid
//!    steps get `-(1 - s_raw)`.
//! 3. Positive scores in the valid prefix are normalized by their sum;
//!    negative scores by the sum of magnitudes plus a length-aware penalty
//!    `lambda * n_err / T_bar`, where `T_bar` is the batch mean length.
//! 4. The gap between `R_target` and the sum of base rewards is split
//!    equally over the positive prefix steps, so the shaped return equals
//!    `R_target` exactly.
//!
//! The engine accepts any validity pattern, not only the single trailing
//! breakdown that reconstruction produces.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reconstruction::{detect_breakdown, ReconstructedTrajectory};
use crate::scoring::StepScore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapingConfig {
    /// Penalty coefficient on `n_err / T_bar`.
    pub lambda: f64,
    /// Denominator guard.
    pub epsilon: f64,
    /// Discount; only the toy trainer's sparse mode reads it.
    pub gamma: f64,
}

impl Default for ShapingConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            epsilon: 1e-6,
            gamma: 0.95,
        }
    }
}

impl ShapingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats {
    pub t_bar: f64,
    pub n_trajectories: usize,
}

impl BatchStats {
    pub fn from_lengths(lengths: impl IntoIterator<Item = usize>) -> Result<Self> {
        let (sum, n) = lengths
            .into_iter()
            .fold((0usize, 0usize), |(s, n), l| (s + l, n + 1));
        if n == 0 {
            return Err(Error::domain("cannot shape an empty batch"));
        }
        if sum == 0 {
            return Err(Error::domain("batch contains only empty trajectories"));
        }
        Ok(Self {
            t_bar: sum as f64 / n as f64,
            n_trajectories: n,
        })
    }

    pub fn single(len: usize) -> Result<Self> {
        Self::from_lengths([len])
    }
}

/// What shaping needs from a trajectory. Built from a
/// [`ReconstructedTrajectory`] or directly for externally produced rollouts.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapingInput {
    pub task_id: String,
    pub rollout_index: usize,
    pub scores: Vec<StepScore>,
    pub breakdown_step: Option<usize>,
    pub n_ref: usize,
    pub success: bool,
}

impl ShapingInput {
    /// Breakdown step is the first invalid score.
    pub fn from_scores(scores: Vec<StepScore>, n_ref: usize, success: bool) -> Self {
        let validity: Vec<bool> = scores.iter().map(|s| s.valid).collect();
        Self {
            task_id: String::new(),
            rollout_index: 1,
            breakdown_step: detect_breakdown(&validity),
            scores,
            n_ref,
            success,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

impl From<&ReconstructedTrajectory> for ShapingInput {
    fn from(t: &ReconstructedTrajectory) -> Self {
        Self {
            task_id: t.task_id.clone(),
            rollout_index: t.rollout_index,
            scores: t.scores(),
            breakdown_step: t.breakdown_step,
            n_ref: t.n_ref,
            success: t.success,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapedStep {
    pub s_raw: f64,
    pub valid: bool,
    pub s_signed: f64,
    pub r_base: f64,
    pub r_final: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advantage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapedTrajectory {
    pub task_id: String,
    pub rollout_index: usize,
    pub breakdown_step: Option<usize>,
    pub success: bool,
    pub r_target: f64,
    pub delta: f64,
    pub n_pos: usize,
    pub n_err: usize,
    pub s_pos_sum: f64,
    pub s_neg_sum: f64,
    /// False when there was no positive prefix step to receive the gap.
    pub aligned: bool,
    pub steps: Vec<ShapedStep>,
}

impl ShapedTrajectory {
    pub fn sum_r_final(&self) -> f64 {
        self.steps.iter().map(|s| s.r_final).sum()
    }

    pub fn sum_r_base(&self) -> f64 {
        self.steps.iter().map(|s| s.r_base).sum()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregates {
    pub s_pos: f64,
    pub s_neg: f64,
    pub n_pos: usize,
    pub n_err: usize,
}

fn in_prefix(t: usize, t_star: Option<usize>) -> bool {
    t_star.is_none_or(|b| t < b)
}

/// Mean raw score plus progress ratio plus success bonus.
pub fn trajectory_reward(input: &ShapingInput) -> Result<f64> {
    if input.scores.is_empty() {
        return Err(Error::domain("trajectory reward of an empty trajectory"));
    }
    if input.n_ref == 0 {
        return Err(Error::domain("reference length must be positive"));
    }
    let t = input.scores.len() as f64;
    let mean = input.scores.iter().map(|s| s.s_raw).sum::<f64>() / t;
    Ok(mean + t / input.n_ref as f64 + if input.success { 1.0 } else { 0.0 })
}

pub fn signed_base_scores(scores: &[StepScore]) -> Vec<f64> {
    scores
        .iter()
        .map(|s| if s.valid { s.s_raw } else { -(1.0 - s.s_raw) })
        .collect()
}

pub fn aggregate(s: &[f64], t_star: Option<usize>) -> Aggregates {
    let mut agg = Aggregates {
        s_pos: 0.0,
        s_neg: 0.0,
        n_pos: 0,
        n_err: 0,
    };
    for (t, &v) in s.iter().enumerate() {
        if v > 0.0 && in_prefix(t, t_star) {
            agg.s_pos += v;
            agg.n_pos += 1;
        } else if v < 0.0 {
            agg.s_neg += -v;
            agg.n_err += 1;
        }
    }
    agg
}

/// Base rewards. Zero scores and positive scores outside the valid prefix
/// get 0.
pub fn base_normalize(
    s: &[f64],
    agg: &Aggregates,
    t_star: Option<usize>,
    stats: &BatchStats,
    cfg: &ShapingConfig,
) -> Vec<f64> {
    let penalty = cfg.lambda * agg.n_err as f64 / stats.t_bar;
    s.iter()
        .enumerate()
        .map(|(t, &v)| {
            if v < 0.0 {
                -(v.abs() / (agg.s_neg + cfg.epsilon) + penalty)
            } else if v > 0.0 && in_prefix(t, t_star) {
                v / (agg.s_pos + cfg.epsilon)
            } else {
                0.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub r_final: Vec<f64>,
    pub delta: f64,
    pub aligned: bool,
}

/// Splits `r_target - sum(r_base)` equally over the positive prefix steps.
/// With no such step the gap is withheld and `aligned` is false.
pub fn target_align(
    r_base: &[f64],
    s: &[f64],
    r_target: f64,
    n_pos: usize,
    t_star: Option<usize>,
) -> Alignment {
    let delta = r_target - r_base.iter().sum::<f64>();
    if n_pos == 0 {
        return Alignment {
            r_final: r_base.to_vec(),
            delta,
            aligned: false,
        };
    }
    let share = delta / n_pos as f64;
    let r_final = r_base
        .iter()
        .zip(s)
        .enumerate()
        .map(|(t, (&rb, &v))| {
            if v > 0.0 && in_prefix(t, t_star) {
                rb + share
            } else {
                rb
            }
        })
        .collect();
    Alignment {
        r_final,
        delta,
        aligned: true,
    }
}

/// Shapes one trajectory given precomputed batch statistics.
pub fn shape_input(
    input: &ShapingInput,
    stats: &BatchStats,
    cfg: &ShapingConfig,
) -> Result<ShapedTrajectory> {
    if !(stats.t_bar > 0.0) {
        return Err(Error::domain("batch average length must be positive"));
    }
    if let Some(b) = input.breakdown_step {
        if b >= input.scores.len() {
            return Err(Error::domain(format!(
                "breakdown step {b} beyond trajectory length {}",
                input.scores.len()
            )));
        }
    }
    let r_target = trajectory_reward(input)?;
    let t_star = input.breakdown_step;
    let s = signed_base_scores(&input.scores);
    let agg = aggregate(&s, t_star);
    let r_base = base_normalize(&s, &agg, t_star, stats, cfg);
    let alignment = target_align(&r_base, &s, r_target, agg.n_pos, t_star);
    let steps = input
        .scores
        .iter()
        .zip(&s)
        .zip(r_base.iter().zip(&alignment.r_final))
        .map(|((score, &s_signed), (&r_base, &r_final))| ShapedStep {
            s_raw: score.s_raw,
            valid: score.valid,
            s_signed,
            r_base,
            r_final,
            advantage: None,
        })
        .collect();
    Ok(ShapedTrajectory {
        task_id: input.task_id.clone(),
        rollout_index: input.rollout_index,
        breakdown_step: t_star,
        success: input.success,
        r_target,
        delta: alignment.delta,
        n_pos: agg.n_pos,
        n_err: agg.n_err,
        s_pos_sum: agg.s_pos,
        s_neg_sum: agg.s_neg,
        aligned: alignment.aligned,
        steps,
    })
}

pub fn shape_trajectory(
    traj: &ReconstructedTrajectory,
    stats: &BatchStats,
    cfg: &ShapingConfig,
) -> Result<ShapedTrajectory> {
    shape_input(&ShapingInput::from(traj), stats, cfg)
}

/// Computes `T_bar` once over the batch, then shapes every member.
/// Output order follows input order.
pub fn shape_batch(
    trajs: &[ReconstructedTrajectory],
    cfg: &ShapingConfig,
) -> Result<Vec<ShapedTrajectory>> {
    let stats = BatchStats::from_lengths(trajs.iter().map(|t| t.len()))?;
    trajs
        .par_iter()
        .map(|t| shape_trajectory(t, &stats, cfg))
        .collect()
}

pub fn shape_batch_inputs(
    inputs: &[ShapingInput],
    cfg: &ShapingConfig,
) -> Result<Vec<ShapedTrajectory>> {
    let stats = BatchStats::from_lengths(inputs.iter().map(|t| t.len()))?;
    inputs
        .par_iter()
        .map(|t| shape_input(t, &stats, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sc(s_raw: f64, valid: bool) -> StepScore {
        StepScore { s_raw, valid }
    }

    fn input(scores: &[(f64, bool)], n_ref: usize, success: bool) -> ShapingInput {
        ShapingInput::from_scores(scores.iter().map(|&(s, v)| sc(s, v)).collect(), n_ref, success)
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn trajectory_reward_examples() {
        let r = trajectory_reward(&input(&[(1.0, true), (1.0, true), (0.5, true)], 5, false)).unwrap();
        assert!(close(r, 2.5 / 3.0 + 0.6, 1e-12));
        let r = trajectory_reward(&input(&[(1.0, true); 4], 4, true)).unwrap();
        assert_eq!(r, 3.0);
        let r = trajectory_reward(&input(&[(0.0, false)], 10, false)).unwrap();
        assert!(close(r, 0.1, 1e-15));
        assert!(trajectory_reward(&input(&[], 3, false)).is_err());
    }

    #[test]
    fn signed_scores() {
        let s = signed_base_scores(&[sc(0.9, true), sc(0.3, false), sc(1.0, false)]);
        assert_eq!(s[0], 0.9);
        assert!(close(s[1], -0.7, 1e-15));
        assert_eq!(s[2], 0.0);
    }

    #[test]
    fn aggregate_examples() {
        let a = aggregate(&[0.9, 0.8, -0.7], Some(2));
        assert!(close(a.s_pos, 1.7, 1e-15) && close(a.s_neg, 0.7, 1e-15));
        assert_eq!((a.n_pos, a.n_err), (2, 1));
        let a = aggregate(&[1.0, 1.0, 1.0], None);
        assert_eq!((a.s_pos, a.s_neg, a.n_pos, a.n_err), (3.0, 0.0, 3, 0));
        let a = aggregate(&[-0.5], Some(0));
        assert_eq!((a.s_pos, a.s_neg, a.n_pos, a.n_err), (0.0, 0.5, 0, 1));
        // positive score after the breakdown is outside the prefix
        let a = aggregate(&[0.5, -0.2, 0.9], Some(1));
        assert_eq!((a.n_pos, a.n_err), (1, 1));
    }

    #[test]
    fn base_normalize_examples() {
        let cfg = ShapingConfig::default();
        let stats = BatchStats { t_bar: 3.0, n_trajectories: 1 };
        let s = [0.9, 0.8, -0.7];
        let rb = base_normalize(&s, &aggregate(&s, Some(2)), Some(2), &stats, &cfg);
        assert!(close(rb[0], 0.529411, 1e-6));
        assert!(close(rb[1], 0.470588, 1e-6));
        assert!(close(rb[2], -1.033332, 1e-6));

        let rb = base_normalize(&[1.0], &aggregate(&[1.0], None), None, &stats, &cfg);
        assert!(close(rb[0], 1.0 / (1.0 + 1e-6), 1e-15));

        let no_pen = ShapingConfig { lambda: 0.0, ..cfg };
        let rb = base_normalize(&s, &aggregate(&s, Some(2)), Some(2), &stats, &no_pen);
        assert!(close(rb[2], -0.7 / (0.7 + 1e-6), 1e-15));
    }

    #[test]
    fn target_align_examples() {
        let s = [0.9, 0.8, -0.7];
        let rb = [0.5, 0.5, -1.0];
        let a = target_align(&rb, &s, 0.0, 2, Some(2));
        assert_eq!(a.r_final, rb.to_vec());
        assert!(a.aligned);

        let a = target_align(&[-1.2], &[-0.5], 0.4, 0, Some(0));
        assert_eq!(a.r_final, vec![-1.2]);
        assert!(!a.aligned);
        assert!(close(a.delta, 1.6, 1e-15));
    }

    #[test]
    fn perfect_success_gets_equal_shares() {
        let t = 6;
        let out = shape_input(
            &input(&vec![(1.0, true); t], t, true),
            &BatchStats::single(t).unwrap(),
            &ShapingConfig::default(),
        )
        .unwrap();
        for s in &out.steps {
            assert!(close(s.r_final, 3.0 / t as f64, 1e-12));
        }
    }

    #[test]
    fn single_invalid_step() {
        let cfg = ShapingConfig::default();
        let stats = BatchStats { t_bar: 2.5, n_trajectories: 2 };
        let out = shape_input(&input(&[(0.4, false)], 3, false), &stats, &cfg).unwrap();
        let expect = -(0.6 / (0.6 + cfg.epsilon) + cfg.lambda / 2.5);
        assert!(close(out.steps[0].r_final, expect, 1e-15));
        assert!(!out.aligned);
        assert_eq!(out.n_pos, 0);
    }

    #[test]
    fn batch_mean_and_order() {
        let cfg = ShapingConfig::default();
        let a = input(&[(0.9, true), (0.2, false), (0.0, false)], 5, false);
        let b = input(&[(0.9, true), (0.8, true), (0.1, true), (0.3, false), (0.6, true)], 5, false);
        let out = shape_batch_inputs(&[a.clone(), b.clone()], &cfg).unwrap();
        let stats = BatchStats { t_bar: 4.0, n_trajectories: 2 };
        assert_eq!(out[0], shape_input(&a, &stats, &cfg).unwrap());
        assert_eq!(out[1], shape_input(&b, &stats, &cfg).unwrap());

        let single = shape_batch_inputs(std::slice::from_ref(&a), &cfg).unwrap();
        assert_eq!(single[0], shape_input(&a, &BatchStats::single(3).unwrap(), &cfg).unwrap());

        assert!(shape_batch_inputs(&[], &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ShapingConfig::default().validate().is_ok());
        assert!(ShapingConfig { epsilon: 0.0, ..Default::default() }.validate().is_err());
        assert!(ShapingConfig { lambda: -0.1, ..Default::default() }.validate().is_err());
    }

    fn arb_scores(max_len: usize) -> impl Strategy<Value = Vec<(f64, bool)>> {
        prop::collection::vec((0.0f64..=1.0, prop::bool::weighted(0.75)), 1..=max_len)
    }

    proptest! {
        #[test]
        fn sum_matches_target_when_positive_prefix_exists(
            scores in arb_scores(40),
            extra_ref in 0usize..10,
            success in any::<bool>(),
            t_bar in 1.0f64..40.0,
            lambda in 0.0f64..1.0,
        ) {
            let inp = input(&scores, scores.len() + extra_ref, success);
            let cfg = ShapingConfig { lambda, ..Default::default() };
            let out = shape_input(&inp, &BatchStats { t_bar, n_trajectories: 1 }, &cfg).unwrap();
            prop_assert!((out.delta - (out.r_target - out.sum_r_base())).abs() <= 1e-12 * out.r_target.abs().max(1.0));
            for (t, st) in out.steps.iter().enumerate() {
                prop_assert!((-1.0..=1.0).contains(&st.s_signed));
                if st.r_final > 0.0 {
                    prop_assert!(st.s_signed > 0.0);
                    prop_assert!(out.breakdown_step.is_none_or(|b| t < b));
                }
                if st.s_signed < 0.0 {
                    prop_assert_eq!(st.r_final, st.r_base);
                }
            }
            if out.n_pos >= 1 {
                let rel = (out.sum_r_final() - out.r_target).abs() / out.r_target.abs().max(1.0);
                prop_assert!(rel <= 1e-9);
                prop_assert!(out.aligned);
            } else {
                prop_assert!(!out.aligned);
            }
        }

        #[test]
        fn raising_a_valid_score_never_lowers_the_budget(
            scores in arb_scores(20),
            idx in any::<prop::sample::Index>(),
            bump in 0.0f64..1.0,
        ) {
            let base = input(&scores, scores.len(), false);
            let i = idx.index(scores.len());
            prop_assume!(scores[i].1);
            let mut raised = scores.clone();
            raised[i].0 = (raised[i].0 + bump).min(1.0);
            let before = trajectory_reward(&base).unwrap();
            let after = trajectory_reward(&input(&raised, scores.len(), false)).unwrap();
            prop_assert!(after >= before);
        }

        #[test]
        fn more_errors_deepen_each_penalty(k in 1usize..10, t_bar in 1.0f64..20.0) {
            // k equal negative steps keep each step's share at 1/k; compare
            // against the share-matched value without the extra errors.
            let cfg = ShapingConfig::default();
            let stats = BatchStats { t_bar, n_trajectories: 1 };
            let s_k: Vec<f64> = vec![-0.5; k];
            let s_k1: Vec<f64> = vec![-0.5; k + 1];
            let rb_k = base_normalize(&s_k, &aggregate(&s_k, Some(0)), Some(0), &stats, &cfg);
            let rb_k1 = base_normalize(&s_k1, &aggregate(&s_k1, Some(0)), Some(0), &stats, &cfg);
            let share_k = 0.5 / (0.5 * k as f64 + cfg.epsilon);
            let share_k1 = 0.5 / (0.5 * (k + 1) as f64 + cfg.epsilon);
            prop_assert!((rb_k[0] + share_k) > (rb_k1[0] + share_k1));
        }

        #[test]
        fn batch_permutation_permutes_output(
            a in arb_scores(10), b in arb_scores(10), c in arb_scores(10)
        ) {
            let cfg = ShapingConfig::default();
            let ins: Vec<_> = [a, b, c].iter().map(|s| input(s, s.len(), false)).collect();
            let fwd = shape_batch_inputs(&ins, &cfg).unwrap();
            let rev: Vec<_> = ins.iter().rev().cloned().collect();
            let mut back = shape_batch_inputs(&rev, &cfg).unwrap();
            back.reverse();
            prop_assert_eq!(fwd, back);
        }
    }
}
