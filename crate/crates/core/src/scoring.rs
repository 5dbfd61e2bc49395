//! Atomic action scoring and binary validity predicates.
//!
//! Every score lands in `[0, 1]`. Validity thresholds use strict
//! inequalities, so a tie on a boundary counts as invalid.

use serde::{Deserialize, Serialize};

use crate::action::{Action, ActionKind, Direction, Point};
use crate::error::{Error, Result};
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    /// Gaussian kernel width in normalized units.
    pub sigma: f64,
    /// Validity radius for coordinate actions.
    pub eps_pos: f64,
    /// Type F1 must exceed this to be valid.
    pub delta_text: f64,
    /// Launch similarity must exceed this.
    pub sim_threshold: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            sigma: 0.1,
            eps_pos: 0.14,
            delta_text: 0.5,
            sim_threshold: 0.9,
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("sigma", self.sigma)?;
        positive("eps_pos", self.eps_pos)?;
        if !(self.delta_text > 0.0 && self.delta_text < 1.0) {
            return Err(Error::Config(format!(
                "delta_text must lie in (0, 1), got {}",
                self.delta_text
            )));
        }
        if !(self.sim_threshold > 0.0 && self.sim_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "sim_threshold must lie in (0, 1], got {}",
                self.sim_threshold
            )));
        }
        Ok(())
    }
}

/// Raw validity score of one predicted step against its ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepScore {
    pub s_raw: f64,
    pub valid: bool,
}

impl StepScore {
    pub const MISMATCH: StepScore = StepScore {
        s_raw: 0.0,
        valid: false,
    };
}

fn gaussian(d_sq: f64, sigma: f64) -> f64 {
    (-d_sq / (2.0 * sigma * sigma)).exp()
}

pub fn score_click(pred: &Point, gt: &Point, cfg: &ScoringConfig) -> f64 {
    gaussian(pred.distance_sq(gt), cfg.sigma)
}

pub fn score_scroll(
    pred: (&Point, Direction),
    gt: (&Point, Direction),
    cfg: &ScoringConfig,
) -> f64 {
    if pred.1 != gt.1 {
        return 0.0;
    }
    gaussian(pred.0.distance_sq(gt.0), cfg.sigma)
}

pub fn score_type(pred: &str, gt: &str) -> f64 {
    text::token_f1(pred, gt)
}

pub fn score_launch(pred: &str, gt: &str, cfg: &ScoringConfig) -> f64 {
    if text::similarity(pred, gt) > cfg.sim_threshold {
        1.0
    } else {
        0.0
    }
}

pub fn score_system(pred: ActionKind, gt: ActionKind) -> f64 {
    if pred == gt {
        1.0
    } else {
        0.0
    }
}

/// Scores `pred` against `gt` and applies the validity table.
///
/// A kind mismatch (Click and LongPress are distinct) is a scoring outcome,
/// not an error: it yields `s_raw = 0`, invalid.
pub fn score_action(pred: &Action, gt: &Action, cfg: &ScoringConfig) -> StepScore {
    if pred.kind() != gt.kind() {
        return StepScore::MISMATCH;
    }
    match (pred, gt) {
        (Action::Click(p), Action::Click(g)) | (Action::LongPress(p), Action::LongPress(g)) => {
            let d_sq = p.distance_sq(g);
            StepScore {
                s_raw: gaussian(d_sq, cfg.sigma),
                valid: d_sq.sqrt() < cfg.eps_pos,
            }
        }
        (
            Action::Scroll {
                start: p,
                direction: pd,
            },
            Action::Scroll {
                start: g,
                direction: gd,
            },
        ) => {
            let s_raw = score_scroll((p, *pd), (g, *gd), cfg);
            StepScore {
                s_raw,
                valid: pd == gd && p.distance(g) < cfg.eps_pos,
            }
        }
        (Action::Type(p), Action::Type(g)) => {
            let f1 = score_type(p, g);
            StepScore {
                s_raw: f1,
                valid: f1 > cfg.delta_text,
            }
        }
        (Action::Launch(p), Action::Launch(g)) => {
            let s_raw = score_launch(p, g, cfg);
            StepScore {
                s_raw,
                valid: s_raw == 1.0,
            }
        }
        _ => {
            let s_raw = score_system(pred.kind(), gt.kind());
            StepScore {
                s_raw,
                valid: s_raw == 1.0,
            }
        }
    }
}
