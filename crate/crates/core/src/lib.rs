//! Semi-online trajectory reconstruction and target-aligned step reward
//! shaping for GUI-agent datasets.
//!
//! A task holds expert (ground-truth) actions plus `N` candidate actions per
//! step. [`reconstruction`] chains same-index candidates into rollouts and
//! truncates each at its first invalid step; [`shaping`] turns the scored
//! rollouts into dense step rewards whose sum equals a trajectory-level
//! budget; [`grouping`] computes group-relative advantages for a GRPO-style
//! learner. [`synthenv`] is a synthetic navigation world and toy trainer
//! used to compare sparse and shaped rewards.

pub mod action;
pub mod cli;
pub mod config;
pub mod datasets;
pub mod error;
pub mod grouping;
pub mod reconstruction;
pub mod scoring;
pub mod shaping;
pub mod synthenv;
pub mod text;

pub use action::{normalize_point, parse_action, serialize_action, Action, ActionKind, Direction, Point, ScreenDims};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use reconstruction::{reconstruct, ReconstructedTrajectory, StepRecord, TaskRecord};
pub use scoring::{score_action, ScoringConfig, StepScore};
pub use shaping::{shape_batch, shape_trajectory, BatchStats, ShapedTrajectory, ShapingConfig, ShapingInput};
