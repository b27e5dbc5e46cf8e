//! Trait-conditioned turn-taking models for group conversations.
//!
//! The crate predicts who speaks next in a group from each member's scalar
//! trait and the conversation so far, learns how speaking inclination
//! varies with the time since a member last spoke, simulates synthetic
//! conversations, and runs parameter-recovery experiments comparing a
//! learned proclivity against fixed baselines.
//!
//! - [`model`]: speaking scores, probabilities, turn classes and losses
//! - [`proclivity`]: fixed and learned proclivity functions, rescaled curves
//! - [`neural`]: small dense networks with hand-written backpropagation
//! - [`training`]: model variants and block coordinate descent
//! - [`synthgen`]: synthetic groups with known ground truth
//! - [`eval`]: test losses, multi-trial experiments and reports
//! - [`io`], [`config`], [`manifest`], [`cli`]: file formats, run records
//!   and the command line

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod io;
pub mod manifest;
pub mod model;
pub mod neural;
pub mod proclivity;
pub mod synthgen;
pub mod training;

pub use error::{Error, Result};
pub use eval::{evaluate, run_experiment, true_model, EvalGroup, Evaluation, ExperimentConfig, ExperimentReport, Method, Metric};
pub use model::{Conversation, Gap, Roster, ScoreParams, TurnClass};
pub use proclivity::{Proclivity, ProclivityCurve};
pub use training::{fit, FitConfig, Group, ModelBundle, TrainingSet, Variant};
