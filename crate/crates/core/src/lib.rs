//! Adaptive question sequencing on a probability simplex, with the
//! simulated classroom needed to evaluate it.
//!
//! The centerpiece is a bandit-style sequencer that starts from a
//! personalized difficulty ranking, converts it to softmax weights over
//! ranking positions, and adapts both the weights and an exploration
//! factor from observed grades. Around it sit the pieces an experiment
//! needs: collaborative difficulty ranking from peer interaction data
//! ([`ranking`]), three comparison sequencers ([`baselines`]), a logistic
//! student simulator ([`simulator`]), a paired experiment harness
//! ([`harness`]), and file formats for histories, configs, and results
//! ([`io`]).
//!
//! Everything is deterministic given a seed: randomness flows through
//! explicitly keyed substreams ([`seeds`]), so results never depend on
//! thread scheduling or on which other experiment arms run.

pub mod baselines;
pub mod domain;
pub mod harness;
pub mod io;
pub mod maple;
pub mod ranking;
pub mod seeds;
pub mod simulator;

pub use domain::{Grade, InteractionHistory, Question, QuestionId, SkillId, StudentId};
pub use harness::{run_experiment, Algorithm, ExperimentConfig, ExperimentResult, Segment};
pub use maple::{MapleParams, MapleState};
pub use simulator::{SimParams, StudentProfile};
