//! Simulator and verification library for online distributed clipped
//! stochastic gradient descent over time-varying directed graphs under
//! heavy-tailed gradient noise.
//!
//! The crate simulates the consensus/clip/descent iteration on configurable
//! tracking problems, computes dynamic-regret ledgers, and turns the
//! algorithm's network-error and regret bounds into executable checks.

pub mod bounds;
pub mod config;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod noise;
pub mod problem;
pub mod regret;
pub mod rng;
pub mod sim;

pub use config::{parse_config, ProblemName, RunConfig};
pub use error::{Error, Result};
pub use experiment::{
    run_experiment, sweep, CheckOutcome, CheckStatus, ExperimentOptions, ExperimentReport,
    SweepAxis,
};
pub use noise::{NoiseKind, NoiseModel};
pub use sim::{ClipSchedule, RunTrace, StepSchedule, SwarmState};
