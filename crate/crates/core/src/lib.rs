//! Joint transmit and jamming power allocation for an energy-harvesting
//! source/destination pair with a passive eavesdropper.
//!
//! The crate builds the exact finite MDP (quantized Markov channels, integer
//! battery levels, Bernoulli harvesting), solves it by policy iteration,
//! and evaluates the resulting look-up tables alongside reduced-state,
//! greedy, naive and single-node baselines by Monte Carlo.

pub mod config;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod mdp;
pub mod model;
pub mod persist;
pub mod planner;
pub mod selector;
pub mod sim;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use exec::Exec;
pub use experiment::{Axis, Row};
pub use mdp::{Action, Kernel, Mdp, StateSpace, Supply, SystemState};
pub use model::{ChannelModel, EnergyModel, RadioModel, SystemModel};
pub use planner::{Plan, Policy, ValueTable};
pub use selector::{Algorithm, Selector};
pub use sim::{MetricsSummary, Mode, SimConfig, Simulator};
