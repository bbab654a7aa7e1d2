//! Active LZ: Lempel-Ziv context trees driving dynamic-programming control.
//!
//! - [`env`]: finite-order controlled Markov environments (Rock-Paper-Scissors builtin).
//! - [`exactdp`]: exact discounted and average-cost solvers for known kernels.
//! - [`ctree`]: the LZ78 context tree with add-half estimates and cost-to-go values.
//! - [`agent`]: the active LZ controller, exploration schedules and the doubling scheme.
//! - [`baseline`]: the predictive LZ comparison controller.
//! - [`bench`]: experiment harness, diagnostics and CSV output.

pub mod agent;
pub mod baseline;
pub mod bench;
pub mod ctree;
pub mod env;
pub mod error;
pub mod exactdp;

pub use agent::{
    run_doubling, run_episode, ActiveLzAgent, AgentConfig, Controller, Decision, DoublingConfig,
    ExplorationSchedule, TieRule,
};
pub use baseline::{PredictionTie, PredictiveLzAgent};
pub use bench::{run_experiment, AgentKind, ExperimentConfig, RunTrace, TraceRecorder};
pub use ctree::{ContextTree, NodeId};
pub use env::{Alphabet, CostFunction, EnvState, Environment, MarkovKernel};
pub use error::{Error, Result};
pub use exactdp::{optimal_average_cost, solve_discounted, StationaryPolicy, ValueFunction};
