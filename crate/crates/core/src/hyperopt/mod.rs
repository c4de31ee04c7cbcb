//! Hyperparameter search over finite Cartesian spaces with a
//! tree-structured Parzen estimator (TPE).
//!
//! The loop follows the usual surrogate scheme: model the history, pick the
//! assignment the model rates best, evaluate it, record the result, repeat.

mod network;
mod search;
mod space;
mod tpe;

pub use network::{
    apply_assignment, default_network_space, NetworkObjective, DEFAULT_OBJECTIVE_EPOCHS,
};
pub use search::{
    read_history, run_search, write_history_line, SearchOptions, SearchOutcome, TrialRecord,
    TrialStatus,
};
pub use space::{Assignment, Dimension, ParamValue, SearchSpace};
pub use tpe::{suggest, TpeConfig};
