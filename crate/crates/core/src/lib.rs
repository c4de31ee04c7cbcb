//! Multi-task deep autoencoders for expression profiles.
//!
//! An mRNA profile is compressed into a short cell identity code (CIC) from
//! which four heads reconstruct the mRNA profile, predict a matched miRNA
//! profile and classify tissue of origin and disease state. The crate holds
//! everything around that model: a small from-scratch neural-network engine,
//! the composite loss, TPE hyperparameter search, cross-validation, metrics,
//! robustness sweeps, PCA and a KNN baseline.

pub mod baselines;
pub mod data;
pub mod dimred;
pub mod error;
pub mod hyperopt;
pub mod losses;
pub mod math;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod par;
pub mod rng;
pub mod robustness;
pub mod train;

pub use error::{Error, Result};
pub use math::Matrix;
pub use rng::RngState;
