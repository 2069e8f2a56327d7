//! Streaming Bayesian gate-set tomography for two-qubit gate sets, with a
//! noisy-device simulator for synthetic experiments.

pub mod bayes;
pub mod bootstrap;
pub mod checkpoint;
pub mod error;
pub mod experiments;
pub mod gateset;
pub mod linalg;
pub mod linearize;
pub mod parity;
pub mod pauli;
pub mod postproc;
pub mod records;
pub mod session;
pub mod simulator;
#[doc(hidden)]
pub mod testkit;

pub use error::{parse_json, FbtError, Result};
