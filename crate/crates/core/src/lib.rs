//! Local estimation of stationary probabilities of Markov chains from
//! truncated return-time samples.
//!
//! The estimator only ever walks from the anchor state, so it works on
//! countable chains and on finite chains too large to store densely. The
//! [`oracle`] module computes exact quantities for small finite chains and
//! [`bounds`] evaluates the analytic error and cost guarantees.

pub mod bounds;
pub mod chain;
pub mod distsim;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod oracle;
pub mod rng;
pub mod sampler;

pub use chain::{ChainHandle, StateId};
pub use error::{Error, Result};
