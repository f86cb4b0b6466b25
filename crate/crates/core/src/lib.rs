//! Metropolis-Hastings chains with Rao-Blackwellised occupation weights.
//!
//! A chain is stored as its accepted states `z_i` with occupation counts
//! `n_i`. Each count can be replaced by an unbiased estimate of the expected
//! occupation `1/p(z_i)`, built from extra proposals at `z_i`; the
//! resulting self-normalised estimators are compared against the plain
//! ergodic average.

pub mod error;
pub mod estimators;
pub mod experiment;
pub mod mh;
pub mod models;
pub mod probit;
pub mod rng;
pub mod selftest;
pub mod state;
pub mod stats;
pub mod weights;

pub use error::{Error, Result};
pub use mh::{acceptance_prob, decompose_chain, mh_step, run_chain, run_chain_until_blocks, run_chain_with, AcceptedBlock, ChainOptions, ChainRecord, Proposal, Target};
pub use state::State;
pub use weights::{xi_hat_k, PRPair, WeightOrder, WeightResult, WeightSpec};
