//! Policy search for finite-horizon time-inconsistent control problems.
//!
//! Policies are judged by subgame-perfect equilibrium (SPE): no decision
//! epoch can gain by deviating once, given that every later epoch follows
//! the policy. The crate offers exact backward evaluation, a backward
//! policy-iteration solver, a tabular Q-learning variant, a sample-based
//! actor-critic, and a dynamic mean-variance portfolio application.

#![allow(clippy::needless_range_loop)]

pub mod bpi;
pub mod error;
pub mod exact_dp;
pub mod experiments;
pub mod instances;
pub mod linreg;
pub mod mv;
pub mod rng;
pub mod sperl_ac;
pub mod sperl_q;
pub mod tic;

pub use error::{Result, SperlError};
