//! Exact backward evaluation of tabular policies on finite problems.
//!
//! The time-inconsistent `Q` function is not a Bellman fixed point. It is
//! recovered from three adjustment families that track, for every earlier
//! vantage point `(tau, y)`, the expected future intermediate rewards (`r`),
//! the expected terminal reward (`f`) and the expected terminal state
//! (`g`). The sweep costs `O(T^2 |X|^2 |U|)` per vantage point instead of
//! the exponential cost of path enumeration in [`oracle_value`].

mod backward;
mod oracle;
mod tables;
pub mod targets;

pub use backward::{eval_adjustments, eval_q, evaluate, evaluate_slice, AdjustmentTables};
pub use oracle::{oracle_q, oracle_value, visit_paths, DEFAULT_LEAF_CAP};
pub use tables::{Slice, Tables, ValueTables};
pub use targets::{dp_targets, DpTargets, NextState, TargetIndex};
