//! One-step bootstrap targets of the adjustment and `Q` recursions.
//!
//! With a sampled successor they are the temporal-difference targets of
//! the Q-learning variant; averaged over the kernel they reproduce the
//! exact recursion.

use super::tables::ValueTables;
use crate::error::{Result, SperlError};
use crate::tic::{TabularPolicy, TicProblem};

/// Successor used to form targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NextState {
    Sampled(usize),
    /// Average over the transition kernel.
    Expected,
}

/// Entry `(t, x, u)` plus the vantage point `(tau, y)` and reward epoch
/// `m` selecting the `r` and `f` components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TargetIndex {
    pub t: usize,
    pub x: usize,
    pub u: usize,
    pub tau: usize,
    pub m: usize,
    pub y: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpTargets {
    pub r: f64,
    pub f: f64,
    pub g: f64,
    pub q: f64,
}

pub fn dp_targets(
    problem: &TicProblem,
    tables: &ValueTables,
    policy: &TabularPolicy,
    index: TargetIndex,
    next: NextState,
) -> Result<DpTargets> {
    let TargetIndex { t, x, u, tau, m, y } = index;
    problem.check_pair(t, x, u)?;
    if m < tau {
        return Err(SperlError::Range(format!(
            "reward epoch {m} precedes vantage epoch {tau}"
        )));
    }
    if !tables.fits(problem) {
        return Err(SperlError::Dependency(
            "tables do not match the problem".into(),
        ));
    }
    tables.slice(t).check_index(x, u, tau, m, y)?;
    if !policy.is_full() || policy.end() != problem.horizon() {
        return Err(SperlError::Structure(
            "targets need a policy over the full horizon".into(),
        ));
    }
    let pi_next = (t + 1 < problem.horizon()).then(|| policy.row(t + 1));
    let at = |xn: usize| DpTargets {
        r: target_r(problem, tables, pi_next, t, x, u, tau, m, y, xn),
        f: target_f(problem, tables, pi_next, t, tau, y, xn),
        g: target_g(problem, tables, pi_next, t, xn),
        q: target_q(problem, tables, pi_next, t, x, u, xn),
    };
    match next {
        NextState::Sampled(xn) => {
            if xn >= problem.n_states(t + 1) {
                return Err(SperlError::Range(format!(
                    "successor {xn} outside epoch {}",
                    t + 1
                )));
            }
            Ok(at(xn))
        }
        NextState::Expected => {
            let probs = problem.transition(t, x, u)?;
            let mut acc = DpTargets {
                r: 0.0,
                f: 0.0,
                g: 0.0,
                q: 0.0,
            };
            for (xn, &p) in probs.iter().enumerate().filter(|(_, p)| **p > 0.0) {
                let v = at(xn);
                acc.r += p * v.r;
                acc.f += p * v.f;
                acc.g += p * v.g;
                acc.q += p * v.q;
            }
            Ok(acc)
        }
    }
}

/// Target for `r(t, x, u; tau, m, y)`.
#[allow(clippy::too_many_arguments)]
pub fn target_r(
    problem: &TicProblem,
    tables: &ValueTables,
    pi_next: Option<&[usize]>,
    t: usize,
    x: usize,
    u: usize,
    tau: usize,
    m: usize,
    y: usize,
    x_next: usize,
) -> f64 {
    if m == t {
        problem.intermediate(tau, t, y, x, u)
    } else {
        let pi = pi_next.expect("reward epochs after t imply a later decision epoch");
        tables.slice(t + 1).r(x_next, pi[x_next], tau, m, y)
    }
}

/// Target for `f(t, x, u; tau, y)`.
pub fn target_f(
    problem: &TicProblem,
    tables: &ValueTables,
    pi_next: Option<&[usize]>,
    t: usize,
    tau: usize,
    y: usize,
    x_next: usize,
) -> f64 {
    match pi_next {
        None => problem.terminal(tau, y, x_next),
        Some(pi) => tables.slice(t + 1).f(x_next, pi[x_next], tau, y),
    }
}

/// Target for `g(t, x, u)`.
pub fn target_g(
    problem: &TicProblem,
    tables: &ValueTables,
    pi_next: Option<&[usize]>,
    t: usize,
    x_next: usize,
) -> f64 {
    match pi_next {
        None => problem.state_value(problem.horizon(), x_next),
        Some(pi) => tables.slice(t + 1).g(x_next, pi[x_next]),
    }
}

/// Target for `Q(t, x, u)`; reads the epoch-`t` adjustments in `tables`.
pub fn target_q(
    problem: &TicProblem,
    tables: &ValueTables,
    pi_next: Option<&[usize]>,
    t: usize,
    x: usize,
    u: usize,
    x_next: usize,
) -> f64 {
    let cur = tables.slice(t);
    let own = cur.r(x, u, t, t, x);
    match pi_next {
        None => own + cur.f(x, u, t, x) + problem.mean_term(t, x, cur.g(x, u)),
        Some(pi) => {
            let next = tables.slice(t + 1);
            let un = pi[x_next];
            let reward_shift: f64 = (t + 1..problem.horizon())
                .map(|m| next.r(x_next, un, t + 1, m, x_next) - cur.r(x, u, t, m, x))
                .sum();
            let terminal_shift = next.f(x_next, un, t + 1, x_next) - cur.f(x, u, t, x);
            let mean_shift = problem.mean_term(t + 1, x_next, next.g(x_next, un))
                - problem.mean_term(t, x, cur.g(x, u));
            own + next.q(x_next, un) - reward_shift - terminal_shift - mean_shift
        }
    }
}
