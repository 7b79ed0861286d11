//! Brute-force evaluation by enumerating every state path.

use crate::error::{Result, SperlError};
use crate::tic::{TabularPolicy, TicProblem};

pub const DEFAULT_LEAF_CAP: usize = 10_000_000;

/// Call `visit(prob, states, actions)` for every positive-probability
/// path that starts in `x` at the first epoch of `tail` and follows it.
///
/// `states` holds `X_t..=X_T` and `actions` holds `U_t..U_{T-1}`.
pub fn visit_paths(
    problem: &TicProblem,
    tail: &TabularPolicy,
    x: usize,
    cap: usize,
    mut visit: impl FnMut(f64, &[usize], &[usize]),
) -> Result<usize> {
    let t = tail.start();
    if tail.end() != problem.horizon() {
        return Err(SperlError::Structure("tail must reach the horizon".into()));
    }
    if t >= problem.horizon() {
        return Err(SperlError::Range(format!("no decision epoch at {t}")));
    }
    if x >= problem.n_states(t) {
        return Err(SperlError::Range(format!("state {x} outside epoch {t}")));
    }
    let kernel = problem.kernel()?;
    let mut states = vec![x];
    let mut actions = Vec::new();
    let mut leaves = 0usize;
    descend(
        kernel,
        tail,
        t,
        1.0,
        &mut states,
        &mut actions,
        &mut leaves,
        cap,
        &mut visit,
    )?;
    Ok(leaves)
}

#[allow(clippy::too_many_arguments)]
fn descend(
    kernel: &crate::tic::Kernel,
    tail: &TabularPolicy,
    s: usize,
    prob: f64,
    states: &mut Vec<usize>,
    actions: &mut Vec<usize>,
    leaves: &mut usize,
    cap: usize,
    visit: &mut impl FnMut(f64, &[usize], &[usize]),
) -> Result<()> {
    if s == tail.end() {
        *leaves += 1;
        if *leaves > cap {
            return Err(SperlError::Capacity { cap });
        }
        visit(prob, states, actions);
        return Ok(());
    }
    let x = *states.last().expect("path is never empty");
    let u = tail.action(s, x);
    actions.push(u);
    for (xn, &p) in kernel[s][x][u].iter().enumerate() {
        if p > 0.0 {
            states.push(xn);
            descend(
                kernel,
                tail,
                s + 1,
                prob * p,
                states,
                actions,
                leaves,
                cap,
                visit,
            )?;
            states.pop();
        }
    }
    actions.pop();
    Ok(())
}

/// Value of following `tail` from state `x` at its first epoch, judged
/// from that same epoch and state.
pub fn oracle_value(
    problem: &TicProblem,
    tail: &TabularPolicy,
    x: usize,
    cap: usize,
) -> Result<f64> {
    let t = tail.start();
    let horizon = problem.horizon();
    let mut expected_reward = 0.0;
    let mut expected_terminal_state = 0.0;
    visit_paths(problem, tail, x, cap, |prob, states, actions| {
        let mut total = problem.terminal(t, x, states[horizon - t]);
        for (i, &u) in actions.iter().enumerate() {
            total += problem.intermediate(t, t + i, x, states[i], u);
        }
        expected_reward += prob * total;
        expected_terminal_state += prob * problem.state_value(horizon, states[horizon - t]);
    })?;
    Ok(expected_reward + problem.mean_term(t, x, expected_terminal_state))
}

/// `Q(t, x, u)` of `policy` by enumeration: act `u` at `t`, then follow
/// `policy`.
pub fn oracle_q(
    problem: &TicProblem,
    policy: &TabularPolicy,
    t: usize,
    x: usize,
    u: usize,
    cap: usize,
) -> Result<f64> {
    let tail = if t + 1 < problem.horizon() {
        policy.truncate(t + 1)?
    } else {
        TabularPolicy::empty_tail(problem)
    };
    let deviated = TabularPolicy::concat(problem, u, t, &tail)?;
    oracle_value(problem, &deviated, x, cap)
}
