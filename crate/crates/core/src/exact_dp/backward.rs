use super::tables::{Slice, Tables, ValueTables};
use crate::error::{Result, SperlError};
use crate::tic::{TabularPolicy, TicProblem};

/// Adjustment tables of a policy, tagged with the policy they were
/// computed for.
#[derive(Debug, Clone)]
pub struct AdjustmentTables {
    tables: ValueTables,
    policy: TabularPolicy,
}

impl AdjustmentTables {
    pub fn tables(&self) -> &ValueTables {
        &self.tables
    }

    pub fn policy(&self) -> &TabularPolicy {
        &self.policy
    }
}

fn check_policy(problem: &TicProblem, policy: &TabularPolicy) -> Result<()> {
    if !policy.is_full() || policy.end() != problem.horizon() {
        return Err(SperlError::Structure(
            "evaluation needs a policy over the full horizon".into(),
        ));
    }
    Ok(())
}

/// Backward sweep for `r`, `f` and `g` under `policy`.
pub fn eval_adjustments(problem: &TicProblem, policy: &TabularPolicy) -> Result<AdjustmentTables> {
    problem.kernel()?;
    check_policy(problem, policy)?;
    let horizon = problem.horizon();
    let mut slices: Vec<Slice<f64>> = Vec::with_capacity(horizon);
    for k in (0..horizon).rev() {
        let mut slice = Slice::filled(problem, k, 0.0);
        let next = slices.last();
        let pi_next = (k + 1 < horizon).then(|| policy.row(k + 1));
        fill_adjustments(problem, k, pi_next, next, &mut slice)?;
        slices.push(slice);
    }
    slices.reverse();
    Ok(AdjustmentTables {
        tables: Tables::from_slices(horizon, slices),
        policy: policy.clone(),
    })
}

/// Backward sweep for `Q` on top of previously computed adjustments.
///
/// Fails with a dependency error when `adjustments` were computed for a
/// policy that differs from `policy` after epoch 0.
pub fn eval_q(
    problem: &TicProblem,
    policy: &TabularPolicy,
    adjustments: &AdjustmentTables,
) -> Result<ValueTables> {
    check_policy(problem, policy)?;
    if !adjustments.tables.fits(problem) {
        return Err(SperlError::Dependency(
            "adjustment tables do not match the problem".into(),
        ));
    }
    if adjustments.policy.rows()[1..] != policy.rows()[1..] {
        return Err(SperlError::Dependency(
            "adjustment tables were computed for a different policy".into(),
        ));
    }
    let horizon = problem.horizon();
    let mut tables = adjustments.tables.clone();
    for k in (0..horizon).rev() {
        let pi_next = (k + 1 < horizon).then(|| policy.row(k + 1));
        let (head, tail) = tables.slices_split(k);
        fill_q(problem, k, pi_next, tail, head)?;
    }
    Ok(tables)
}

/// Full exact evaluation of `policy`.
pub fn evaluate(problem: &TicProblem, policy: &TabularPolicy) -> Result<ValueTables> {
    let adjustments = eval_adjustments(problem, policy)?;
    eval_q(problem, policy, &adjustments)
}

/// Tables of epoch `k` given the policy's actions at `k + 1` and the
/// already evaluated tables of `k + 1` (both absent at the last epoch).
pub fn evaluate_slice(
    problem: &TicProblem,
    k: usize,
    pi_next: Option<&[usize]>,
    next: Option<&Slice<f64>>,
) -> Result<Slice<f64>> {
    problem.kernel()?;
    let mut slice = Slice::filled(problem, k, 0.0);
    fill_adjustments(problem, k, pi_next, next, &mut slice)?;
    fill_q(problem, k, pi_next, next, &mut slice)?;
    Ok(slice)
}

impl<T: Copy> Tables<T> {
    fn slices_split(&mut self, k: usize) -> (&mut Slice<T>, Option<&Slice<T>>) {
        let (left, right) = self.slices_mut().split_at_mut(k + 1);
        (&mut left[k], right.first())
    }
}

fn continuation<'a>(
    problem: &TicProblem,
    k: usize,
    pi_next: Option<&'a [usize]>,
    next: Option<&'a Slice<f64>>,
) -> Result<Option<(&'a [usize], &'a Slice<f64>)>> {
    let last = k + 1 == problem.horizon();
    match (pi_next, next) {
        (None, None) if last => Ok(None),
        (Some(pi), Some(s)) if !last => {
            if pi.len() != problem.n_states(k + 1) || s.epoch() != k + 1 {
                return Err(SperlError::Structure(format!(
                    "continuation for epoch {k} is malformed"
                )));
            }
            Ok(Some((pi, s)))
        }
        _ => Err(SperlError::Structure(format!(
            "epoch {k} needs a continuation exactly when it is not the last"
        ))),
    }
}

fn fill_adjustments(
    problem: &TicProblem,
    k: usize,
    pi_next: Option<&[usize]>,
    next: Option<&Slice<f64>>,
    out: &mut Slice<f64>,
) -> Result<()> {
    let cont = continuation(problem, k, pi_next, next)?;
    let horizon = problem.horizon();
    let kernel = problem.kernel()?;
    for x in 0..problem.n_states(k) {
        for u in 0..problem.n_actions(k) {
            let probs = &kernel[k][x][u];
            let support = || probs.iter().enumerate().filter(|(_, p)| **p > 0.0);
            for tau in 0..=k {
                for y in 0..problem.n_states(tau) {
                    out.set_r(x, u, tau, k, y, problem.intermediate(tau, k, y, x, u));
                    let f = match cont {
                        None => support()
                            .map(|(xn, p)| p * problem.terminal(tau, y, xn))
                            .sum(),
                        Some((pi, s)) => {
                            for m in k + 1..horizon {
                                let r = support()
                                    .map(|(xn, p)| p * s.r(xn, pi[xn], tau, m, y))
                                    .sum();
                                out.set_r(x, u, tau, m, y, r);
                            }
                            support().map(|(xn, p)| p * s.f(xn, pi[xn], tau, y)).sum()
                        }
                    };
                    out.set_f(x, u, tau, y, f);
                }
            }
            let g = match cont {
                None => support()
                    .map(|(xn, p)| p * problem.state_value(horizon, xn))
                    .sum(),
                Some((pi, s)) => support().map(|(xn, p)| p * s.g(xn, pi[xn])).sum(),
            };
            out.set_g(x, u, g);
        }
    }
    Ok(())
}

fn fill_q(
    problem: &TicProblem,
    k: usize,
    pi_next: Option<&[usize]>,
    next: Option<&Slice<f64>>,
    out: &mut Slice<f64>,
) -> Result<()> {
    let cont = continuation(problem, k, pi_next, next)?;
    let horizon = problem.horizon();
    let kernel = problem.kernel()?;
    for x in 0..problem.n_states(k) {
        for u in 0..problem.n_actions(k) {
            let own = out.r(x, u, k, k, x);
            let q = match cont {
                None => own + out.f(x, u, k, x) + problem.mean_term(k, x, out.g(x, u)),
                Some((pi, s)) => {
                    let probs = &kernel[k][x][u];
                    let mut expected = 0.0;
                    for (xn, &p) in probs.iter().enumerate().filter(|(_, p)| **p > 0.0) {
                        let un = pi[xn];
                        let reward_shift: f64 = (k + 1..horizon)
                            .map(|m| s.r(xn, un, k + 1, m, xn) - out.r(x, u, k, m, x))
                            .sum();
                        let terminal_shift = s.f(xn, un, k + 1, xn) - out.f(x, u, k, x);
                        let mean_shift = problem.mean_term(k + 1, xn, s.g(xn, un))
                            - problem.mean_term(k, x, out.g(x, u));
                        expected += p * (s.q(xn, un) - reward_shift - terminal_shift - mean_shift);
                    }
                    own + expected
                }
            };
            out.set_q(x, u, q);
        }
    }
    Ok(())
}
