//! Backward policy iteration towards a subgame-perfect equilibrium.
//!
//! Each outer iteration sweeps epochs from last to first. At epoch `k` it
//! evaluates `Q(k, ., .)` of the partially updated policy, whose tail after
//! `k` is already final for this sweep, and then improves the actions of
//! epoch `k`. An action is replaced only by one that beats it by more than
//! a tie tolerance, so replaying a sweep on its own output changes nothing.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SperlError};
use crate::exact_dp::{evaluate, evaluate_slice, Slice};
use crate::tic::{TabularPolicy, TicProblem};

pub const DEFAULT_TIE_TOLERANCE: f64 = 1e-9;

/// Supplies a candidate improvement for one `(t, x)`; the solver accepts
/// it only if it beats the incumbent by more than the tie tolerance.
pub trait ActionProposer: Send + Sync + fmt::Debug {
    fn propose(&self, t: usize, x: usize, q_row: &[f64], current: usize) -> Option<usize>;
}

/// Actions eligible around a centre action.
pub trait Neighborhood: Send + Sync + fmt::Debug {
    fn neighbors(&self, problem: &TicProblem, t: usize, center: usize, radius: f64) -> Vec<usize>;
}

/// Actions whose labels lie strictly within `radius` of the centre label.
#[derive(Debug, Clone, Copy, Default)]
pub struct LabelDistance;

impl Neighborhood for LabelDistance {
    fn neighbors(&self, problem: &TicProblem, t: usize, center: usize, radius: f64) -> Vec<usize> {
        let c = problem.action_value(t, center);
        (0..problem.n_actions(t))
            .filter(|&u| (problem.action_value(t, u) - c).abs() < radius)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub enum ActionSpec {
    FullSweepArgmax,
    LocalSweepArgmax { radius: f64 },
    Custom(Arc<dyn ActionProposer>),
}

#[derive(Debug, Clone)]
pub struct BpiConfig {
    pub spec: ActionSpec,
    pub max_iters: usize,
    pub tie_tolerance: f64,
}

impl BpiConfig {
    pub fn new(spec: ActionSpec) -> Self {
        Self {
            spec,
            max_iters: 100,
            tie_tolerance: DEFAULT_TIE_TOLERANCE,
        }
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_tie_tolerance(mut self, tolerance: f64) -> Self {
        self.tie_tolerance = tolerance;
        self
    }
}

/// `Q(k, x, pi_k(x))` for every epoch and state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyBasis {
    pub slices: Vec<Vec<f64>>,
}

impl PolicyBasis {
    pub fn of(problem: &TicProblem, policy: &TabularPolicy) -> Result<Self> {
        let tables = evaluate(problem, policy)?;
        Ok(Self {
            slices: tables
                .slices()
                .iter()
                .map(|s| {
                    (0..s.n_states())
                        .map(|x| s.q(x, policy.action(s.epoch(), x)))
                        .collect()
                })
                .collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LexOrder {
    Greater,
    Equal,
    Less,
    Incomparable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexComparison {
    pub order: LexOrder,
    /// Latest epoch whose slices differ.
    pub epoch: Option<usize>,
}

/// Compare two bases at the latest epoch where they differ.
///
/// That slice decides: elementwise dominance with one strict entry is
/// `Greater` (or `Less`), anything else is `Incomparable`.
pub fn lex_compare(a: &PolicyBasis, b: &PolicyBasis, tolerance: f64) -> Result<LexComparison> {
    let shapes_match = a.slices.len() == b.slices.len()
        && a.slices
            .iter()
            .zip(&b.slices)
            .all(|(x, y)| x.len() == y.len());
    if !shapes_match {
        return Err(SperlError::Structure("bases have different shapes".into()));
    }
    for k in (0..a.slices.len()).rev() {
        let (sa, sb) = (&a.slices[k], &b.slices[k]);
        let differs = sa.iter().zip(sb).any(|(x, y)| (x - y).abs() > tolerance);
        if !differs {
            continue;
        }
        let geq = sa.iter().zip(sb).all(|(x, y)| *x >= y - tolerance);
        let leq = sa.iter().zip(sb).all(|(x, y)| *x <= y + tolerance);
        let order = match (geq, leq) {
            (true, _) => LexOrder::Greater,
            (_, true) => LexOrder::Less,
            _ => LexOrder::Incomparable,
        };
        return Ok(LexComparison {
            order,
            epoch: Some(k),
        });
    }
    Ok(LexComparison {
        order: LexOrder::Equal,
        epoch: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSnapshot {
    pub iteration: usize,
    pub policy: TabularPolicy,
    pub basis: PolicyBasis,
    /// Pairs `(t, x)` whose action changed during this sweep.
    pub changed: Vec<(usize, usize)>,
    /// This iterate against the previous one.
    pub comparison: LexComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpiTrace {
    pub initial_policy: TabularPolicy,
    pub initial_basis: PolicyBasis,
    pub iterations: Vec<IterationSnapshot>,
}

impl BpiTrace {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }
}

#[derive(Debug, Clone)]
#[must_use]
pub struct BpiOutcome {
    pub policy: TabularPolicy,
    pub trace: BpiTrace,
    /// False when the iteration cap was hit before a sweep left the policy
    /// unchanged.
    pub terminated: bool,
}

pub fn bpi_run(
    problem: &TicProblem,
    initial: &TabularPolicy,
    config: &BpiConfig,
) -> Result<BpiOutcome> {
    problem.kernel()?;
    if !initial.is_full() || initial.end() != problem.horizon() {
        return Err(SperlError::Structure(
            "initial policy must cover the full horizon".into(),
        ));
    }
    if let ActionSpec::LocalSweepArgmax { radius } = config.spec {
        check_radius(radius)?;
    }
    let initial_basis = PolicyBasis::of(problem, initial)?;
    let mut trace = BpiTrace {
        initial_policy: initial.clone(),
        initial_basis: initial_basis.clone(),
        iterations: Vec::new(),
    };
    let mut current = initial.clone();
    let mut basis = initial_basis;
    for iteration in 1..=config.max_iters {
        let (next, next_basis, changed) = sweep(problem, &current, config)?;
        let comparison = lex_compare(&next_basis, &basis, config.tie_tolerance)?;
        let stable = changed.is_empty();
        trace.iterations.push(IterationSnapshot {
            iteration,
            policy: next.clone(),
            basis: next_basis.clone(),
            changed,
            comparison,
        });
        current = next;
        basis = next_basis;
        if stable {
            return Ok(BpiOutcome {
                policy: current,
                trace,
                terminated: true,
            });
        }
    }
    log::warn!(
        "policy iteration stopped at the cap of {} sweeps",
        config.max_iters
    );
    Ok(BpiOutcome {
        policy: current,
        trace,
        terminated: false,
    })
}

fn check_radius(radius: f64) -> Result<()> {
    if radius > 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(SperlError::Config(format!(
            "neighbourhood radius {radius} gives an empty grid"
        )))
    }
}

type Sweep = (TabularPolicy, PolicyBasis, Vec<(usize, usize)>);

fn sweep(problem: &TicProblem, start: &TabularPolicy, config: &BpiConfig) -> Result<Sweep> {
    let horizon = problem.horizon();
    let mut policy = start.clone();
    let mut basis = vec![Vec::new(); horizon];
    let mut changed = Vec::new();
    let mut next: Option<Slice<f64>> = None;
    for k in (0..horizon).rev() {
        let pi_next = (k + 1 < horizon).then(|| policy.row(k + 1).to_vec());
        let slice = evaluate_slice(problem, k, pi_next.as_deref(), next.as_ref())?;
        for x in 0..problem.n_states(k) {
            let current = policy.action(k, x);
            let row = slice.q_row(x);
            let candidate = match &config.spec {
                ActionSpec::FullSweepArgmax => {
                    improving_argmax(row, current, 0..row.len(), config.tie_tolerance)
                }
                ActionSpec::LocalSweepArgmax { radius } => {
                    let near = LabelDistance.neighbors(problem, k, current, *radius);
                    improving_argmax(row, current, near.into_iter(), config.tie_tolerance)
                }
                ActionSpec::Custom(proposer) => proposer
                    .propose(k, x, row, current)
                    .filter(|&u| u < row.len() && row[u] > row[current] + config.tie_tolerance),
            };
            if let Some(u) = candidate {
                policy.set(k, x, u);
                changed.push((k, x));
            }
        }
        basis[k] = (0..problem.n_states(k))
            .map(|x| slice.q(x, policy.action(k, x)))
            .collect();
        next = Some(slice);
    }
    Ok((policy, PolicyBasis { slices: basis }, changed))
}

/// Lowest-index action within tolerance of the best candidate that beats
/// the incumbent by more than the tolerance; `None` keeps the incumbent.
fn improving_argmax(
    row: &[f64],
    current: usize,
    candidates: impl Iterator<Item = usize> + Clone,
    tolerance: f64,
) -> Option<usize> {
    let best = candidates
        .clone()
        .map(|u| row[u])
        .max_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal))?;
    if best <= row[current] + tolerance {
        return None;
    }
    candidates
        .into_iter()
        .find(|&u| row[u] >= best - tolerance && row[u] > row[current] + tolerance)
}

/// Profitable one-step deviation found by a checker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: usize,
    pub x: usize,
    pub u: usize,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeReport {
    pub violations: Vec<Violation>,
}

impl SpeReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn witness(&self) -> Option<&Violation> {
        self.violations.first()
    }
}

/// Check that no single deviation improves `Q` by more than `tolerance`.
pub fn spe_check(
    problem: &TicProblem,
    policy: &TabularPolicy,
    tolerance: f64,
) -> Result<SpeReport> {
    deviation_check(problem, policy, tolerance, |t, _| {
        (0..problem.n_actions(t)).collect()
    })
}

/// As [`spe_check`], restricted to deviations inside the neighbourhood of
/// the policy action.
pub fn local_spe_check(
    problem: &TicProblem,
    policy: &TabularPolicy,
    radius: f64,
    grid: &dyn Neighborhood,
    tolerance: f64,
) -> Result<SpeReport> {
    check_radius(radius)?;
    let mut empty = None;
    let report = deviation_check(problem, policy, tolerance, |t, centre| {
        let near = grid.neighbors(problem, t, centre, radius);
        if near.is_empty() {
            empty = Some(t);
        }
        near
    })?;
    match empty {
        Some(t) => Err(SperlError::Config(format!(
            "empty neighbourhood at epoch {t}"
        ))),
        None => Ok(report),
    }
}

fn deviation_check(
    problem: &TicProblem,
    policy: &TabularPolicy,
    tolerance: f64,
    mut candidates: impl FnMut(usize, usize) -> Vec<usize>,
) -> Result<SpeReport> {
    let tables = evaluate(problem, policy)?;
    let mut violations = Vec::new();
    for t in 0..problem.horizon() {
        let slice = tables.slice(t);
        for x in 0..problem.n_states(t) {
            let current = policy.action(t, x);
            let incumbent = slice.q(x, current);
            for u in candidates(t, current) {
                let gain = slice.q(x, u) - incumbent;
                if gain > tolerance {
                    violations.push(Violation { t, x, u, gain });
                }
            }
        }
    }
    Ok(SpeReport { violations })
}

#[cfg(test)]
mod tests;
