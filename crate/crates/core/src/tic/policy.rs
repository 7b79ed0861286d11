use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::problem::TicProblem;
use crate::error::{Result, SperlError};

/// Deterministic tabular policy covering epochs `start..start + len`.
///
/// A full policy starts at 0 and ends at the horizon; tails produced by
/// [`TabularPolicy::truncate`] start later.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TabularPolicy {
    start: usize,
    actions: Vec<Vec<usize>>,
}

impl TabularPolicy {
    pub fn new(problem: &TicProblem, actions: Vec<Vec<usize>>) -> Result<Self> {
        let policy = Self { start: 0, actions };
        policy.validate(problem)?;
        Ok(policy)
    }

    pub fn from_fn(
        problem: &TicProblem,
        mut choose: impl FnMut(usize, usize) -> usize,
    ) -> Result<Self> {
        let actions = (0..problem.horizon())
            .map(|t| (0..problem.n_states(t)).map(|x| choose(t, x)).collect())
            .collect();
        Self::new(problem, actions)
    }

    /// Action index 0 everywhere.
    pub fn first_action(problem: &TicProblem) -> Self {
        Self::from_fn(problem, |_, _| 0).expect("index 0 exists in every action space")
    }

    /// Tail with no epochs, i.e. the policy after the last decision.
    pub fn empty_tail(problem: &TicProblem) -> Self {
        Self {
            start: problem.horizon(),
            actions: Vec::new(),
        }
    }

    fn validate(&self, problem: &TicProblem) -> Result<()> {
        if self.end() != problem.horizon() {
            return Err(SperlError::Structure(format!(
                "policy ends at {}, horizon is {}",
                self.end(),
                problem.horizon()
            )));
        }
        for (i, row) in self.actions.iter().enumerate() {
            let t = self.start + i;
            if row.len() != problem.n_states(t) {
                return Err(SperlError::Structure(format!(
                    "policy row {t} has wrong length"
                )));
            }
            if let Some(&u) = row.iter().find(|&&u| u >= problem.n_actions(t)) {
                return Err(SperlError::Range(format!(
                    "action {u} not available at epoch {t}"
                )));
            }
        }
        Ok(())
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.start + self.actions.len()
    }

    pub fn is_full(&self) -> bool {
        self.start == 0
    }

    pub fn action(&self, t: usize, x: usize) -> usize {
        self.actions[t - self.start][x]
    }

    /// Actions of epoch `t`, indexed by state.
    pub fn row(&self, t: usize) -> &[usize] {
        &self.actions[t - self.start]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.actions
    }

    pub fn set(&mut self, t: usize, x: usize, u: usize) {
        self.actions[t - self.start][x] = u;
    }

    /// Restriction to epochs `k..`.
    pub fn truncate(&self, k: usize) -> Result<Self> {
        if k < self.start || k >= self.end() {
            return Err(SperlError::Range(format!(
                "cannot truncate policy on {}..{} at {k}",
                self.start,
                self.end()
            )));
        }
        Ok(Self {
            start: k,
            actions: self.actions[k - self.start..].to_vec(),
        })
    }

    /// Play action `u` in every state at epoch `t`, then follow `tail`.
    pub fn concat(problem: &TicProblem, u: usize, t: usize, tail: &Self) -> Result<Self> {
        if t >= problem.horizon() {
            return Err(SperlError::Range(format!("epoch {t} outside horizon")));
        }
        if u >= problem.n_actions(t) {
            return Err(SperlError::Range(format!(
                "action {u} not available at epoch {t}"
            )));
        }
        if tail.start != t + 1 || tail.end() != problem.horizon() {
            return Err(SperlError::Structure(format!(
                "tail covers {}..{}, expected {}..{}",
                tail.start,
                tail.end(),
                t + 1,
                problem.horizon()
            )));
        }
        let mut actions = Vec::with_capacity(tail.actions.len() + 1);
        actions.push(vec![u; problem.n_states(t)]);
        actions.extend(tail.actions.iter().cloned());
        Ok(Self { start: t, actions })
    }
}

/// Parametric action rule `pi(t, x; theta)`.
pub trait PolicyRule: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn action(&self, t: usize, x: f64, theta: &[f64]) -> f64;
    fn grad_theta(&self, t: usize, x: f64, theta: &[f64]) -> Vec<f64>;
}

/// `pi(x; theta) = theta[0]` regardless of state.
#[derive(Debug, Clone, Copy, Default)]
pub struct StateInvariant;

impl PolicyRule for StateInvariant {
    fn dim(&self) -> usize {
        1
    }

    fn action(&self, _t: usize, _x: f64, theta: &[f64]) -> f64 {
        theta[0]
    }

    fn grad_theta(&self, _t: usize, _x: f64, _theta: &[f64]) -> Vec<f64> {
        vec![1.0]
    }
}

/// `pi(x; theta) = theta[0] + theta[1] x`.
#[derive(Debug, Clone, Copy, Default)]
pub struct AffineInState;

impl PolicyRule for AffineInState {
    fn dim(&self) -> usize {
        2
    }

    fn action(&self, _t: usize, x: f64, theta: &[f64]) -> f64 {
        theta[0] + theta[1] * x
    }

    fn grad_theta(&self, _t: usize, x: f64, _theta: &[f64]) -> Vec<f64> {
        vec![1.0, x]
    }
}

/// Per-epoch parameter vectors evaluated through a shared rule.
#[derive(Debug, Clone)]
pub struct ParametricPolicy {
    start: usize,
    thetas: Vec<Vec<f64>>,
    rule: Arc<dyn PolicyRule>,
}

impl ParametricPolicy {
    pub fn new(rule: Arc<dyn PolicyRule>, thetas: Vec<Vec<f64>>) -> Result<Self> {
        if thetas.iter().any(|th| th.len() != rule.dim()) {
            return Err(SperlError::Structure(format!(
                "every parameter vector must have length {}",
                rule.dim()
            )));
        }
        Ok(Self {
            start: 0,
            thetas,
            rule,
        })
    }

    /// Same parameter vector at every epoch.
    pub fn constant(rule: Arc<dyn PolicyRule>, horizon: usize, theta: Vec<f64>) -> Result<Self> {
        Self::new(rule, vec![theta; horizon])
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.start + self.thetas.len()
    }

    pub fn rule(&self) -> &Arc<dyn PolicyRule> {
        &self.rule
    }

    pub fn theta(&self, t: usize) -> &[f64] {
        &self.thetas[t - self.start]
    }

    pub fn theta_mut(&mut self, t: usize) -> &mut Vec<f64> {
        &mut self.thetas[t - self.start]
    }

    pub fn thetas(&self) -> &[Vec<f64>] {
        &self.thetas
    }

    pub fn action(&self, t: usize, x: f64) -> f64 {
        self.rule.action(t, x, self.theta(t))
    }

    pub fn grad_theta(&self, t: usize, x: f64) -> Vec<f64> {
        self.rule.grad_theta(t, x, self.theta(t))
    }

    pub fn truncate(&self, k: usize) -> Result<Self> {
        if k < self.start || k >= self.end() {
            return Err(SperlError::Range(format!("cannot truncate at {k}")));
        }
        Ok(Self {
            start: k,
            thetas: self.thetas[k - self.start..].to_vec(),
            rule: Arc::clone(&self.rule),
        })
    }
}
