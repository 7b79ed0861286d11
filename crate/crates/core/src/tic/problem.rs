use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::rewards::TicRewards;
use super::space::{FiniteSpace, TimeSet};
use crate::error::{Result, SperlError};
use crate::rng::SimRng;

/// Transition probabilities indexed `[t][x][u][x']`.
pub type Kernel = Vec<Vec<Vec<Vec<f64>>>>;

const KERNEL_SUM_TOLERANCE: f64 = 1e-12;

/// Black-box next-state sampler for problems without an explicit kernel.
pub trait TransitionSampler: Send + Sync + fmt::Debug {
    fn sample(&self, t: usize, x: usize, u: usize, rng: &mut SimRng) -> usize;
}

#[derive(Debug, Clone)]
pub enum TransitionModel {
    Kernel(Kernel),
    Sampler(Arc<dyn TransitionSampler>),
}

/// Finite time-inconsistent problem with enumerated states and actions.
#[derive(Debug, Clone)]
pub struct TicProblem {
    time: TimeSet,
    states: Vec<FiniteSpace>,
    actions: Vec<FiniteSpace>,
    transitions: TransitionModel,
    rewards: TicRewards,
    stationary: bool,
}

impl TicProblem {
    /// `states` has one space per epoch plus the terminal one; `actions`
    /// one per decision epoch.
    pub fn new(
        states: Vec<FiniteSpace>,
        actions: Vec<FiniteSpace>,
        transitions: TransitionModel,
        rewards: TicRewards,
    ) -> Result<Self> {
        let time = TimeSet::new(actions.len())?;
        let horizon = time.horizon();
        if states.len() != horizon + 1 {
            return Err(SperlError::InvalidProblem(format!(
                "expected {} state spaces, got {}",
                horizon + 1,
                states.len()
            )));
        }
        let problem = Self {
            time,
            states,
            actions,
            transitions,
            rewards,
            stationary: false,
        };
        problem.validate_kernel()?;
        problem.validate_rewards()?;
        Ok(problem)
    }

    /// Declare the dynamics time-homogeneous; checked against an explicit
    /// kernel.
    pub fn into_stationary(mut self) -> Result<Self> {
        if let TransitionModel::Kernel(kernel) = &self.transitions {
            if kernel.windows(2).any(|w| w[0] != w[1]) {
                return Err(SperlError::InvalidProblem(
                    "stationary problem has a time-varying kernel".into(),
                ));
            }
        }
        self.stationary = true;
        Ok(self)
    }

    fn validate_kernel(&self) -> Result<()> {
        let TransitionModel::Kernel(kernel) = &self.transitions else {
            return Ok(());
        };
        if kernel.len() != self.horizon() {
            return Err(SperlError::InvalidProblem(format!(
                "kernel covers {} epochs, horizon is {}",
                kernel.len(),
                self.horizon()
            )));
        }
        for (t, per_t) in kernel.iter().enumerate() {
            if per_t.len() != self.n_states(t) {
                return Err(SperlError::InvalidProblem(format!(
                    "kernel[{t}] has wrong state count"
                )));
            }
            for (x, per_x) in per_t.iter().enumerate() {
                if per_x.len() != self.n_actions(t) {
                    return Err(SperlError::InvalidProblem(format!(
                        "kernel[{t}][{x}] has wrong action count"
                    )));
                }
                for (u, row) in per_x.iter().enumerate() {
                    if row.len() != self.n_states(t + 1) {
                        return Err(SperlError::InvalidProblem(format!(
                            "kernel[{t}][{x}][{u}] has wrong successor count"
                        )));
                    }
                    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                        return Err(SperlError::InvalidProblem(format!(
                            "kernel[{t}][{x}][{u}] has a negative or non-finite entry"
                        )));
                    }
                    let total: f64 = row.iter().sum();
                    if (total - 1.0).abs() > KERNEL_SUM_TOLERANCE {
                        return Err(SperlError::InvalidProblem(format!(
                            "kernel[{t}][{x}][{u}] sums to {total}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn validate_rewards(&self) -> Result<()> {
        let horizon = self.horizon();
        let raw = self.rewards.raw();
        if raw.len() != horizon {
            return Err(SperlError::InvalidProblem(
                "reward table has wrong epoch count".into(),
            ));
        }
        for (t, per_t) in raw.iter().enumerate() {
            if per_t.len() != self.n_states(t)
                || per_t.iter().any(|row| row.len() != self.n_actions(t))
            {
                return Err(SperlError::InvalidProblem(format!(
                    "reward table at {t} has wrong shape"
                )));
            }
            if per_t.iter().flatten().any(|r| !r.is_finite()) {
                return Err(SperlError::InvalidProblem(format!(
                    "reward table at {t} is not finite"
                )));
            }
        }
        let terminal = self.rewards.terminal();
        if terminal.len() != self.n_states(horizon) || terminal.iter().any(|r| !r.is_finite()) {
            return Err(SperlError::InvalidProblem(
                "terminal rewards have wrong shape".into(),
            ));
        }
        if let super::RewardTransform::StateScaled { .. } = self.rewards.transform() {
            if self
                .states
                .iter()
                .any(|s| s.values().iter().any(|v| *v <= 0.0))
            {
                return Err(SperlError::InvalidProblem(
                    "state-scaled rewards need positive state labels".into(),
                ));
            }
        }
        if let Some(noise) = self.rewards.noise() {
            if !(noise.is_finite() && noise >= 0.0) {
                return Err(SperlError::InvalidProblem(
                    "reward noise must be non-negative".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.time.horizon()
    }

    pub fn time(&self) -> TimeSet {
        self.time
    }

    pub fn is_stationary(&self) -> bool {
        self.stationary
    }

    pub fn states(&self, t: usize) -> &FiniteSpace {
        &self.states[t]
    }

    pub fn actions(&self, t: usize) -> &FiniteSpace {
        &self.actions[t]
    }

    pub fn n_states(&self, t: usize) -> usize {
        self.states[t].len()
    }

    pub fn n_actions(&self, t: usize) -> usize {
        self.actions[t].len()
    }

    pub fn state_value(&self, t: usize, x: usize) -> f64 {
        self.states[t].value(x)
    }

    pub fn action_value(&self, t: usize, u: usize) -> f64 {
        self.actions[t].value(u)
    }

    pub fn rewards(&self) -> &TicRewards {
        &self.rewards
    }

    pub fn transitions(&self) -> &TransitionModel {
        &self.transitions
    }

    /// Explicit kernel, required by every exact sweep.
    pub fn kernel(&self) -> Result<&Kernel> {
        match &self.transitions {
            TransitionModel::Kernel(k) => Ok(k),
            TransitionModel::Sampler(_) => Err(SperlError::Unsupported(
                "exact evaluation needs an explicit transition kernel".into(),
            )),
        }
    }

    pub fn transition(&self, t: usize, x: usize, u: usize) -> Result<&[f64]> {
        self.check_pair(t, x, u)?;
        Ok(&self.kernel()?[t][x][u])
    }

    pub fn check_pair(&self, t: usize, x: usize, u: usize) -> Result<()> {
        if t >= self.horizon() {
            return Err(SperlError::Range(format!(
                "epoch {t} outside 0..{}",
                self.horizon()
            )));
        }
        if x >= self.n_states(t) || u >= self.n_actions(t) {
            return Err(SperlError::Range(format!(
                "pair ({x}, {u}) outside spaces at epoch {t}"
            )));
        }
        Ok(())
    }

    pub fn sample_next(&self, t: usize, x: usize, u: usize, rng: &mut SimRng) -> usize {
        match &self.transitions {
            TransitionModel::Kernel(k) => sample_index(&k[t][x][u], rng),
            TransitionModel::Sampler(s) => s.sample(t, x, u, rng),
        }
    }

    /// Intermediate reward of epoch `t` seen from `(tau, y)`, `y` indexing
    /// the state space at `tau`.
    pub fn intermediate(&self, tau: usize, t: usize, y: usize, x: usize, u: usize) -> f64 {
        self.transformed(tau, y, self.rewards.raw()[t][x][u])
    }

    pub fn terminal(&self, tau: usize, y: usize, x_terminal: usize) -> f64 {
        self.transformed(tau, y, self.rewards.terminal()[x_terminal])
    }

    /// Vantage-point transform applied to an observed raw reward.
    pub fn transformed(&self, tau: usize, y: usize, raw: f64) -> f64 {
        self.rewards
            .transform()
            .apply(self.horizon(), tau, self.state_value(tau, y), raw)
    }

    pub fn mean_term(&self, _tau: usize, _y: usize, z: f64) -> f64 {
        self.rewards.mean_term().apply(z)
    }

    pub fn has_random_rewards(&self) -> bool {
        self.rewards.noise().is_some()
    }

    /// Simulated raw reward of epoch `t`.
    pub fn emit_reward(&self, t: usize, x: usize, u: usize, rng: &mut SimRng) -> f64 {
        self.rewards.raw()[t][x][u] + self.noise_draw(rng)
    }

    pub fn emit_terminal(&self, x_terminal: usize, rng: &mut SimRng) -> f64 {
        self.rewards.terminal()[x_terminal] + self.noise_draw(rng)
    }

    fn noise_draw(&self, rng: &mut SimRng) -> f64 {
        match self.rewards.noise() {
            Some(sd) if sd > 0.0 => {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            }
            _ => 0.0,
        }
    }

    pub fn to_document(&self) -> Result<ProblemDocument> {
        Ok(ProblemDocument {
            states: self.states.iter().map(|s| s.values().to_vec()).collect(),
            actions: self.actions.iter().map(|s| s.values().to_vec()).collect(),
            kernel: self.kernel()?.clone(),
            stationary: self.stationary,
            rewards: self.rewards.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document()?)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ProblemDocument = serde_json::from_str(text)?;
        doc.into_problem()
    }
}

/// Serializable form of a problem with an explicit kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub kernel: Kernel,
    #[serde(default)]
    pub stationary: bool,
    pub rewards: TicRewards,
}

impl ProblemDocument {
    pub fn into_problem(self) -> Result<TicProblem> {
        let states = self
            .states
            .into_iter()
            .map(FiniteSpace::new)
            .collect::<Result<Vec<_>>>()?;
        let actions = self
            .actions
            .into_iter()
            .map(FiniteSpace::new)
            .collect::<Result<Vec<_>>>()?;
        let problem = TicProblem::new(
            states,
            actions,
            TransitionModel::Kernel(self.kernel),
            self.rewards,
        )?;
        if self.stationary {
            problem.into_stationary()
        } else {
            Ok(problem)
        }
    }
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_index(probs: &[f64], rng: &mut SimRng) -> usize {
    let mut draw: f64 = rng.random();
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            if draw < p {
                return i;
            }
            draw -= p;
            last_positive = i;
        }
    }
    last_positive
}
