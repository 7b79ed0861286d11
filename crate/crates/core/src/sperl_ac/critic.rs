use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::linreg::{dot, ols_fit, RegressionError, RegressionProblem};

/// Function class for one critic: linear in its weights over a fixed
/// feature map of `(x, u, y)`.
pub trait CriticFamily: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn features(&self, x: f64, u: f64, y: f64) -> Vec<f64>;

    fn evaluate(&self, w: &[f64], x: f64, u: f64, y: f64) -> f64 {
        dot(w, &self.features(x, u, y))
    }

    /// Partial derivative of [`CriticFamily::evaluate`] in the action.
    fn grad_u(&self, w: &[f64], x: f64, u: f64, y: f64) -> f64;

    /// Least-squares weights for targets over this family's features.
    fn fit(&self, problem: &RegressionProblem) -> Result<Vec<f64>, RegressionError> {
        ols_fit(problem).map(|f| f.weights)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    One,
    X,
    Y,
    U,
    /// `u^k`.
    UPow(i32),
    XU,
    XY,
    UY,
}

impl Term {
    fn value(self, x: f64, u: f64, y: f64) -> f64 {
        match self {
            Term::One => 1.0,
            Term::X => x,
            Term::Y => y,
            Term::U => u,
            Term::UPow(k) => u.powi(k),
            Term::XU => x * u,
            Term::XY => x * y,
            Term::UY => u * y,
        }
    }

    fn d_u(self, x: f64, u: f64, y: f64) -> f64 {
        match self {
            Term::U => 1.0,
            Term::UPow(0) => 0.0,
            Term::UPow(k) => f64::from(k) * u.powi(k - 1),
            Term::XU => x,
            Term::UY => y,
            Term::One | Term::X | Term::Y | Term::XY => 0.0,
        }
    }
}

/// Critic over a list of monomial terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearCritic {
    terms: Vec<Term>,
}

impl LinearCritic {
    pub fn new(terms: Vec<Term>) -> Self {
        Self { terms }
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }
}

impl CriticFamily for LinearCritic {
    fn dim(&self) -> usize {
        self.terms.len()
    }

    fn features(&self, x: f64, u: f64, y: f64) -> Vec<f64> {
        self.terms.iter().map(|t| t.value(x, u, y)).collect()
    }

    fn grad_u(&self, w: &[f64], x: f64, u: f64, y: f64) -> f64 {
        self.terms
            .iter()
            .zip(w)
            .map(|(t, wi)| wi * t.d_u(x, u, y))
            .sum()
    }
}

/// How the vantage-point adjustments enter the `Q` target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjustmentMode {
    /// Learn `r` and `f` critics for every vantage point.
    Full,
    /// Rewards do not depend on `(tau, y)`: skip the `r` and `f` critics,
    /// use the reward functionals directly and drop their shift terms.
    VantageFree,
}

#[derive(Debug, Clone)]
pub struct CriticSet {
    pub r: Arc<dyn CriticFamily>,
    pub f: Arc<dyn CriticFamily>,
    pub g: Arc<dyn CriticFamily>,
    pub q: Arc<dyn CriticFamily>,
    pub mode: AdjustmentMode,
}

/// Weights of every critic: `q[t]`, `g[t]`, `f[t][tau]`, `r[t][tau][m - t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticWeights {
    pub q: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    pub f: Vec<Vec<Vec<f64>>>,
    pub r: Vec<Vec<Vec<Vec<f64>>>>,
}

impl CriticWeights {
    pub fn zeros(horizon: usize, critics: &CriticSet) -> Self {
        let full = critics.mode == AdjustmentMode::Full;
        Self {
            q: vec![vec![0.0; critics.q.dim()]; horizon],
            g: vec![vec![0.0; critics.g.dim()]; horizon],
            f: (0..horizon)
                .map(|t| {
                    if full {
                        vec![vec![0.0; critics.f.dim()]; t + 1]
                    } else {
                        Vec::new()
                    }
                })
                .collect(),
            r: (0..horizon)
                .map(|t| {
                    if full {
                        vec![vec![vec![0.0; critics.r.dim()]; horizon - t]; t + 1]
                    } else {
                        Vec::new()
                    }
                })
                .collect(),
        }
    }
}
