use serde::{Deserialize, Serialize};

/// Map from a raw reward to its value seen from an earlier vantage point
/// `(tau, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardTransform {
    /// Raw rewards count the same from every vantage point.
    #[default]
    Identity,
    /// `raw / (1 + h (T - tau))`.
    Hyperbolic { h: f64 },
    /// `(gamma / y) raw`; state labels must be positive.
    StateScaled { gamma: f64 },
}

impl RewardTransform {
    pub fn apply(&self, horizon: usize, tau: usize, y: f64, raw: f64) -> f64 {
        match *self {
            RewardTransform::Identity => raw,
            RewardTransform::Hyperbolic { h } => raw / (1.0 + h * (horizon - tau) as f64),
            RewardTransform::StateScaled { gamma } => gamma / y * raw,
        }
    }
}

/// Term applied to the expected terminal state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeanTerm {
    #[default]
    Zero,
    Linear {
        coef: f64,
    },
    Quadratic {
        coef: f64,
    },
}

impl MeanTerm {
    pub fn apply(&self, z: f64) -> f64 {
        match *self {
            MeanTerm::Zero => 0.0,
            MeanTerm::Linear { coef } => coef * z,
            MeanTerm::Quadratic { coef } => coef * z * z,
        }
    }
}

/// Reward functionals of a finite problem.
///
/// Intermediate rewards are `transform(tau, y, raw[t][x][u])`, terminal
/// rewards `transform(tau, y, terminal[x_T])`, and the mean term acts on
/// the expected terminal state label. With `noise` set, simulated rewards
/// carry additive Gaussian noise of that standard deviation around the
/// tabulated raw values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TicRewards {
    raw: Vec<Vec<Vec<f64>>>,
    terminal: Vec<f64>,
    #[serde(default)]
    transform: RewardTransform,
    #[serde(default)]
    mean_term: MeanTerm,
    #[serde(default)]
    noise: Option<f64>,
}

impl TicRewards {
    /// Time-consistent rewards: identity transform and no mean term.
    pub fn new(raw: Vec<Vec<Vec<f64>>>, terminal: Vec<f64>) -> Self {
        Self {
            raw,
            terminal,
            transform: RewardTransform::Identity,
            mean_term: MeanTerm::Zero,
            noise: None,
        }
    }

    pub fn with_transform(mut self, transform: RewardTransform) -> Self {
        self.transform = transform;
        self
    }

    pub fn with_mean_term(mut self, mean_term: MeanTerm) -> Self {
        self.mean_term = mean_term;
        self
    }

    pub fn with_noise(mut self, std_dev: f64) -> Self {
        self.noise = Some(std_dev);
        self
    }

    pub fn raw(&self) -> &[Vec<Vec<f64>>] {
        &self.raw
    }

    pub fn terminal(&self) -> &[f64] {
        &self.terminal
    }

    pub fn transform(&self) -> RewardTransform {
        self.transform
    }

    pub fn mean_term(&self) -> MeanTerm {
        self.mean_term
    }

    pub fn noise(&self) -> Option<f64> {
        self.noise
    }

    pub fn is_time_consistent(&self) -> bool {
        self.transform == RewardTransform::Identity && self.mean_term == MeanTerm::Zero
    }
}
