//! Random finite problems for fuzzing and verification suites.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SperlError};
use crate::rng::{RngStreams, SimRng};
use crate::tic::{
    FiniteSpace, MeanTerm, RewardTransform, TabularPolicy, TicProblem, TicRewards, TransitionModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardFamily {
    TimeConsistent,
    Hyperbolic {
        h: f64,
    },
    /// Rewards scaled by `gamma / y`; state labels start at 1.
    StateScaled {
        gamma: f64,
    },
    /// Terminal reward `x - gamma/2 x^2` plus `gamma/2 E[X_T]^2`.
    QuadraticMean {
        gamma: f64,
    },
}

impl RewardFamily {
    /// One representative of each family.
    pub fn standard_set() -> [RewardFamily; 4] {
        [
            RewardFamily::TimeConsistent,
            RewardFamily::Hyperbolic { h: 1.0 },
            RewardFamily::StateScaled { gamma: 1.5 },
            RewardFamily::QuadraticMean { gamma: 1.2 },
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            RewardFamily::TimeConsistent => "time_consistent",
            RewardFamily::Hyperbolic { .. } => "hyperbolic",
            RewardFamily::StateScaled { .. } => "state_scaled",
            RewardFamily::QuadraticMean { .. } => "quadratic_mean",
        }
    }
}

/// Ranges (inclusive) from which instance dimensions are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomInstanceSpec {
    pub family: RewardFamily,
    pub horizon: (usize, usize),
    pub states: (usize, usize),
    pub actions: (usize, usize),
    /// Probability that a kernel entry is forced to zero.
    pub sparsity: f64,
}

impl RandomInstanceSpec {
    pub fn new(family: RewardFamily) -> Self {
        Self {
            family,
            horizon: (1, 4),
            states: (1, 4),
            actions: (1, 3),
            sparsity: 0.3,
        }
    }

    pub fn with_horizon(mut self, lo: usize, hi: usize) -> Self {
        self.horizon = (lo, hi);
        self
    }

    pub fn with_states(mut self, lo: usize, hi: usize) -> Self {
        self.states = (lo, hi);
        self
    }

    pub fn with_actions(mut self, lo: usize, hi: usize) -> Self {
        self.actions = (lo, hi);
        self
    }

    pub fn with_sparsity(mut self, sparsity: f64) -> Self {
        self.sparsity = sparsity;
        self
    }

    fn validate(&self) -> Result<()> {
        let ranges = [self.horizon, self.states, self.actions];
        if ranges.iter().any(|&(lo, hi)| lo == 0 || lo > hi) {
            return Err(SperlError::Config(
                "dimension ranges must satisfy 1 <= lo <= hi".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.sparsity) {
            return Err(SperlError::Config("sparsity must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

pub fn generate_instance(spec: &RandomInstanceSpec, seed: u64) -> Result<TicProblem> {
    spec.validate()?;
    let mut rng = RngStreams::new(seed).stream("instance");
    let horizon = draw(&mut rng, spec.horizon);
    let label_offset = match spec.family {
        RewardFamily::StateScaled { .. } => 1.0,
        _ => 0.0,
    };
    let states = (0..=horizon)
        .map(|_| {
            let n = draw(&mut rng, spec.states);
            FiniteSpace::new((0..n).map(|i| i as f64 + label_offset).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let actions = (0..horizon)
        .map(|_| FiniteSpace::indexed(draw(&mut rng, spec.actions)))
        .collect::<Result<Vec<_>>>()?;

    let kernel = (0..horizon)
        .map(|t| {
            (0..states[t].len())
                .map(|_| {
                    (0..actions[t].len())
                        .map(|_| random_distribution(&mut rng, states[t + 1].len(), spec.sparsity))
                        .collect()
                })
                .collect()
        })
        .collect();
    let raw = (0..horizon)
        .map(|t| {
            (0..states[t].len())
                .map(|_| {
                    (0..actions[t].len())
                        .map(|_| rng.random_range(-1.0..1.0))
                        .collect()
                })
                .collect()
        })
        .collect();
    let terminal_space = &states[horizon];
    let terminal = match spec.family {
        RewardFamily::QuadraticMean { gamma } => terminal_space
            .values()
            .iter()
            .map(|&x| x - 0.5 * gamma * x * x)
            .collect(),
        _ => (0..terminal_space.len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    };
    let rewards = TicRewards::new(raw, terminal);
    let rewards = match spec.family {
        RewardFamily::TimeConsistent => rewards,
        RewardFamily::Hyperbolic { h } => rewards.with_transform(RewardTransform::Hyperbolic { h }),
        RewardFamily::StateScaled { gamma } => {
            rewards.with_transform(RewardTransform::StateScaled { gamma })
        }
        RewardFamily::QuadraticMean { gamma } => {
            rewards.with_mean_term(MeanTerm::Quadratic { coef: 0.5 * gamma })
        }
    };
    TicProblem::new(states, actions, TransitionModel::Kernel(kernel), rewards)
}

/// Generated problem with a random starting policy.
#[derive(Debug, Clone)]
pub struct SuiteInstance {
    pub index: usize,
    pub family: RewardFamily,
    pub problem: TicProblem,
    pub initial: TabularPolicy,
}

/// `count` instances with default dimension ranges, cycling through
/// [`RewardFamily::standard_set`].
pub fn instance_suite(seed: u64, count: usize) -> Result<Vec<SuiteInstance>> {
    let streams = RngStreams::new(seed);
    let families = RewardFamily::standard_set();
    (0..count)
        .map(|index| {
            let family = families[index % families.len()];
            let instance_seed = streams.substream("instance", index as u64).random::<u64>();
            let problem = generate_instance(&RandomInstanceSpec::new(family), instance_seed)?;
            let initial = random_policy(
                &problem,
                &mut streams.substream("initial-policy", index as u64),
            );
            Ok(SuiteInstance {
                index,
                family,
                problem,
                initial,
            })
        })
        .collect()
}

/// Uniformly random deterministic policy.
pub fn random_policy(problem: &TicProblem, rng: &mut SimRng) -> TabularPolicy {
    TabularPolicy::from_fn(problem, |t, _| rng.random_range(0..problem.n_actions(t)))
        .expect("drawn actions are in range")
}

fn draw(rng: &mut SimRng, (lo, hi): (usize, usize)) -> usize {
    rng.random_range(lo..=hi)
}

fn random_distribution(rng: &mut SimRng, n: usize, sparsity: f64) -> Vec<f64> {
    let mut weights: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random::<f64>() < sparsity {
                0.0
            } else {
                rng.random_range(0.05..1.0)
            }
        })
        .collect();
    if weights.iter().all(|&w| w == 0.0) {
        let keep = rng.random_range(0..n);
        weights[keep] = 1.0;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    weights
}
