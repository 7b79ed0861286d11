use rand::Rng;
use serde::{Deserialize, Serialize};

use super::env::TicEnvironment;
use super::policy::{ParametricPolicy, TabularPolicy};
use super::problem::TicProblem;
use super::space::Space;
use crate::error::{Result, SperlError};
use crate::rng::SimRng;

/// Behaviour rule wrapped around a greedy policy while simulating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Exploration {
    Greedy,
    /// With probability `epsilon`, an action drawn uniformly from the
    /// whole action space.
    EpsilonGreedy {
        epsilon: f64,
    },
    /// Action drawn uniformly from the open `lambda`-ball around the
    /// policy action.
    LambdaUniform {
        lambda: f64,
    },
}

impl Exploration {
    fn validate(&self) -> Result<()> {
        match *self {
            Exploration::Greedy => Ok(()),
            Exploration::EpsilonGreedy { epsilon } if (0.0..=1.0).contains(&epsilon) => Ok(()),
            Exploration::LambdaUniform { lambda } if lambda > 0.0 && lambda.is_finite() => Ok(()),
            other => Err(SperlError::Config(format!("invalid exploration {other:?}"))),
        }
    }
}

/// One simulated episode of a finite problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `X_0..=X_T`.
    pub states: Vec<usize>,
    /// `U_0..U_{T-1}`.
    pub actions: Vec<usize>,
    /// Raw rewards `R_0..R_{T-1}` followed by the terminal one, present
    /// when the problem emits noisy rewards.
    pub rewards: Option<Vec<f64>>,
}

pub fn rollout(
    problem: &TicProblem,
    policy: &TabularPolicy,
    x0: usize,
    exploration: Exploration,
    env_rng: &mut SimRng,
    explore_rng: &mut SimRng,
) -> Result<Trajectory> {
    exploration.validate()?;
    let horizon = problem.horizon();
    if !policy.is_full() || policy.end() != horizon {
        return Err(SperlError::Structure(
            "rollout needs a policy over the full horizon".into(),
        ));
    }
    if x0 >= problem.n_states(0) {
        return Err(SperlError::Range(format!(
            "initial state {x0} out of range"
        )));
    }
    let noisy = problem.has_random_rewards();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    let mut rewards = noisy.then(|| Vec::with_capacity(horizon + 1));
    let mut x = x0;
    states.push(x);
    for t in 0..horizon {
        let greedy = policy.action(t, x);
        let u = explore_discrete(problem, t, greedy, exploration, explore_rng);
        if let Some(r) = rewards.as_mut() {
            r.push(problem.emit_reward(t, x, u, env_rng));
        }
        x = problem.sample_next(t, x, u, env_rng);
        actions.push(u);
        states.push(x);
    }
    if let Some(r) = rewards.as_mut() {
        r.push(problem.emit_terminal(x, env_rng));
    }
    Ok(Trajectory {
        states,
        actions,
        rewards,
    })
}

fn explore_discrete(
    problem: &TicProblem,
    t: usize,
    greedy: usize,
    exploration: Exploration,
    rng: &mut SimRng,
) -> usize {
    match exploration {
        Exploration::Greedy => greedy,
        Exploration::EpsilonGreedy { epsilon } => {
            if rng.random::<f64>() < epsilon {
                rng.random_range(0..problem.n_actions(t))
            } else {
                greedy
            }
        }
        Exploration::LambdaUniform { lambda } => {
            let centre = problem.action_value(t, greedy);
            let near: Vec<usize> = (0..problem.n_actions(t))
                .filter(|&u| (problem.action_value(t, u) - centre).abs() < lambda)
                .collect();
            near[rng.random_range(0..near.len())]
        }
    }
}

/// One simulated episode of a real-valued environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousTrajectory {
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
}

impl ContinuousTrajectory {
    pub fn terminal_state(&self) -> f64 {
        *self.states.last().expect("trajectories hold at least X_0")
    }
}

pub fn rollout_continuous<E: TicEnvironment + ?Sized>(
    env: &E,
    policy: &ParametricPolicy,
    x0: f64,
    exploration: Exploration,
    env_rng: &mut SimRng,
    explore_rng: &mut SimRng,
) -> Result<ContinuousTrajectory> {
    exploration.validate()?;
    let horizon = env.horizon();
    if policy.start() != 0 || policy.end() != horizon {
        return Err(SperlError::Structure(
            "rollout needs a policy over the full horizon".into(),
        ));
    }
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    let mut x = x0;
    states.push(x);
    for t in 0..horizon {
        let greedy = policy.action(t, x);
        let u = match exploration {
            Exploration::Greedy => greedy,
            Exploration::LambdaUniform { lambda } => {
                greedy + lambda * (2.0 * explore_rng.random::<f64>() - 1.0)
            }
            Exploration::EpsilonGreedy { epsilon } => {
                if explore_rng.random::<f64>() < epsilon {
                    match env.action_space(t) {
                        Space::Interval { lo, hi } => explore_rng.random_range(lo..=hi),
                        Space::Finite { points } => {
                            points.value(explore_rng.random_range(0..points.len()))
                        }
                        Space::Real => {
                            return Err(SperlError::Unsupported(
                                "epsilon-greedy exploration needs a bounded action space".into(),
                            ))
                        }
                    }
                } else {
                    greedy
                }
            }
        };
        x = env.step(t, x, u, env_rng)?;
        if !x.is_finite() {
            return Err(SperlError::Environment(format!(
                "non-finite state at epoch {}",
                t + 1
            )));
        }
        actions.push(u);
        states.push(x);
    }
    Ok(ContinuousTrajectory { states, actions })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::instances::{generate_instance, RandomInstanceSpec, RewardFamily};
    use crate::rng::RngStreams;
    use crate::tic::StateInvariant;

    #[derive(Debug)]
    struct Drift;

    impl TicEnvironment for Drift {
        fn horizon(&self) -> usize {
            4
        }
        fn step(&self, _t: usize, x: f64, u: f64, _rng: &mut SimRng) -> Result<f64> {
            Ok(x + u)
        }
        fn intermediate_reward(&self, _: usize, _: usize, _: f64, _: f64, _: f64) -> f64 {
            0.0
        }
        fn terminal_reward(&self, _: usize, _: f64, x: f64) -> f64 {
            x
        }
        fn mean_term(&self, _: usize, _: f64, _: f64) -> f64 {
            0.0
        }
    }

    #[test]
    fn zero_exploration_matches_greedy() {
        let spec = RandomInstanceSpec::new(RewardFamily::TimeConsistent);
        let p = generate_instance(&spec, 3).unwrap();
        let pi = TabularPolicy::from_fn(&p, |t, x| x % p.n_actions(t)).unwrap();
        let streams = RngStreams::new(5);
        let (mut e, mut x) = (streams.stream("env"), streams.stream("explore"));
        let tr = rollout(
            &p,
            &pi,
            0,
            Exploration::EpsilonGreedy { epsilon: 0.0 },
            &mut e,
            &mut x,
        )
        .unwrap();
        for t in 0..p.horizon() {
            assert_eq!(tr.actions[t], pi.action(t, tr.states[t]));
        }
        assert_eq!(tr.states.len(), p.horizon() + 1);
    }

    #[test]
    fn lambda_uniform_stays_in_band() {
        let pi = ParametricPolicy::constant(Arc::new(StateInvariant), 4, vec![0.7]).unwrap();
        let streams = RngStreams::new(9);
        let (mut e, mut x) = (streams.stream("env"), streams.stream("explore"));
        for _ in 0..500 {
            let tr = rollout_continuous(
                &Drift,
                &pi,
                1.0,
                Exploration::LambdaUniform { lambda: 1.5 },
                &mut e,
                &mut x,
            )
            .unwrap();
            assert!(tr.actions.iter().all(|u| (u - 0.7).abs() <= 1.5));
        }
    }

    #[test]
    fn unbounded_epsilon_greedy_is_rejected() {
        let pi = ParametricPolicy::constant(Arc::new(StateInvariant), 4, vec![0.0]).unwrap();
        let streams = RngStreams::new(9);
        let (mut e, mut x) = (streams.stream("env"), streams.stream("explore"));
        let err = rollout_continuous(
            &Drift,
            &pi,
            0.0,
            Exploration::EpsilonGreedy { epsilon: 1.0 },
            &mut e,
            &mut x,
        );
        assert!(matches!(err, Err(SperlError::Unsupported(_))));
    }
}
