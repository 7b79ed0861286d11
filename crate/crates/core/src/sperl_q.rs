//! Tabular Q-learning towards a subgame-perfect equilibrium.
//!
//! Alongside `Q`, the learner keeps sample estimates of the adjustment
//! tables `r`, `f` and `g` and bootstraps all four from one-step targets.
//! Every visited `(t, X_t, U_t)` updates the adjustments for each vantage
//! point `(tau, X_tau)` on the trajectory prefix.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bpi::spe_check;
use crate::error::{Result, SperlError};
use crate::exact_dp::targets::{target_f, target_g, target_q, target_r};
use crate::exact_dp::{Tables, ValueTables};
use crate::rng::RngStreams;
use crate::tic::{rollout, Exploration, TabularPolicy, TicProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSize {
    Constant {
        alpha: f64,
    },
    /// `1 / N` where `N` counts updates of the entry.
    InverseCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopRule {
    /// Stop once the greedy policy has not moved for `check_every`
    /// episodes and agrees with the estimates at every `(t, x)`.
    WhenStable {
        check_every: usize,
    },
    FixedEpisodes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QLearnConfig {
    pub episodes: usize,
    pub epsilon: f64,
    pub step: StepSize,
    pub tie_tolerance: f64,
    pub initial_value: f64,
    pub stop: StopRule,
    /// Count equilibrium violations of the greedy policy every this many
    /// episodes (needs an explicit kernel).
    pub spe_check_every: Option<usize>,
    pub seed: u64,
}

impl Default for QLearnConfig {
    fn default() -> Self {
        Self {
            episodes: 20_000,
            epsilon: 0.1,
            step: StepSize::Constant { alpha: 0.05 },
            tie_tolerance: crate::bpi::DEFAULT_TIE_TOLERANCE,
            initial_value: 0.0,
            stop: StopRule::WhenStable { check_every: 100 },
            spe_check_every: None,
            seed: 0,
        }
    }
}

impl QLearnConfig {
    fn validate(&self) -> Result<()> {
        if let StepSize::Constant { alpha } = self.step {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(SperlError::Config(format!(
                    "step size {alpha} outside (0, 1]"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(SperlError::Config(format!(
                "epsilon {} outside [0, 1]",
                self.epsilon
            )));
        }
        if let StopRule::WhenStable { check_every: 0 } = self.stop {
            return Err(SperlError::Config(
                "stability check interval must be positive".into(),
            ));
        }
        if self.spe_check_every == Some(0) {
            return Err(SperlError::Config(
                "violation check interval must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub policy_changes: usize,
    /// Largest `|target - estimate|` of `Q` seen during the episode.
    pub max_td_error: f64,
    pub spe_violations: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct QLearnOutcome {
    pub estimates: ValueTables,
    /// Number of updates each entry received.
    pub counts: Tables<u32>,
    pub policy: TabularPolicy,
    pub log: Vec<EpisodeLog>,
    /// Whether the greedy policy is stable and consistent with the
    /// estimates when the run ends.
    pub converged: bool,
    pub episodes_run: usize,
}

impl QLearnOutcome {
    pub fn visited(&self, t: usize, x: usize, u: usize) -> bool {
        self.counts.slice(t).q(x, u) > 0
    }
}

/// Observation from one decision epoch of a trajectory.
#[derive(Debug, Clone, Copy)]
pub struct TdStep<'a> {
    pub t: usize,
    /// `X_0..=X_t`.
    pub history: &'a [usize],
    pub action: usize,
    pub next: usize,
    /// Raw reward `R_t` when the problem emits noisy rewards.
    pub reward: Option<f64>,
    /// Raw terminal reward, used at the last epoch.
    pub terminal_reward: Option<f64>,
}

/// Update `r`, `f`, `g` and then `Q` at `(t, X_t, U_t)`, in that order, so
/// that the `Q` target reads the fresh adjustments. `policy` supplies the
/// successor action. Returns `|target - estimate|` for `Q` before the
/// update.
pub fn td_update(
    problem: &TicProblem,
    estimates: &mut ValueTables,
    counts: &mut Tables<u32>,
    policy: &TabularPolicy,
    step: &TdStep<'_>,
    rule: StepSize,
) -> Result<f64> {
    let TdStep {
        t,
        history,
        action: u,
        next,
        ..
    } = *step;
    if history.len() != t + 1 {
        return Err(SperlError::Structure(format!(
            "history for epoch {t} must hold {} states",
            t + 1
        )));
    }
    problem.check_pair(t, history[t], u)?;
    if next >= problem.n_states(t + 1) {
        return Err(SperlError::Range(format!(
            "successor {next} outside epoch {}",
            t + 1
        )));
    }
    let x = history[t];
    let horizon = problem.horizon();
    let pi_next = (t + 1 < horizon).then(|| policy.row(t + 1));
    let rate = |count: &mut u32| {
        *count += 1;
        match rule {
            StepSize::Constant { alpha } => alpha,
            StepSize::InverseCount => 1.0 / f64::from(*count),
        }
    };

    for tau in (0..=t).rev() {
        let y = history[tau];
        for m in t..horizon {
            let target = match step.reward {
                Some(raw) if m == t => problem.transformed(tau, y, raw),
                _ => target_r(problem, estimates, pi_next, t, x, u, tau, m, y, next),
            };
            let mut n = counts.slice(t).r(x, u, tau, m, y);
            let alpha = rate(&mut n);
            counts.slice_mut(t).set_r(x, u, tau, m, y, n);
            let old = estimates.slice(t).r(x, u, tau, m, y);
            estimates
                .slice_mut(t)
                .set_r(x, u, tau, m, y, old + alpha * (target - old));
        }
        let target = match step.terminal_reward {
            Some(raw) if pi_next.is_none() => problem.transformed(tau, y, raw),
            _ => target_f(problem, estimates, pi_next, t, tau, y, next),
        };
        let mut n = counts.slice(t).f(x, u, tau, y);
        let alpha = rate(&mut n);
        counts.slice_mut(t).set_f(x, u, tau, y, n);
        let old = estimates.slice(t).f(x, u, tau, y);
        estimates
            .slice_mut(t)
            .set_f(x, u, tau, y, old + alpha * (target - old));
    }

    let target = target_g(problem, estimates, pi_next, t, next);
    let mut n = counts.slice(t).g(x, u);
    let alpha = rate(&mut n);
    counts.slice_mut(t).set_g(x, u, n);
    let old = estimates.slice(t).g(x, u);
    estimates
        .slice_mut(t)
        .set_g(x, u, old + alpha * (target - old));

    let target = target_q(problem, estimates, pi_next, t, x, u, next);
    let mut n = counts.slice(t).q(x, u);
    let alpha = rate(&mut n);
    counts.slice_mut(t).set_q(x, u, n);
    let old = estimates.slice(t).q(x, u);
    estimates
        .slice_mut(t)
        .set_q(x, u, old + alpha * (target - old));
    Ok((target - old).abs())
}

fn argmax_lowest(row: &[f64]) -> usize {
    (0..row.len()).fold(0, |best, u| if row[u] > row[best] { u } else { best })
}

/// Whether no action beats the policy action by more than `tolerance`
/// anywhere.
fn greedy_consistent(estimates: &ValueTables, policy: &TabularPolicy, tolerance: f64) -> bool {
    estimates.slices().iter().all(|s| {
        (0..s.n_states()).all(|x| {
            let row = s.q_row(x);
            let incumbent = row[policy.action(s.epoch(), x)];
            row.iter().all(|&q| q <= incumbent + tolerance)
        })
    })
}

pub fn q_learning_run(problem: &TicProblem, config: &QLearnConfig) -> Result<QLearnOutcome> {
    config.validate()?;
    let horizon = problem.horizon();
    let streams = RngStreams::new(config.seed);
    let mut env_rng = streams.stream("env");
    let mut explore_rng = streams.stream("exploration");
    let mut start_rng = streams.stream("start");
    let mut estimates = Tables::filled(problem, config.initial_value);
    let mut counts = Tables::filled(problem, 0u32);
    let mut policy =
        TabularPolicy::from_fn(problem, |t, x| argmax_lowest(estimates.slice(t).q_row(x)))?;
    let mut checkpoint = policy.clone();
    let exploration = Exploration::EpsilonGreedy {
        epsilon: config.epsilon,
    };
    let mut log = Vec::with_capacity(config.episodes);
    let mut stopped_stable = false;
    let mut episodes_run = 0;

    for episode in 1..=config.episodes {
        let behaviour = policy.clone();
        let x0 = start_rng.random_range(0..problem.n_states(0));
        let trajectory = rollout(
            problem,
            &behaviour,
            x0,
            exploration,
            &mut env_rng,
            &mut explore_rng,
        )?;
        let mut changes = 0;
        let mut max_td_error: f64 = 0.0;
        for t in (0..horizon).rev() {
            let step = TdStep {
                t,
                history: &trajectory.states[..=t],
                action: trajectory.actions[t],
                next: trajectory.states[t + 1],
                reward: trajectory.rewards.as_ref().map(|r| r[t]),
                terminal_reward: trajectory.rewards.as_ref().map(|r| r[horizon]),
            };
            let err = td_update(
                problem,
                &mut estimates,
                &mut counts,
                &policy,
                &step,
                config.step,
            )?;
            max_td_error = max_td_error.max(err);

            let x = trajectory.states[t];
            let row = estimates.slice(t).q_row(x);
            let incumbent = behaviour.action(t, x);
            let best = argmax_lowest(row);
            let chosen = if row[best] > row[incumbent] + config.tie_tolerance {
                best
            } else {
                incumbent
            };
            if chosen != policy.action(t, x) {
                changes += 1;
            }
            policy.set(t, x, chosen);
        }
        let spe_violations = match config.spe_check_every {
            Some(k) if episode % k == 0 && problem.kernel().is_ok() => Some(
                spe_check(problem, &policy, config.tie_tolerance)?
                    .violations
                    .len(),
            ),
            _ => None,
        };
        log.push(EpisodeLog {
            episode,
            policy_changes: changes,
            max_td_error,
            spe_violations,
        });
        episodes_run = episode;
        if let StopRule::WhenStable { check_every } = config.stop {
            if episode % check_every == 0 {
                let stable = policy == checkpoint
                    && greedy_consistent(&estimates, &policy, config.tie_tolerance);
                checkpoint = policy.clone();
                if stable {
                    stopped_stable = true;
                    break;
                }
            }
        }
    }
    let converged = stopped_stable || greedy_consistent(&estimates, &policy, config.tie_tolerance);
    Ok(QLearnOutcome {
        estimates,
        counts,
        policy,
        log,
        converged,
        episodes_run,
    })
}

/// Fixed hyperbolic-discount chain used for the Q-learning benchmark:
/// four states on a ring, two actions, three epochs, `h = 1`.
pub fn hyperbolic_chain() -> TicProblem {
    use crate::tic::{FiniteSpace, RewardTransform, TicRewards, TransitionModel};
    let states = FiniteSpace::indexed(4).expect("non-empty");
    let actions = FiniteSpace::indexed(2).expect("non-empty");
    // Action 0 drifts down the ring, action 1 up, each with probability 0.8.
    let step: Vec<Vec<Vec<f64>>> = (0..4)
        .map(|x| {
            (0..2)
                .map(|u| {
                    let mut row = vec![0.0; 4];
                    let target = if u == 0 { (x + 3) % 4 } else { (x + 1) % 4 };
                    row[target] += 0.8;
                    row[x] += 0.2;
                    row
                })
                .collect()
        })
        .collect();
    let raw = vec![
        vec![
            vec![0.2, 0.0],
            vec![0.0, 0.3],
            vec![0.5, 0.1],
            vec![0.1, 0.4],
        ],
        vec![
            vec![0.0, 0.3],
            vec![0.4, 0.0],
            vec![0.1, 0.2],
            vec![0.3, 0.0],
        ],
        vec![
            vec![0.1, 0.0],
            vec![0.0, 0.2],
            vec![0.3, 0.1],
            vec![0.2, 0.5],
        ],
    ];
    let terminal = vec![0.0, 0.2, 0.6, 0.3];
    let rewards = TicRewards::new(raw, terminal)
        .with_transform(RewardTransform::Hyperbolic { h: 1.0 })
        .with_noise(0.1);
    TicProblem::new(
        vec![states; 4],
        vec![actions; 3],
        TransitionModel::Kernel(vec![step; 3]),
        rewards,
    )
    .and_then(TicProblem::into_stationary)
    .expect("chain is well formed")
}
