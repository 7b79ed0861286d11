use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::critic::{
    actor_step, boundary_critic_fit, ground_truth, parametric_recursion, transform_to_unit_state,
    GroundTruth, MvCriticWeights,
};
use super::market::{MarketParams, MvEnvironment};
use crate::error::{Result, SperlError};
use crate::linreg::AlsOptions;
use crate::rng::{RngStreams, SimRng};
use crate::sperl_ac::{
    replay_sample, update_g, update_q, AdjustmentMode, CriticFamily, CriticSet, CriticWeights,
    LinearCritic, Relaxation, ReplayBuffer, TauFilter, Term, UpdateContext, UpdateOutcome,
};
use crate::tic::{rollout_continuous, Exploration, ParametricPolicy, StateInvariant};

/// How critics before the last epoch are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticPath {
    /// Propagate the last-epoch fit through the closed-form recursion.
    Parametric,
    /// Regress each epoch on its own sampled targets.
    ModelFree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MvTrainConfig {
    pub market: MarketParams,
    pub iterations: usize,
    pub batch_size: usize,
    /// Half-width of the uniform exploration band around the actor.
    pub exploration_radius: f64,
    pub kappa: f64,
    pub actor_step: f64,
    pub relaxation: Relaxation,
    pub critic_path: CriticPath,
    /// Epochs written to the critic and actor logs; defaults to first,
    /// middle and last.
    #[serde(default)]
    pub log_epochs: Option<Vec<usize>>,
    /// Evaluation episodes per aggregated window.
    pub window: usize,
    #[serde(default)]
    pub initial_action: f64,
    pub seed: u64,
}

impl MvTrainConfig {
    pub fn paper(mu: f64) -> Self {
        Self {
            market: MarketParams::paper(mu),
            iterations: 5000,
            batch_size: 5,
            exploration_radius: 1.5,
            kappa: 1.0,
            actor_step: 2.0,
            relaxation: Relaxation::Ema,
            critic_path: CriticPath::Parametric,
            log_epochs: None,
            window: 50,
            initial_action: 0.0,
            seed: 0,
        }
    }

    /// 20 periods and 500 iterations with a larger actor step so the
    /// shorter run still settles.
    pub fn desk(mu: f64) -> Self {
        Self {
            market: MarketParams::desk(mu),
            iterations: 500,
            actor_step: 20.0,
            ..Self::paper(mu)
        }
    }

    pub fn logged_epochs(&self) -> Vec<usize> {
        self.log_epochs.clone().unwrap_or_else(|| {
            let last = self.market.horizon - 1;
            let mut epochs = vec![0, last / 2, last];
            epochs.dedup();
            epochs
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        if self.batch_size == 0 || self.window == 0 {
            return Err(SperlError::Config(
                "batch size and window must be positive".into(),
            ));
        }
        if !(self.exploration_radius >= 0.0 && self.kappa >= 0.0 && self.actor_step.is_finite()) {
            return Err(SperlError::Config(
                "exploration radius and kappa must be non-negative".into(),
            ));
        }
        if let Some(&t) = self
            .logged_epochs()
            .iter()
            .find(|&&t| t >= self.market.horizon)
        {
            return Err(SperlError::Config(format!(
                "logged epoch {t} outside the horizon"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WealthWindow {
    pub window: usize,
    pub mean: f64,
    pub stdev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticLogRow {
    pub iteration: usize,
    pub t: usize,
    pub w2_g: f64,
    pub w2_q: f64,
    pub w3_q: f64,
    pub true_w2_g: f64,
    pub true_w2_q: f64,
    pub true_w3_q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ActorLogRow {
    pub iteration: usize,
    pub t: usize,
    pub theta: f64,
    pub true_action: f64,
}

#[derive(Debug, Clone)]
pub struct MvTrainOutcome {
    pub actor: Vec<f64>,
    pub weights: MvCriticWeights,
    pub truth: GroundTruth,
    /// Terminal wealth of the greedy evaluation episode of each iteration.
    pub evaluations: Vec<f64>,
    pub windows: Vec<WealthWindow>,
    pub critic_log: Vec<CriticLogRow>,
    pub actor_log: Vec<ActorLogRow>,
    pub skipped: Vec<(usize, String)>,
}

fn mean_and_stdev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn policy(thetas: &[f64]) -> Result<ParametricPolicy> {
    ParametricPolicy::new(
        Arc::new(StateInvariant),
        thetas.iter().map(|&th| vec![th]).collect(),
    )
}

fn greedy_terminal(env: &MvEnvironment, actor: &ParametricPolicy, rng: &mut SimRng) -> Result<f64> {
    // Greedy rollouts draw nothing from the exploration stream.
    let mut unused = RngStreams::new(0).stream("unused");
    let tr = rollout_continuous(
        env,
        actor,
        env.params.initial_wealth,
        Exploration::Greedy,
        rng,
        &mut unused,
    )?;
    Ok(tr.terminal_state())
}

/// Sample mean and standard deviation of terminal wealth over fresh
/// greedy episodes of a state-invariant actor.
pub fn evaluate_policy(
    params: &MarketParams,
    actor: &[f64],
    episodes: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let env = MvEnvironment::new(*params)?;
    let pi = policy(actor)?;
    let mut rng = RngStreams::new(seed).stream("eval");
    let terminals = (0..episodes)
        .map(|_| greedy_terminal(&env, &pi, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_and_stdev(&terminals))
}

fn model_free_critics() -> CriticSet {
    let q: Arc<dyn CriticFamily> = Arc::new(LinearCritic::new(vec![
        Term::UPow(2),
        Term::U,
        Term::X,
        Term::One,
    ]));
    let g: Arc<dyn CriticFamily> = Arc::new(LinearCritic::new(vec![Term::U, Term::X, Term::One]));
    CriticSet {
        r: g.clone(),
        f: g.clone(),
        g,
        q,
        mode: AdjustmentMode::VantageFree,
    }
}

fn to_generic(weights: &MvCriticWeights, critics: &CriticSet) -> CriticWeights {
    let mut generic = CriticWeights::zeros(weights.horizon(), critics);
    generic.q = weights.q.iter().map(|w| w.to_vec()).collect();
    generic.g = weights.g.iter().map(|w| w.to_vec()).collect();
    generic
}

/// Actor-critic training on the market: exploratory batches, a
/// last-epoch critic fit on unit-state transitions pooled over all
/// periods, earlier critics by recursion or regression, then one actor
/// step per epoch, latest epoch first.
pub fn mv_train(config: &MvTrainConfig) -> Result<MvTrainOutcome> {
    config.validate()?;
    let params = config.market;
    let env = MvEnvironment::new(params)?;
    let horizon = params.horizon;
    let last = horizon - 1;
    let truth = ground_truth(&params);
    let logged = config.logged_epochs();
    let streams = RngStreams::new(config.seed);
    let mut env_rng = streams.stream("env");
    let mut explore_rng = streams.stream("exploration");
    let mut replay_rng = streams.stream("replay");
    let mut eval_rng = streams.stream("eval");
    let exploration = Exploration::LambdaUniform {
        lambda: config.exploration_radius,
    };
    let generic_critics = model_free_critics();

    let mut buffer = ReplayBuffer::new(horizon);
    let mut weights = MvCriticWeights::initial(&params);
    let mut thetas = vec![config.initial_action; horizon];
    let mut out = MvTrainOutcome {
        actor: Vec::new(),
        weights: weights.clone(),
        truth: truth.clone(),
        evaluations: Vec::with_capacity(config.iterations),
        windows: Vec::new(),
        critic_log: Vec::with_capacity(config.iterations * logged.len()),
        actor_log: Vec::with_capacity(config.iterations * logged.len()),
        skipped: Vec::new(),
    };

    for l in 0..config.iterations {
        let actor = policy(&thetas)?;
        buffer.begin_batch();
        for _ in 0..config.batch_size {
            buffer.push(rollout_continuous(
                &env,
                &actor,
                params.initial_wealth,
                exploration,
                &mut env_rng,
                &mut explore_rng,
            )?)?;
        }
        let alpha = config.relaxation.rate(l);
        let batch: Vec<_> = replay_sample(
            &buffer,
            None,
            TauFilter::Diagonal,
            config.kappa,
            &mut replay_rng,
        )?
        .into_iter()
        .map(|e| transform_to_unit_state(params.period_rate(), e.x, e.u, e.x_next))
        .collect();
        let report =
            boundary_critic_fit(&batch, &mut weights, alpha, &params, AlsOptions::default());
        for reason in report.g_skipped.iter().chain(&report.q_skipped) {
            log::warn!("iteration {l}: last-epoch critic fit skipped: {reason}");
            out.skipped.push((l, reason.clone()));
        }

        match config.critic_path {
            CriticPath::Parametric => {
                parametric_recursion(&mut weights);
                for t in (0..horizon).rev() {
                    thetas[t] = actor_step(&weights, t, thetas[t], config.actor_step);
                }
            }
            CriticPath::ModelFree => {
                thetas[last] = actor_step(&weights, last, thetas[last], config.actor_step);
                let mut generic = to_generic(&weights, &generic_critics);
                for t in (0..last).rev() {
                    let actor = policy(&thetas)?;
                    for is_q in [false, true] {
                        let ctx = UpdateContext {
                            env: &env,
                            critics: &generic_critics,
                            weights: &generic,
                            actor: &actor,
                            buffer: &buffer,
                            kappa: config.kappa,
                        };
                        let outcome = if is_q {
                            update_q(&ctx, alpha, t, &mut replay_rng)?
                        } else {
                            update_g(&ctx, alpha, t, &mut replay_rng)?
                        };
                        match outcome {
                            UpdateOutcome::Updated(w) if is_q => generic.q[t] = w,
                            UpdateOutcome::Updated(w) => generic.g[t] = w,
                            UpdateOutcome::Skipped(reason) => out.skipped.push((l, reason)),
                        }
                    }
                    weights.q[t].copy_from_slice(&generic.q[t]);
                    weights.g[t].copy_from_slice(&generic.g[t]);
                    thetas[t] = actor_step(&weights, t, thetas[t], config.actor_step);
                }
            }
        }

        out.evaluations
            .push(greedy_terminal(&env, &policy(&thetas)?, &mut eval_rng)?);
        if out.evaluations.len().is_multiple_of(config.window) {
            let (mean, stdev) =
                mean_and_stdev(&out.evaluations[out.evaluations.len() - config.window..]);
            out.windows.push(WealthWindow {
                window: out.windows.len(),
                mean,
                stdev,
            });
        }
        let tw = &truth.weights;
        for &t in &logged {
            out.critic_log.push(CriticLogRow {
                iteration: l,
                t,
                w2_g: weights.g[t][0],
                w2_q: weights.q[t][1],
                w3_q: weights.q[t][0],
                true_w2_g: tw.g[t][0],
                true_w2_q: tw.q[t][1],
                true_w3_q: tw.q[t][0],
            });
            out.actor_log.push(ActorLogRow {
                iteration: l,
                t,
                theta: thetas[t],
                true_action: truth.actions[t],
            });
        }
    }
    out.actor = thetas;
    out.weights = weights;
    Ok(out)
}
