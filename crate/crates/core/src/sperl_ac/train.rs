use serde::{Deserialize, Serialize};

use super::critic::{AdjustmentMode, CriticFamily, CriticSet, CriticWeights};
use super::replay::{replay_sample, Experience, ReplayBuffer, TauFilter};
use crate::error::{Result, SperlError};
use crate::linreg::{ema_rate, relax, RegressionProblem};
use crate::rng::{RngStreams, SimRng};
use crate::tic::{rollout_continuous, Exploration, ParametricPolicy, TicEnvironment};

/// Step size for relaxing critic weights towards a fresh fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Relaxation {
    Constant {
        alpha: f64,
    },
    /// `min(1, 2 / (l + 1))` at iteration `l`.
    Ema,
}

impl Relaxation {
    pub fn rate(&self, iteration: usize) -> f64 {
        match *self {
            Relaxation::Constant { alpha } => alpha,
            Relaxation::Ema => ema_rate(iteration),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorAggregate {
    Sum,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub relaxation: Relaxation,
    pub actor_step: f64,
    pub aggregate: ActorAggregate,
    pub exploration: Exploration,
    /// Past experiences replayed per current one.
    pub kappa: f64,
    pub initial_state: f64,
    pub record_calls: bool,
    pub seed: u64,
}

impl AcConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(SperlError::Config("batch size must be positive".into()));
        }
        if !(self.actor_step.is_finite() && self.kappa >= 0.0) {
            return Err(SperlError::Config(
                "actor step must be finite and kappa non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// One step of the backward pass, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CallRecord {
    R { t: usize, tau: usize, m: usize },
    F { t: usize, tau: usize },
    G { t: usize },
    Q { t: usize },
    Actor { t: usize },
}

impl CallRecord {
    pub fn epoch(&self) -> usize {
        match *self {
            CallRecord::R { t, .. }
            | CallRecord::F { t, .. }
            | CallRecord::G { t }
            | CallRecord::Q { t }
            | CallRecord::Actor { t } => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum UpdateOutcome {
    Updated(Vec<f64>),
    /// Empty minibatch or failed fit; weights stay as they were.
    Skipped(String),
}

/// Read-only state shared by the critic and actor updates of one epoch.
pub struct UpdateContext<'a, E: ?Sized> {
    pub env: &'a E,
    pub critics: &'a CriticSet,
    pub weights: &'a CriticWeights,
    pub actor: &'a ParametricPolicy,
    pub buffer: &'a ReplayBuffer,
    pub kappa: f64,
}

impl<E: TicEnvironment + ?Sized> UpdateContext<'_, E> {
    fn last(&self) -> usize {
        self.env.horizon() - 1
    }

    fn fit(
        &self,
        family: &dyn CriticFamily,
        old: &[f64],
        batch: &[Experience],
        alpha: f64,
        target: impl Fn(&Experience) -> f64,
        vantage: impl Fn(&Experience) -> f64,
    ) -> UpdateOutcome {
        if batch.is_empty() {
            return UpdateOutcome::Skipped("empty minibatch".into());
        }
        let targets = batch.iter().map(&target).collect();
        let features = batch
            .iter()
            .map(|e| family.features(e.x, e.u, vantage(e)))
            .collect();
        let fitted = RegressionProblem::new(targets, features, false).and_then(|p| family.fit(&p));
        match fitted {
            Ok(w) => UpdateOutcome::Updated(relax(old, &w, alpha)),
            Err(e) => UpdateOutcome::Skipped(e.to_string()),
        }
    }

    fn g_hat(&self, t: usize, x: f64, u: f64) -> f64 {
        self.critics.g.evaluate(&self.weights.g[t], x, u, x)
    }

    fn q_target(&self, e: &Experience) -> f64 {
        let t = e.t;
        let w = self.weights;
        let c = self.critics;
        let vantage_free = c.mode == AdjustmentMode::VantageFree;
        let own = self.env.intermediate_reward(t, t, e.x, e.x, e.u);
        let mean_now = self.env.mean_term(t, e.x, self.g_hat(t, e.x, e.u));
        if t == self.last() {
            let terminal = if vantage_free {
                self.env.terminal_reward(t, e.x, e.x_next)
            } else {
                c.f.evaluate(&w.f[t][t], e.x, e.u, e.x)
            };
            return own + terminal + mean_now;
        }
        let (xn, un) = (e.x_next, self.actor.action(t + 1, e.x_next));
        let mut target = own + c.q.evaluate(&w.q[t + 1], xn, un, xn);
        target -= self.env.mean_term(t + 1, xn, self.g_hat(t + 1, xn, un)) - mean_now;
        if !vantage_free {
            for m in t + 1..self.env.horizon() {
                target -= c.r.evaluate(&w.r[t + 1][t + 1][m - t - 1], xn, un, xn)
                    - c.r.evaluate(&w.r[t][t][m - t], e.x, e.u, e.x);
            }
            target -= c.f.evaluate(&w.f[t + 1][t + 1], xn, un, xn)
                - c.f.evaluate(&w.f[t][t], e.x, e.u, e.x);
        }
        target
    }
}

pub fn update_r<E: TicEnvironment + ?Sized>(
    ctx: &UpdateContext<'_, E>,
    alpha: f64,
    t: usize,
    tau: usize,
    m: usize,
    rng: &mut SimRng,
) -> Result<UpdateOutcome> {
    if tau > t || m < t || m >= ctx.env.horizon() {
        return Err(SperlError::Range(format!(
            "no r critic for (t={t}, tau={tau}, m={m})"
        )));
    }
    let batch = replay_sample(ctx.buffer, Some(t), TauFilter::Exact(tau), ctx.kappa, rng)?;
    let family = ctx.critics.r.as_ref();
    let target = |e: &Experience| {
        if m == t {
            ctx.env.intermediate_reward(tau, t, e.y, e.x, e.u)
        } else {
            let un = ctx.actor.action(t + 1, e.x_next);
            family.evaluate(&ctx.weights.r[t + 1][tau][m - t - 1], e.x_next, un, e.y)
        }
    };
    let old = &ctx.weights.r[t][tau][m - t];
    Ok(ctx.fit(family, old, &batch, alpha, target, |e| e.y))
}

pub fn update_f<E: TicEnvironment + ?Sized>(
    ctx: &UpdateContext<'_, E>,
    alpha: f64,
    t: usize,
    tau: usize,
    rng: &mut SimRng,
) -> Result<UpdateOutcome> {
    if tau > t {
        return Err(SperlError::Range(format!(
            "no f critic for (t={t}, tau={tau})"
        )));
    }
    let batch = replay_sample(ctx.buffer, Some(t), TauFilter::Exact(tau), ctx.kappa, rng)?;
    let family = ctx.critics.f.as_ref();
    let last = ctx.last();
    let target = |e: &Experience| {
        if t == last {
            ctx.env.terminal_reward(tau, e.y, e.x_next)
        } else {
            let un = ctx.actor.action(t + 1, e.x_next);
            family.evaluate(&ctx.weights.f[t + 1][tau], e.x_next, un, e.y)
        }
    };
    Ok(
        ctx.fit(family, &ctx.weights.f[t][tau], &batch, alpha, target, |e| {
            e.y
        }),
    )
}

pub fn update_g<E: TicEnvironment + ?Sized>(
    ctx: &UpdateContext<'_, E>,
    alpha: f64,
    t: usize,
    rng: &mut SimRng,
) -> Result<UpdateOutcome> {
    let batch = replay_sample(ctx.buffer, Some(t), TauFilter::Diagonal, ctx.kappa, rng)?;
    let last = ctx.last();
    let target = |e: &Experience| {
        if t == last {
            e.x_next
        } else {
            ctx.g_hat(t + 1, e.x_next, ctx.actor.action(t + 1, e.x_next))
        }
    };
    Ok(ctx.fit(
        ctx.critics.g.as_ref(),
        &ctx.weights.g[t],
        &batch,
        alpha,
        target,
        |e| e.x,
    ))
}

pub fn update_q<E: TicEnvironment + ?Sized>(
    ctx: &UpdateContext<'_, E>,
    alpha: f64,
    t: usize,
    rng: &mut SimRng,
) -> Result<UpdateOutcome> {
    let batch = replay_sample(ctx.buffer, Some(t), TauFilter::Diagonal, ctx.kappa, rng)?;
    Ok(ctx.fit(
        ctx.critics.q.as_ref(),
        &ctx.weights.q[t],
        &batch,
        alpha,
        |e| ctx.q_target(e),
        |e| e.x,
    ))
}

/// Policy-gradient direction for epoch `t`:
/// `grad_theta pi(x) * dQ/du(x, pi(x))` aggregated over a minibatch.
pub fn actor_direction<E: TicEnvironment + ?Sized>(
    ctx: &UpdateContext<'_, E>,
    t: usize,
    aggregate: ActorAggregate,
    rng: &mut SimRng,
) -> Result<Option<Vec<f64>>> {
    let batch = replay_sample(ctx.buffer, Some(t), TauFilter::Diagonal, ctx.kappa, rng)?;
    if batch.is_empty() {
        return Ok(None);
    }
    let mut direction = vec![0.0; ctx.actor.rule().dim()];
    for e in &batch {
        let u = ctx.actor.action(t, e.x);
        let slope = ctx.critics.q.grad_u(&ctx.weights.q[t], e.x, u, e.x);
        for (d, g) in direction.iter_mut().zip(ctx.actor.grad_theta(t, e.x)) {
            *d += g * slope;
        }
    }
    if aggregate == ActorAggregate::Mean {
        let n = batch.len() as f64;
        direction.iter_mut().for_each(|d| *d /= n);
    }
    Ok(Some(direction))
}

/// Weights and actor parameters after one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub thetas: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct AcOutcome {
    pub actor: ParametricPolicy,
    pub weights: CriticWeights,
    pub history: Vec<IterationRecord>,
    pub calls: Vec<CallRecord>,
    pub skipped: Vec<(usize, CallRecord, String)>,
}

/// Alternate data collection with a backward pass of critic and actor
/// updates, epoch `T-1` first.
pub fn ac_run<E: TicEnvironment + ?Sized>(
    env: &E,
    critics: &CriticSet,
    initial_weights: CriticWeights,
    initial_actor: ParametricPolicy,
    config: &AcConfig,
) -> Result<AcOutcome> {
    config.validate()?;
    let horizon = env.horizon();
    let streams = RngStreams::new(config.seed);
    let mut env_rng = streams.stream("env");
    let mut explore_rng = streams.stream("exploration");
    let mut replay_rng = streams.stream("replay");
    let mut buffer = ReplayBuffer::new(horizon);
    let mut weights = initial_weights;
    let mut actor = initial_actor;
    let mut history = Vec::with_capacity(config.iterations);
    let mut calls = Vec::new();
    let mut skipped = Vec::new();

    for l in 0..config.iterations {
        buffer.begin_batch();
        for _ in 0..config.batch_size {
            let tr = rollout_continuous(
                env,
                &actor,
                config.initial_state,
                config.exploration,
                &mut env_rng,
                &mut explore_rng,
            )?;
            buffer.push(tr)?;
        }
        let alpha = config.relaxation.rate(l);
        for t in (0..horizon).rev() {
            let mut steps = Vec::new();
            if critics.mode == AdjustmentMode::Full {
                for tau in (0..=t).rev() {
                    for m in t..horizon {
                        steps.push(CallRecord::R { t, tau, m });
                    }
                    steps.push(CallRecord::F { t, tau });
                }
            }
            steps.push(CallRecord::G { t });
            steps.push(CallRecord::Q { t });
            for call in steps {
                let ctx = UpdateContext {
                    env,
                    critics,
                    weights: &weights,
                    actor: &actor,
                    buffer: &buffer,
                    kappa: config.kappa,
                };
                let outcome = match call {
                    CallRecord::R { t, tau, m } => {
                        update_r(&ctx, alpha, t, tau, m, &mut replay_rng)?
                    }
                    CallRecord::F { t, tau } => update_f(&ctx, alpha, t, tau, &mut replay_rng)?,
                    CallRecord::G { t } => update_g(&ctx, alpha, t, &mut replay_rng)?,
                    CallRecord::Q { t } => update_q(&ctx, alpha, t, &mut replay_rng)?,
                    CallRecord::Actor { .. } => unreachable!("actor steps are handled below"),
                };
                match outcome {
                    UpdateOutcome::Updated(w) => match call {
                        CallRecord::R { t, tau, m } => weights.r[t][tau][m - t] = w,
                        CallRecord::F { t, tau } => weights.f[t][tau] = w,
                        CallRecord::G { t } => weights.g[t] = w,
                        CallRecord::Q { t } => weights.q[t] = w,
                        CallRecord::Actor { .. } => unreachable!(),
                    },
                    UpdateOutcome::Skipped(reason) => {
                        log::warn!("iteration {l}: skipped {call:?}: {reason}");
                        skipped.push((l, call, reason));
                    }
                }
                if config.record_calls {
                    calls.push(call);
                }
            }
            let ctx = UpdateContext {
                env,
                critics,
                weights: &weights,
                actor: &actor,
                buffer: &buffer,
                kappa: config.kappa,
            };
            if let Some(direction) = actor_direction(&ctx, t, config.aggregate, &mut replay_rng)? {
                let theta = actor.theta_mut(t);
                for (th, d) in theta.iter_mut().zip(direction) {
                    *th += config.actor_step * d;
                }
            }
            if config.record_calls {
                calls.push(CallRecord::Actor { t });
            }
        }
        history.push(IterationRecord {
            iteration: l,
            thetas: actor.thetas().to_vec(),
            q: weights.q.clone(),
            g: weights.g.clone(),
        });
    }
    Ok(AcOutcome {
        actor,
        weights,
        history,
        calls,
        skipped,
    })
}
