use std::sync::Arc;

use super::*;
use crate::error::Result;
use crate::rng::{RngStreams, SimRng};
use crate::tic::{Exploration, ParametricPolicy, StateInvariant, TicEnvironment};
use rand_distr::{Distribution, StandardNormal};

/// `X' = x + u + 0.1 Z`, reward `-u^2 / 2` per epoch, terminal `X_T`.
/// The optimal action is 1 at every epoch.
#[derive(Debug)]
struct Quadratic {
    horizon: usize,
}

impl TicEnvironment for Quadratic {
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn step(&self, _t: usize, x: f64, u: f64, rng: &mut SimRng) -> Result<f64> {
        let z: f64 = StandardNormal.sample(rng);
        Ok(x + u + 0.1 * z)
    }
    fn intermediate_reward(&self, _tau: usize, _t: usize, _y: f64, _x: f64, u: f64) -> f64 {
        -0.5 * u * u
    }
    fn terminal_reward(&self, _tau: usize, _y: f64, x: f64) -> f64 {
        x
    }
    fn mean_term(&self, _tau: usize, _y: f64, _z: f64) -> f64 {
        0.0
    }
}

fn critics(mode: AdjustmentMode) -> CriticSet {
    let fam: Arc<dyn CriticFamily> = Arc::new(LinearCritic::new(vec![
        Term::UPow(2),
        Term::U,
        Term::X,
        Term::One,
    ]));
    CriticSet {
        r: fam.clone(),
        f: fam.clone(),
        g: fam.clone(),
        q: fam,
        mode,
    }
}

fn config(iterations: usize) -> AcConfig {
    AcConfig {
        iterations,
        batch_size: 50,
        relaxation: Relaxation::Ema,
        actor_step: 0.01,
        aggregate: ActorAggregate::Sum,
        exploration: Exploration::LambdaUniform { lambda: 1.0 },
        kappa: 1.0,
        initial_state: 0.0,
        record_calls: false,
        seed: 3,
    }
}

fn run(mode: AdjustmentMode, cfg: &AcConfig) -> AcOutcome {
    let env = Quadratic { horizon: 3 };
    let set = critics(mode);
    let weights = CriticWeights::zeros(3, &set);
    let actor = ParametricPolicy::constant(Arc::new(StateInvariant), 3, vec![0.0]).unwrap();
    ac_run(&env, &set, weights, actor, cfg).unwrap()
}

#[test]
fn actor_converges_on_a_quadratic_control_problem() {
    for mode in [AdjustmentMode::Full, AdjustmentMode::VantageFree] {
        let out = run(mode, &config(60));
        for t in 0..3 {
            let theta = out.actor.theta(t)[0];
            assert!((theta - 1.0).abs() < 0.05, "{mode:?} t={t}: {theta}");
        }
        // Q_t(x, u) = x + u - u^2/2 + (T - 1 - t)/2; X_0 is pinned so only
        // the last epoch identifies the state coefficient.
        let q0 = &out.weights.q[0];
        assert!(
            (q0[0] + 0.5).abs() < 0.05 && (q0[1] - 1.0).abs() < 0.05,
            "{q0:?}"
        );
        assert!((q0[3] - 1.0).abs() < 0.05, "{q0:?}");
        assert!((out.weights.q[2][2] - 1.0).abs() < 0.05);
        assert!(out.skipped.is_empty());
    }
}

#[test]
fn updates_run_backwards_with_the_actor_last_per_epoch() {
    let cfg = AcConfig {
        record_calls: true,
        ..config(1)
    };
    let out = run(AdjustmentMode::Full, &cfg);
    let epochs: Vec<usize> = out.calls.iter().map(CallRecord::epoch).collect();
    assert!(epochs.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(
        out.calls.first(),
        Some(&CallRecord::R { t: 2, tau: 2, m: 2 })
    );
    for t in 0..3 {
        let block: Vec<&CallRecord> = out.calls.iter().filter(|c| c.epoch() == t).collect();
        assert_eq!(block.last(), Some(&&CallRecord::Actor { t }));
        assert_eq!(block[block.len() - 2], &CallRecord::Q { t });
        let r_calls = block
            .iter()
            .filter(|c| matches!(c, CallRecord::R { .. }))
            .count();
        assert_eq!(r_calls, (t + 1) * (3 - t));
    }
    let free = run(AdjustmentMode::VantageFree, &cfg);
    assert_eq!(free.calls.len(), 9);
}

#[test]
fn empty_minibatch_is_skipped() {
    let env = Quadratic { horizon: 2 };
    let set = critics(AdjustmentMode::Full);
    let weights = CriticWeights::zeros(2, &set);
    let actor = ParametricPolicy::constant(Arc::new(StateInvariant), 2, vec![0.0]).unwrap();
    let buffer = ReplayBuffer::new(2);
    let ctx = UpdateContext {
        env: &env,
        critics: &set,
        weights: &weights,
        actor: &actor,
        buffer: &buffer,
        kappa: 1.0,
    };
    let mut rng = RngStreams::new(0).stream("replay");
    assert!(matches!(
        update_q(&ctx, 1.0, 1, &mut rng).unwrap(),
        UpdateOutcome::Skipped(_)
    ));
    assert!(actor_direction(&ctx, 0, ActorAggregate::Mean, &mut rng)
        .unwrap()
        .is_none());
    assert!(update_r(&ctx, 1.0, 0, 1, 1, &mut rng).is_err());
}

#[test]
fn runs_are_reproducible() {
    let a = run(AdjustmentMode::Full, &config(3));
    let b = run(AdjustmentMode::Full, &config(3));
    assert_eq!(a.history, b.history);
}

#[test]
fn zero_batch_is_rejected() {
    let env = Quadratic { horizon: 2 };
    let set = critics(AdjustmentMode::Full);
    let actor = ParametricPolicy::constant(Arc::new(StateInvariant), 2, vec![0.0]).unwrap();
    let cfg = AcConfig {
        batch_size: 0,
        ..config(1)
    };
    assert!(ac_run(&env, &set, CriticWeights::zeros(2, &set), actor, &cfg).is_err());
}

/// Deterministic `X' = x/2 + 2u + 1`, reward `-u^2/2`, terminal `X_T`,
/// mean term `(gamma/2) z^2`.
#[derive(Debug)]
struct Linear {
    gamma: f64,
}

impl TicEnvironment for Linear {
    fn horizon(&self) -> usize {
        1
    }
    fn step(&self, _t: usize, x: f64, u: f64, _rng: &mut SimRng) -> Result<f64> {
        Ok(0.5 * x + 2.0 * u + 1.0)
    }
    fn intermediate_reward(&self, _tau: usize, _t: usize, _y: f64, _x: f64, u: f64) -> f64 {
        -0.5 * u * u
    }
    fn terminal_reward(&self, _tau: usize, _y: f64, x: f64) -> f64 {
        x
    }
    fn mean_term(&self, _tau: usize, _y: f64, z: f64) -> f64 {
        0.5 * self.gamma * z * z
    }
}

fn linear_buffer(env: &Linear) -> ReplayBuffer {
    let mut buffer = ReplayBuffer::new(1);
    let mut rng = RngStreams::new(0).stream("env");
    for i in 0..12 {
        let (x, u) = (0.3 * i as f64, (i % 5) as f64 - 2.0);
        let next = env.step(0, x, u, &mut rng).unwrap();
        buffer
            .push(crate::tic::ContinuousTrajectory {
                states: vec![x, next],
                actions: vec![u],
            })
            .unwrap();
    }
    buffer
}

fn context<'a>(
    env: &'a Linear,
    critics: &'a CriticSet,
    weights: &'a CriticWeights,
    actor: &'a ParametricPolicy,
    buffer: &'a ReplayBuffer,
) -> UpdateContext<'a, Linear> {
    UpdateContext {
        env,
        critics,
        weights,
        actor,
        buffer,
        kappa: 0.0,
    }
}

#[test]
fn noiseless_last_epoch_fits_are_exact() {
    let env = Linear { gamma: 1.2 };
    let fam: Arc<dyn CriticFamily> = Arc::new(LinearCritic::new(vec![
        Term::UPow(2),
        Term::U,
        Term::X,
        Term::One,
        Term::XY,
    ]));
    let set = CriticSet {
        r: fam.clone(),
        f: fam.clone(),
        g: fam.clone(),
        q: fam,
        mode: AdjustmentMode::Full,
    };
    let mut weights = CriticWeights::zeros(1, &set);
    let actor = ParametricPolicy::constant(Arc::new(StateInvariant), 1, vec![0.0]).unwrap();
    let buffer = linear_buffer(&env);
    let mut rng = RngStreams::new(1).stream("replay");

    let UpdateOutcome::Updated(g) = update_g(
        &context(&env, &set, &weights, &actor, &buffer),
        1.0,
        0,
        &mut rng,
    )
    .unwrap() else {
        panic!("g fit skipped");
    };
    let expected_g = [0.0, 2.0, 0.5, 1.0, 0.0];
    assert!(
        g.iter().zip(expected_g).all(|(a, b)| (a - b).abs() < 1e-8),
        "{g:?}"
    );

    // f = u and g = x give the target -u^2/2 + u + (gamma/2) x^2.
    weights.f[0][0] = vec![0.0, 1.0, 0.0, 0.0, 0.0];
    weights.g[0] = vec![0.0, 0.0, 1.0, 0.0, 0.0];
    let UpdateOutcome::Updated(q) = update_q(
        &context(&env, &set, &weights, &actor, &buffer),
        1.0,
        0,
        &mut rng,
    )
    .unwrap() else {
        panic!("Q fit skipped");
    };
    let expected_q = [-0.5, 1.0, 0.0, 0.0, 0.6];
    assert!(
        q.iter().zip(expected_q).all(|(a, b)| (a - b).abs() < 1e-8),
        "{q:?}"
    );

    // Relaxation moves a fraction of the way.
    weights.q[0] = vec![1.0; 5];
    let UpdateOutcome::Updated(half) = update_q(
        &context(&env, &set, &weights, &actor, &buffer),
        0.5,
        0,
        &mut rng,
    )
    .unwrap() else {
        panic!("Q fit skipped");
    };
    for ((h, e), w) in half.iter().zip(expected_q).zip(&weights.q[0]) {
        assert!((h - (w + 0.5 * (e - w))).abs() < 1e-8);
    }
}

#[test]
fn zero_iterations_change_nothing() {
    let env = Quadratic { horizon: 2 };
    let set = critics(AdjustmentMode::Full);
    let mut weights = CriticWeights::zeros(2, &set);
    weights.q[1][0] = 0.7;
    let actor = ParametricPolicy::constant(Arc::new(StateInvariant), 2, vec![0.3]).unwrap();
    let out = ac_run(&env, &set, weights.clone(), actor.clone(), &config(0)).unwrap();
    assert_eq!(out.weights, weights);
    assert_eq!(out.actor.thetas(), actor.thetas());
    assert!(out.history.is_empty());
}
