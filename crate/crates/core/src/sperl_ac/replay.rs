use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SperlError};
use crate::rng::SimRng;
use crate::tic::ContinuousTrajectory;

/// Transition at epoch `t` paired with the vantage point `(tau, y)`,
/// `y = X_tau` on the same trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub t: usize,
    pub tau: usize,
    pub x: f64,
    pub u: f64,
    pub y: f64,
    pub x_next: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauFilter {
    Any,
    Exact(usize),
    /// Only `tau = t`.
    Diagonal,
}

/// Append-only store of trajectories, split into the current batch and
/// everything collected before it.
///
/// Experiences are derived on demand from stored trajectories rather than
/// materialised per `(t, tau)` pair.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    horizon: usize,
    trajectories: Vec<ContinuousTrajectory>,
    current_start: usize,
}

impl ReplayBuffer {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            trajectories: Vec::new(),
            current_start: 0,
        }
    }

    /// Move the current batch into the past.
    pub fn begin_batch(&mut self) {
        self.current_start = self.trajectories.len();
    }

    pub fn push(&mut self, trajectory: ContinuousTrajectory) -> Result<()> {
        if trajectory.states.len() != self.horizon + 1 || trajectory.actions.len() != self.horizon {
            return Err(SperlError::Structure(
                "trajectory length does not match the horizon".into(),
            ));
        }
        self.trajectories.push(trajectory);
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn trajectories(&self) -> &[ContinuousTrajectory] {
        &self.trajectories
    }

    pub fn current_len(&self) -> usize {
        self.trajectories.len() - self.current_start
    }

    pub fn past_len(&self) -> usize {
        self.current_start
    }

    pub fn experience(&self, trajectory: usize, t: usize, tau: usize) -> Experience {
        let tr = &self.trajectories[trajectory];
        Experience {
            t,
            tau,
            x: tr.states[t],
            u: tr.actions[t],
            y: tr.states[tau],
            x_next: tr.states[t + 1],
        }
    }

    /// `(t, tau)` pairs matching the filters, identical for every trajectory.
    fn pairs(&self, t_filter: Option<usize>, tau_filter: TauFilter) -> Vec<(usize, usize)> {
        let epochs = match t_filter {
            Some(t) => t..t + 1,
            None => 0..self.horizon,
        };
        epochs
            .flat_map(|t| {
                let taus = match tau_filter {
                    TauFilter::Any => 0..t + 1,
                    TauFilter::Exact(tau) if tau <= t => tau..tau + 1,
                    TauFilter::Exact(_) => 0..0,
                    TauFilter::Diagonal => t..t + 1,
                };
                taus.map(move |tau| (t, tau))
            })
            .collect()
    }
}

/// All matching experiences of the current batch plus
/// `min(floor(kappa * current), past)` matching past experiences drawn
/// without replacement.
pub fn replay_sample(
    buffer: &ReplayBuffer,
    t_filter: Option<usize>,
    tau_filter: TauFilter,
    kappa: f64,
    rng: &mut SimRng,
) -> Result<Vec<Experience>> {
    if let Some(t) = t_filter {
        if t >= buffer.horizon {
            return Err(SperlError::Range(format!("epoch {t} outside the horizon")));
        }
    }
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(SperlError::Config(format!(
            "replay ratio {kappa} must be non-negative"
        )));
    }
    let pairs = buffer.pairs(t_filter, tau_filter);
    let per = pairs.len();
    let current = buffer.current_len() * per;
    let past = buffer.past_len() * per;
    let take = ((kappa * current as f64).floor() as usize).min(past);
    let mut out = Vec::with_capacity(current + take);
    for trajectory in buffer.current_start..buffer.trajectories.len() {
        out.extend(
            pairs
                .iter()
                .map(|&(t, tau)| buffer.experience(trajectory, t, tau)),
        );
    }
    if take > 0 {
        for i in index::sample(rng, past, take) {
            let (t, tau) = pairs[i % per];
            out.push(buffer.experience(i / per, t, tau));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStreams;

    fn trajectory(seed: f64, horizon: usize) -> ContinuousTrajectory {
        ContinuousTrajectory {
            states: (0..=horizon).map(|i| seed + i as f64).collect(),
            actions: (0..horizon).map(|i| seed * 10.0 + i as f64).collect(),
        }
    }

    #[test]
    fn minibatch_holds_current_plus_replayed_past() {
        let mut buffer = ReplayBuffer::new(3);
        for i in 0..4 {
            buffer.push(trajectory(i as f64 * 100.0, 3)).unwrap();
        }
        buffer.begin_batch();
        for i in 4..6 {
            buffer.push(trajectory(i as f64 * 100.0, 3)).unwrap();
        }
        let mut rng = RngStreams::new(0).stream("replay");
        let batch = replay_sample(&buffer, Some(1), TauFilter::Diagonal, 1.0, &mut rng).unwrap();
        assert_eq!(batch.len(), 4);
        assert!(batch[..2].iter().all(|e| e.x >= 400.0));
        assert!(batch[2..]
            .iter()
            .all(|e| e.x < 400.0 && e.t == 1 && e.tau == 1));
        let all = replay_sample(&buffer, None, TauFilter::Any, 10.0, &mut rng).unwrap();
        assert_eq!(all.len(), 2 * 6 + 4 * 6);
        let exact = replay_sample(&buffer, Some(2), TauFilter::Exact(0), 0.0, &mut rng).unwrap();
        assert!(exact.iter().all(|e| e.y == e.x - 2.0));
    }

    #[test]
    fn past_samples_are_distinct() {
        let mut buffer = ReplayBuffer::new(2);
        for i in 0..50 {
            buffer.push(trajectory(i as f64 * 10.0, 2)).unwrap();
        }
        buffer.begin_batch();
        for i in 50..60 {
            buffer.push(trajectory(i as f64 * 10.0, 2)).unwrap();
        }
        let mut rng = RngStreams::new(4).stream("replay");
        let batch = replay_sample(&buffer, None, TauFilter::Any, 2.0, &mut rng).unwrap();
        let past: Vec<(u64, usize, usize)> = batch[30..]
            .iter()
            .map(|e| (e.x.to_bits(), e.t, e.tau))
            .collect();
        let mut dedup = past.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(past.len(), 60);
        assert_eq!(dedup.len(), 60);
    }

    #[test]
    fn buffer_is_append_only() {
        let mut buffer = ReplayBuffer::new(2);
        buffer.push(trajectory(1.0, 2)).unwrap();
        let before = buffer.experience(0, 1, 0);
        buffer.begin_batch();
        buffer.push(trajectory(2.0, 2)).unwrap();
        assert_eq!(buffer.experience(0, 1, 0), before);
        assert!(buffer.push(trajectory(3.0, 3)).is_err());
    }
}

#[cfg(test)]
mod properties {
    use super::*;
    use crate::rng::RngStreams;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn minibatch_size_follows_the_replay_ratio(
            past in 0usize..20,
            current in 1usize..6,
            kappa in 0.0f64..3.0,
            seed in any::<u64>(),
        ) {
            let horizon = 3;
            let mut buffer = ReplayBuffer::new(horizon);
            let traj = |s: f64| ContinuousTrajectory {
                states: (0..=horizon).map(|i| s + i as f64).collect(),
                actions: vec![0.0; horizon],
            };
            for i in 0..past {
                buffer.push(traj(i as f64)).unwrap();
            }
            buffer.begin_batch();
            for i in 0..current {
                buffer.push(traj(100.0 + i as f64)).unwrap();
            }
            let mut rng = RngStreams::new(seed).stream("replay");
            let batch = replay_sample(&buffer, None, TauFilter::Any, kappa, &mut rng).unwrap();
            let per = horizon * (horizon + 1) / 2;
            let extra = ((kappa * (current * per) as f64).floor() as usize).min(past * per);
            prop_assert_eq!(batch.len(), current * per + extra);
        }
    }
}
