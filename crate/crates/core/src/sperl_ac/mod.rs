//! Sample-based actor-critic for time-inconsistent problems on a real
//! state line.
//!
//! Critics for `Q` and the adjustment functions are linear in their
//! weights. Each iteration collects a batch of exploratory trajectories,
//! then walks epochs backwards: fit every critic of the epoch by least
//! squares on a minibatch of current and replayed experiences, relax the
//! weights towards the fit, and take a deterministic policy-gradient step
//! for that epoch's actor.

mod critic;
mod replay;
mod train;

pub use critic::{AdjustmentMode, CriticFamily, CriticSet, CriticWeights, LinearCritic, Term};
pub use replay::{replay_sample, Experience, ReplayBuffer, TauFilter};
pub use train::{
    ac_run, actor_direction, update_f, update_g, update_q, update_r, AcConfig, AcOutcome,
    ActorAggregate, CallRecord, IterationRecord, Relaxation, UpdateContext, UpdateOutcome,
};

#[cfg(test)]
mod tests;
