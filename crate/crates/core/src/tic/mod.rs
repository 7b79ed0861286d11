//! Problem descriptions, policies and simulation.

mod env;
mod policy;
mod problem;
mod rewards;
mod rollout;
mod space;

pub use env::TicEnvironment;
pub use policy::{AffineInState, ParametricPolicy, PolicyRule, StateInvariant, TabularPolicy};
pub use problem::{
    sample_index, Kernel, ProblemDocument, TicProblem, TransitionModel, TransitionSampler,
};
pub use rewards::{MeanTerm, RewardTransform, TicRewards};
pub use rollout::{rollout, rollout_continuous, ContinuousTrajectory, Exploration, Trajectory};
pub use space::{FiniteSpace, Space, TimeSet};
