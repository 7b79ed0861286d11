//! Dynamic mean-variance portfolio selection.
//!
//! Wealth moves by `X' = (1 + r) X + u (Y - r)` with Gaussian asset returns
//! `Y`. The objective `E[X_T] - (gamma/2) Var[X_T]` is not time consistent
//! because of the squared expectation inside the variance. Critics are
//! quadratic in the allocation and linear in wealth, and the actor holds
//! one allocation per epoch regardless of wealth, since the equilibrium
//! allocation does not depend on it.

mod critic;
mod market;
mod train;

pub use critic::{
    actor_step, boundary_critic_fit, ground_truth, parametric_recursion, recursion_step,
    transform_to_unit_state, BoundaryReport, GroundTruth, MvCriticWeights, UnitExperience,
};
pub use market::{market_step, MarketParams, MvEnvironment};
pub use train::{
    evaluate_policy, mv_train, ActorLogRow, CriticLogRow, CriticPath, MvTrainConfig,
    MvTrainOutcome, WealthWindow,
};
