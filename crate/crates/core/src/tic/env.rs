use super::space::Space;
use crate::error::Result;
use crate::rng::SimRng;

/// Simulator of a time-inconsistent problem on a real state line.
///
/// Sample-based learners only touch the problem through this trait, so
/// neither the transition law nor the state space has to be enumerable.
pub trait TicEnvironment: Send + Sync {
    fn horizon(&self) -> usize;

    fn action_space(&self, _t: usize) -> Space {
        Space::Real
    }

    /// Draw `X_{t+1}` given `X_t = x`, `U_t = u`.
    fn step(&self, t: usize, x: f64, u: f64, rng: &mut SimRng) -> Result<f64>;

    /// Reward of epoch `t` seen from vantage point `(tau, y)`.
    fn intermediate_reward(&self, tau: usize, t: usize, y: f64, x: f64, u: f64) -> f64;

    fn terminal_reward(&self, tau: usize, y: f64, x_terminal: f64) -> f64;

    /// Term applied to the expected terminal state.
    fn mean_term(&self, tau: usize, y: f64, z: f64) -> f64;
}
