use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SperlError};
use crate::rng::SimRng;
use crate::tic::TicEnvironment;

/// One risky asset and a riskless account, rebalanced every `dt` years.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    /// Annualised mean return of the risky asset.
    pub mu: f64,
    /// Annualised volatility.
    pub sigma: f64,
    pub risk_free: f64,
    /// Years per period.
    pub dt: f64,
    pub horizon: usize,
    pub risk_aversion: f64,
    pub initial_wealth: f64,
}

impl MarketParams {
    /// 100 periods of 0.01 years, 30% volatility, 2% risk-free rate.
    pub fn paper(mu: f64) -> Self {
        Self {
            mu,
            sigma: 0.3,
            risk_free: 0.02,
            dt: 0.01,
            horizon: 100,
            risk_aversion: 1.2,
            initial_wealth: 1.0,
        }
    }

    /// Same market cut to 20 periods.
    pub fn desk(mu: f64) -> Self {
        Self {
            horizon: 20,
            ..Self::paper(mu)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.mu,
            self.sigma,
            self.risk_free,
            self.dt,
            self.risk_aversion,
            self.initial_wealth,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite || self.sigma <= 0.0 || self.dt <= 0.0 || self.horizon == 0 {
            return Err(SperlError::InvalidProblem(
                "market needs finite parameters, positive volatility, step and horizon".into(),
            ));
        }
        Ok(())
    }

    /// Riskless return per period.
    pub fn period_rate(&self) -> f64 {
        self.risk_free * self.dt
    }

    pub fn growth(&self) -> f64 {
        1.0 + self.period_rate()
    }

    /// Expected excess return of one unit of risky allocation per period.
    pub fn excess_drift(&self) -> f64 {
        self.mu * self.dt - self.period_rate()
    }

    pub fn step_variance(&self) -> f64 {
        self.sigma * self.sigma * self.dt
    }
}

/// Wealth after one period with `u` held in the risky asset.
pub fn market_step(params: &MarketParams, x: f64, u: f64, rng: &mut SimRng) -> f64 {
    let normal = Normal::new(params.mu * params.dt, params.step_variance().sqrt())
        .expect("volatility is positive");
    let asset_return = normal.sample(rng);
    params.growth() * x + u * (asset_return - params.period_rate())
}

/// Mean-variance objective `E[X_T] - (gamma/2) Var[X_T]` written as a
/// terminal reward plus a term on the expected terminal wealth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvEnvironment {
    pub params: MarketParams,
}

impl MvEnvironment {
    pub fn new(params: MarketParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }
}

impl TicEnvironment for MvEnvironment {
    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn step(&self, _t: usize, x: f64, u: f64, rng: &mut SimRng) -> Result<f64> {
        if !(x.is_finite() && u.is_finite()) {
            return Err(SperlError::Environment(format!(
                "non-finite wealth {x} or allocation {u}"
            )));
        }
        Ok(market_step(&self.params, x, u, rng))
    }

    fn intermediate_reward(&self, _tau: usize, _t: usize, _y: f64, _x: f64, _u: f64) -> f64 {
        0.0
    }

    fn terminal_reward(&self, _tau: usize, _y: f64, x: f64) -> f64 {
        x - 0.5 * self.params.risk_aversion * x * x
    }

    fn mean_term(&self, _tau: usize, _y: f64, z: f64) -> f64 {
        0.5 * self.params.risk_aversion * z * z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStreams;

    #[test]
    fn riskless_allocation_rolls_over() {
        let p = MarketParams::paper(0.2);
        let mut rng = RngStreams::new(0).stream("env");
        assert_eq!(market_step(&p, 1.3, 0.0, &mut rng), 1.3 * 1.0002);
    }

    #[test]
    fn step_moments_match_the_dynamics() {
        let p = MarketParams::paper(0.2);
        let (x, u) = (1.1, 2.5);
        let n = 1_000_000;
        let mut rng = RngStreams::new(5).stream("env");
        let draws: Vec<f64> = (0..n).map(|_| market_step(&p, x, u, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let true_mean = 1.0002 * x + u * (0.002 - 0.0002);
        let true_var = u * u * 0.09 * 0.01;
        let se_mean = (true_var / n as f64).sqrt();
        // Variance of the sample variance for Gaussian data is 2 sigma^4 / (n - 1).
        let se_var = true_var * (2.0 / (n - 1) as f64).sqrt();
        assert!((mean - true_mean).abs() < 3.0 * se_mean);
        assert!((var - true_var).abs() < 3.0 * se_var);
    }

    #[test]
    fn objective_pieces_combine_to_mean_variance() {
        let env = MvEnvironment::new(MarketParams::paper(0.2)).unwrap();
        let samples = [0.8, 1.1, 1.6];
        let mean = samples.iter().sum::<f64>() / 3.0;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / 3.0;
        let split = samples
            .iter()
            .map(|&s| env.terminal_reward(0, 1.0, s))
            .sum::<f64>()
            / 3.0
            + env.mean_term(0, 1.0, mean);
        assert!((split - (mean - 0.6 * var)).abs() < 1e-12);
        assert!(MvEnvironment::new(MarketParams {
            sigma: 0.0,
            ..MarketParams::paper(0.2)
        })
        .is_err());
    }
}
