use serde::{Deserialize, Serialize};

use super::market::MarketParams;
use crate::linreg::{als_fit, relax, AlsOptions, RegressionProblem};

/// Quadratic-in-action critics for every epoch:
/// `Q_t(x, u) = q[t][0] u^2 + q[t][1] u + q[t][2] x + q[t][3]` and
/// `g_t(x, u) = g[t][0] u + g[t][1] x + g[t][2]`, where `g` predicts the
/// expected terminal wealth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvCriticWeights {
    pub q: Vec<[f64; 4]>,
    pub g: Vec<[f64; 3]>,
}

impl MvCriticWeights {
    /// Zero weights except the known wealth coefficients at the last epoch.
    pub fn initial(params: &MarketParams) -> Self {
        let horizon = params.horizon;
        let mut weights = Self {
            q: vec![[0.0; 4]; horizon],
            g: vec![[0.0; 3]; horizon],
        };
        weights.q[horizon - 1][2] = params.growth();
        weights.g[horizon - 1][1] = params.growth();
        weights
    }

    pub fn horizon(&self) -> usize {
        self.q.len()
    }

    pub fn q_value(&self, t: usize, x: f64, u: f64) -> f64 {
        let [a, b, c, d] = self.q[t];
        a * u * u + b * u + c * x + d
    }

    pub fn g_value(&self, t: usize, x: f64, u: f64) -> f64 {
        let [a, b, c] = self.g[t];
        a * u + b * x + c
    }

    /// `dQ_t/du`, the same at every wealth level.
    pub fn q_slope(&self, t: usize, u: f64) -> f64 {
        2.0 * self.q[t][0] * u + self.q[t][1]
    }

    /// Maximiser of `Q_t` in the action, if `Q_t` is strictly concave.
    pub fn q_vertex(&self, t: usize) -> Option<f64> {
        (self.q[t][0] < 0.0).then(|| -self.q[t][1] / (2.0 * self.q[t][0]))
    }
}

/// Critics at epoch `t` from those at `t + 1` and the last epoch.
pub fn recursion_step(
    next_q: [f64; 4],
    next_g: [f64; 3],
    last_q: [f64; 4],
    last_g: [f64; 3],
) -> ([f64; 4], [f64; 3]) {
    let g_growth = next_g[1];
    let g_sq = g_growth * g_growth;
    let q = [
        g_sq * last_q[0],
        next_q[2] * last_g[0] + g_sq * (last_q[1] - last_g[0]),
        (next_q[2] - g_sq) * last_g[1] + g_sq * last_q[2],
        0.0,
    ];
    let g = [g_growth * last_g[0], g_growth * last_g[1], 0.0];
    (q, g)
}

/// Fill epochs `T-2, ..., 0` from the last-epoch critics.
pub fn parametric_recursion(weights: &mut MvCriticWeights) {
    let last = weights.horizon() - 1;
    let (last_q, last_g) = (weights.q[last], weights.g[last]);
    for t in (0..last).rev() {
        let (q, g) = recursion_step(weights.q[t + 1], weights.g[t + 1], last_q, last_g);
        weights.q[t] = q;
        weights.g[t] = g;
    }
}

/// Analytic critics and equilibrium actions of a market.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub weights: MvCriticWeights,
    /// Maximiser of the true `Q_t`.
    pub actions: Vec<f64>,
    /// `(mu dt - r)^2 / (gamma sigma^2 dt) (1 + r)^(T - t - 1)`, the
    /// squared-drift form reported for comparison only.
    pub squared_drift_actions: Vec<f64>,
}

pub fn ground_truth(params: &MarketParams) -> GroundTruth {
    let last = params.horizon - 1;
    let (a, s2, gamma, growth) = (
        params.excess_drift(),
        params.step_variance(),
        params.risk_aversion,
        params.growth(),
    );
    let mut weights = MvCriticWeights::initial(params);
    weights.q[last] = [-0.5 * gamma * s2, a, growth, 0.0];
    weights.g[last] = [a, growth, 0.0];
    parametric_recursion(&mut weights);
    let actions = (0..params.horizon)
        .map(|t| weights.q_vertex(t).expect("true critics are concave"))
        .collect();
    let squared_drift_actions = (0..params.horizon)
        .map(|t| a * a / (gamma * s2) * growth.powi((last - t) as i32))
        .collect();
    GroundTruth {
        weights,
        actions,
        squared_drift_actions,
    }
}

/// A transition moved to unit starting wealth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitExperience {
    pub u: f64,
    pub x_next: f64,
}

/// Shift a transition from wealth `x` to wealth 1 keeping its action and
/// realised return.
pub fn transform_to_unit_state(rate: f64, x: f64, u: f64, x_next: f64) -> UnitExperience {
    UnitExperience {
        u,
        x_next: x_next - (1.0 + rate) * (x - 1.0),
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct BoundaryReport {
    pub g_skipped: Option<String>,
    pub q_skipped: Option<String>,
    /// `w2(Q) - w2(g)`; both estimate the expected excess return.
    pub drift_gap: f64,
}

/// Relax the last-epoch critics towards weighted least-squares fits on
/// unit-state transitions. The wealth coefficient stays at `1 + r` and
/// the constant at 0; the fitted intercepts are discarded.
pub fn boundary_critic_fit(
    samples: &[UnitExperience],
    weights: &mut MvCriticWeights,
    alpha: f64,
    params: &MarketParams,
    options: AlsOptions,
) -> BoundaryReport {
    let last = weights.horizon() - 1;
    let growth = params.growth();
    let gamma = params.risk_aversion;
    let mut report = BoundaryReport::default();

    let g_fit = RegressionProblem::new(
        samples.iter().map(|s| s.x_next).collect(),
        samples.iter().map(|s| vec![s.u]).collect(),
        true,
    )
    .and_then(|p| {
        let residual: Vec<Vec<f64>> = samples.iter().map(|s| vec![s.u * s.u]).collect();
        als_fit(&p, &residual, options)
    });
    match g_fit {
        Ok(fit) => {
            let w2 = relax(&weights.g[last][..1], &fit.weights[..1], alpha)[0];
            weights.g[last] = [w2, growth, 0.0];
        }
        Err(e) => report.g_skipped = Some(e.to_string()),
    }

    let q_fit = RegressionProblem::new(
        samples
            .iter()
            .map(|s| {
                let g = weights.g_value(last, 1.0, s.u);
                s.x_next - 0.5 * gamma * s.x_next * s.x_next + 0.5 * gamma * g * g
            })
            .collect(),
        samples.iter().map(|s| vec![s.u * s.u, s.u]).collect(),
        true,
    )
    .and_then(|p| {
        let residual: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| vec![s.u * s.u, s.u.powi(4)])
            .collect();
        als_fit(&p, &residual, options)
    });
    match q_fit {
        Ok(fit) => {
            let w = relax(&weights.q[last][..2], &fit.weights[..2], alpha);
            weights.q[last] = [w[0], w[1], growth, 0.0];
        }
        Err(e) => report.q_skipped = Some(e.to_string()),
    }
    report.drift_gap = weights.q[last][1] - weights.g[last][0];
    report
}

/// Gradient step on `Q_t(1, .)` at the current action.
pub fn actor_step(weights: &MvCriticWeights, t: usize, theta: f64, step: f64) -> f64 {
    theta + step * weights.q_slope(t, theta)
}


#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn negative_curvature_survives_the_recursion(
            w3 in -1e-2f64..-1e-9,
            w2q in -1.0f64..1.0,
            w2g in -1.0f64..1.0,
            growth in 0.5f64..1.5,
        ) {
            let mut w = MvCriticWeights::initial(&MarketParams { horizon: 30, ..MarketParams::paper(0.2) });
            w.q[29] = [w3, w2q, growth, 0.0];
            w.g[29] = [w2g, growth, 0.0];
            parametric_recursion(&mut w);
            prop_assert!(w.q.iter().all(|q| q[0] < 0.0));
        }

        #[test]
        fn unit_transform_keeps_the_realised_return(
            x in -5.0f64..5.0,
            u in -3.0f64..3.0,
            y in -0.2f64..0.2,
        ) {
            let rate = 0.0002;
            let x_next = (1.0 + rate) * x + u * (y - rate);
            let unit = transform_to_unit_state(rate, x, u, x_next);
            prop_assert!((unit.x_next - ((1.0 + rate) + u * (y - rate))).abs() < 1e-12);
        }
    }
}
