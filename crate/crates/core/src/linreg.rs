//! Least-squares fitting for linear critics.
//!
//! Ordinary least squares solves the normal equations by Cholesky
//! factorization, falling back to a small ridge term when the Gram matrix
//! is numerically singular. [`als_fit`] is a feasible weighted least
//! squares that first regresses squared residuals on a variance model and
//! then reweights samples by the fitted variances.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

const SINGULAR_PIVOT_RATIO: f64 = 1e-12;
const RIDGE_SCALE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegressionError {
    #[error("{targets} targets but {rows} feature rows")]
    Shape { targets: usize, rows: usize },
    #[error("feature rows have differing lengths")]
    Ragged,
    #[error("non-finite value in regression input")]
    NonFinite,
    #[error("{samples} samples cannot identify {dim} coefficients")]
    TooFewSamples { samples: usize, dim: usize },
    #[error("variance model keeps {kept} samples but {dim} are needed")]
    TooManyDropped { kept: usize, dim: usize },
    #[error("normal equations could not be solved")]
    Singular,
}

/// Targets, feature rows and whether an intercept column is appended.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    targets: Vec<f64>,
    features: Vec<Vec<f64>>,
    fit_intercept: bool,
}

impl RegressionProblem {
    pub fn new(
        targets: Vec<f64>,
        features: Vec<Vec<f64>>,
        fit_intercept: bool,
    ) -> Result<Self, RegressionError> {
        if targets.len() != features.len() {
            return Err(RegressionError::Shape {
                targets: targets.len(),
                rows: features.len(),
            });
        }
        if let Some(first) = features.first() {
            if features.iter().any(|row| row.len() != first.len()) {
                return Err(RegressionError::Ragged);
            }
        }
        if targets
            .iter()
            .chain(features.iter().flatten())
            .any(|v| !v.is_finite())
        {
            return Err(RegressionError::NonFinite);
        }
        Ok(Self {
            targets,
            features,
            fit_intercept,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Number of coefficients, including the intercept.
    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len) + usize::from(self.fit_intercept)
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Feature row `i` with the intercept column appended when fitted.
    pub fn design_row(&self, i: usize) -> Vec<f64> {
        let mut row = self.features[i].clone();
        if self.fit_intercept {
            row.push(1.0);
        }
        row
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OlsFit {
    /// Coefficients in feature order, the intercept last when fitted.
    pub weights: Vec<f64>,
    /// Ridge strength used when the normal equations were singular.
    pub ridge: Option<f64>,
}

impl OlsFit {
    pub fn predict(&self, design_row: &[f64]) -> f64 {
        dot(&self.weights, design_row)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn ols_fit(problem: &RegressionProblem) -> Result<OlsFit, RegressionError> {
    let rows: Vec<Vec<f64>> = (0..problem.len()).map(|i| problem.design_row(i)).collect();
    solve_least_squares(&rows, problem.targets(), problem.dim())
}

fn solve_least_squares(
    rows: &[Vec<f64>],
    targets: &[f64],
    dim: usize,
) -> Result<OlsFit, RegressionError> {
    if dim == 0 || rows.len() < dim {
        return Err(RegressionError::TooFewSamples {
            samples: rows.len(),
            dim,
        });
    }
    let mut gram = DMatrix::<f64>::zeros(dim, dim);
    let mut moment = DVector::<f64>::zeros(dim);
    for (row, &y) in rows.iter().zip(targets) {
        for i in 0..dim {
            moment[i] += row[i] * y;
            for j in 0..=i {
                gram[(i, j)] += row[i] * row[j];
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            gram[(j, i)] = gram[(i, j)];
        }
    }
    if let Some(weights) = cholesky_solve(&gram, &moment) {
        return Ok(OlsFit {
            weights,
            ridge: None,
        });
    }
    let ridge = RIDGE_SCALE * gram.trace().max(f64::MIN_POSITIVE) / dim as f64;
    let regularized = &gram + DMatrix::<f64>::identity(dim, dim) * ridge;
    let weights = cholesky_solve(&regularized, &moment).ok_or(RegressionError::Singular)?;
    Ok(OlsFit {
        weights,
        ridge: Some(ridge),
    })
}

fn cholesky_solve(gram: &DMatrix<f64>, moment: &DVector<f64>) -> Option<Vec<f64>> {
    let max_diag = gram.diagonal().max();
    if max_diag <= 0.0 {
        return None;
    }
    let chol = gram.clone().cholesky()?;
    let min_pivot = chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| d * d)
        .fold(f64::INFINITY, f64::min);
    if min_pivot < SINGULAR_PIVOT_RATIO * max_diag {
        return None;
    }
    let w = chol.solve(moment);
    w.iter()
        .all(|v| v.is_finite())
        .then(|| w.iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlsOptions {
    /// Lower bound on fitted residual variances.
    pub variance_floor: f64,
    /// Keep non-positive-variance samples at the floor instead of dropping
    /// them when dropping would leave fewer samples than coefficients.
    pub floor_fallback: bool,
}

impl Default for AlsOptions {
    fn default() -> Self {
        Self {
            variance_floor: 1e-12,
            floor_fallback: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlsDiagnostics {
    pub ols: OlsFit,
    pub variance_model: OlsFit,
    pub dropped: usize,
    pub floored: usize,
    pub ridge_used: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlsFit {
    pub weights: Vec<f64>,
    pub diagnostics: AlsDiagnostics,
}

/// Feasible weighted least squares.
///
/// `residual_features[i]` are the regressors of the variance model for
/// sample `i`; the variance model has no intercept.
pub fn als_fit(
    problem: &RegressionProblem,
    residual_features: &[Vec<f64>],
    options: AlsOptions,
) -> Result<AlsFit, RegressionError> {
    if residual_features.len() != problem.len() {
        return Err(RegressionError::Shape {
            targets: problem.len(),
            rows: residual_features.len(),
        });
    }
    let ols = ols_fit(problem)?;
    let rows: Vec<Vec<f64>> = (0..problem.len()).map(|i| problem.design_row(i)).collect();
    let squared: Vec<f64> = rows
        .iter()
        .zip(problem.targets())
        .map(|(row, y)| (y - ols.predict(row)).powi(2))
        .collect();
    let variance_problem = RegressionProblem::new(squared, residual_features.to_vec(), false)?;
    let variance_model = ols_fit(&variance_problem)?;
    let fitted: Vec<f64> = residual_features
        .iter()
        .map(|z| variance_model.predict(z))
        .collect();

    let dim = problem.dim();
    let positive = fitted.iter().filter(|v| **v > 0.0).count();
    let keep_all = positive < dim;
    if keep_all && !options.floor_fallback {
        return Err(RegressionError::TooManyDropped {
            kept: positive,
            dim,
        });
    }
    let mut weighted_rows = Vec::with_capacity(rows.len());
    let mut weighted_targets = Vec::with_capacity(rows.len());
    let (mut dropped, mut floored) = (0, 0);
    for ((row, &y), &v) in rows.iter().zip(problem.targets()).zip(&fitted) {
        if v <= 0.0 && !keep_all {
            dropped += 1;
            continue;
        }
        let variance = if v < options.variance_floor {
            floored += 1;
            options.variance_floor
        } else {
            v
        };
        let scale = variance.sqrt().recip();
        weighted_rows.push(row.iter().map(|a| a * scale).collect::<Vec<_>>());
        weighted_targets.push(y * scale);
    }
    let fit = solve_least_squares(&weighted_rows, &weighted_targets, dim)?;
    let ridge_used = fit.ridge.is_some() || ols.ridge.is_some() || variance_model.ridge.is_some();
    Ok(AlsFit {
        weights: fit.weights,
        diagnostics: AlsDiagnostics {
            ols,
            variance_model,
            dropped,
            floored,
            ridge_used,
        },
    })
}

/// Step size `min(1, 2 / (l + 1))` at iteration `l`.
pub fn ema_rate(iteration: usize) -> f64 {
    (2.0 / (iteration as f64 + 1.0)).min(1.0)
}

/// `old + alpha (target - old)` elementwise.
pub fn relax(old: &[f64], target: &[f64], alpha: f64) -> Vec<f64> {
    old.iter()
        .zip(target)
        .map(|(w, t)| w + alpha * (t - w))
        .collect()
}


#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn relaxation_contracts_geometrically(
            start in prop::collection::vec(-10.0f64..10.0, 3),
            target in prop::collection::vec(-10.0f64..10.0, 3),
            alpha in 0.05f64..1.0,
        ) {
            let mut w = start.clone();
            for k in 1..=20 {
                w = relax(&w, &target, alpha);
                for i in 0..3 {
                    let expected = (1.0 - alpha).powi(k) * (start[i] - target[i]);
                    prop_assert!((w[i] - target[i] - expected).abs() < 1e-9);
                }
            }
        }
    }
}
