use serde::{Deserialize, Serialize};

use crate::error::{Result, SperlError};

/// Decision epochs `0..T` plus the terminal index `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSet {
    horizon: usize,
}

impl TimeSet {
    pub fn new(horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(SperlError::InvalidProblem(
                "horizon must be at least 1".into(),
            ));
        }
        Ok(Self { horizon })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Decision epochs in forward order.
    pub fn epochs(&self) -> std::ops::Range<usize> {
        0..self.horizon
    }

    pub fn contains(&self, t: usize) -> bool {
        t < self.horizon
    }
}

/// Enumerated set of numerically labelled points.
///
/// Elements are addressed by index; the label is what reward transforms
/// and terminal-mean terms see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FiniteSpace {
    values: Vec<f64>,
}

impl FiniteSpace {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(SperlError::InvalidProblem(
                "finite space must be non-empty".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SperlError::InvalidProblem(
                "space labels must be finite".into(),
            ));
        }
        Ok(Self { values })
    }

    /// Space `{0, 1, ..., n-1}`.
    pub fn indexed(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| i as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// State or action space of a general environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Space {
    Finite { points: FiniteSpace },
    Interval { lo: f64, hi: f64 },
    Real,
}

impl Space {
    pub fn contains(&self, v: f64) -> bool {
        match self {
            Space::Finite { points } => points.values().contains(&v),
            Space::Interval { lo, hi } => (*lo..=*hi).contains(&v),
            Space::Real => v.is_finite(),
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Space::Finite { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(FiniteSpace::new(vec![]).is_err());
        assert!(FiniteSpace::new(vec![1.0, f64::NAN]).is_err());
        assert!(TimeSet::new(0).is_err());
    }

    #[test]
    fn interval_membership() {
        let s = Space::Interval { lo: -1.0, hi: 1.0 };
        assert!(s.contains(1.0));
        assert!(!s.contains(1.5));
        assert!(!Space::Real.contains(f64::INFINITY));
    }
}
