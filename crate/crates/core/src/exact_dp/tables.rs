use serde::{Deserialize, Serialize};

use crate::error::{Result, SperlError};
use crate::tic::TicProblem;

/// Per-epoch tables of `Q`, the adjustment functions `r`, `f`, `g`, stored
/// for every vantage point `(tau, y)` with `tau <= t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tables<T> {
    horizon: usize,
    slices: Vec<Slice<T>>,
}

pub type ValueTables = Tables<f64>;

impl<T: Copy> Tables<T> {
    pub fn filled(problem: &TicProblem, value: T) -> Self {
        Self {
            horizon: problem.horizon(),
            slices: (0..problem.horizon())
                .map(|t| Slice::filled(problem, t, value))
                .collect(),
        }
    }

    pub(crate) fn from_slices(horizon: usize, slices: Vec<Slice<T>>) -> Self {
        Self { horizon, slices }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn slice(&self, t: usize) -> &Slice<T> {
        &self.slices[t]
    }

    pub fn slice_mut(&mut self, t: usize) -> &mut Slice<T> {
        &mut self.slices[t]
    }

    pub fn slices(&self) -> &[Slice<T>] {
        &self.slices
    }

    pub(crate) fn slices_mut(&mut self) -> &mut [Slice<T>] {
        &mut self.slices
    }

    /// Whether the layout matches the problem's spaces.
    pub fn fits(&self, problem: &TicProblem) -> bool {
        self.horizon == problem.horizon() && self.slices.iter().all(|s| s.fits(problem))
    }
}

impl ValueTables {
    pub fn all_finite(&self) -> bool {
        self.slices.iter().all(|s| {
            s.q.iter()
                .chain(&s.g)
                .chain(&s.f)
                .chain(&s.r)
                .all(|v| v.is_finite())
        })
    }

    /// Largest `|Q - other Q|` over pairs selected by `keep(t, x, u)`.
    pub fn max_q_gap(
        &self,
        other: &ValueTables,
        mut keep: impl FnMut(usize, usize, usize) -> bool,
    ) -> f64 {
        let mut gap: f64 = 0.0;
        for (a, b) in self.slices.iter().zip(&other.slices) {
            for x in 0..a.n_states {
                for u in 0..a.n_actions {
                    if keep(a.t, x, u) {
                        gap = gap.max((a.q(x, u) - b.q(x, u)).abs());
                    }
                }
            }
        }
        gap
    }
}

/// Tables of one epoch `t`.
///
/// `r` is indexed by `(x, u, tau, m, y)` with `tau <= t <= m < T` and
/// `y` ranging over the state space at `tau`; `f` by `(x, u, tau, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice<T> {
    t: usize,
    horizon: usize,
    n_states: usize,
    n_actions: usize,
    vantage_offsets: Vec<usize>,
    q: Vec<T>,
    g: Vec<T>,
    f: Vec<T>,
    r: Vec<T>,
}

impl<T: Copy> Slice<T> {
    pub fn filled(problem: &TicProblem, t: usize, value: T) -> Self {
        let mut vantage_offsets = Vec::with_capacity(t + 2);
        let mut acc = 0;
        for tau in 0..=t {
            vantage_offsets.push(acc);
            acc += problem.n_states(tau);
        }
        vantage_offsets.push(acc);
        let n_states = problem.n_states(t);
        let n_actions = problem.n_actions(t);
        let pairs = n_states * n_actions;
        let tail = problem.horizon() - t;
        Self {
            t,
            horizon: problem.horizon(),
            n_states,
            n_actions,
            vantage_offsets,
            q: vec![value; pairs],
            g: vec![value; pairs],
            f: vec![value; pairs * acc],
            r: vec![value; pairs * acc * tail],
        }
    }

    fn fits(&self, problem: &TicProblem) -> bool {
        self.t < problem.horizon()
            && self.n_states == problem.n_states(self.t)
            && self.n_actions == problem.n_actions(self.t)
            && (0..=self.t).all(|tau| self.vantage_size(tau) == problem.n_states(tau))
    }

    pub fn epoch(&self) -> usize {
        self.t
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn vantage_size(&self, tau: usize) -> usize {
        self.vantage_offsets[tau + 1] - self.vantage_offsets[tau]
    }

    fn n_vantage(&self) -> usize {
        self.vantage_offsets[self.t + 1]
    }

    fn pair(&self, x: usize, u: usize) -> usize {
        debug_assert!(x < self.n_states && u < self.n_actions);
        x * self.n_actions + u
    }

    fn f_index(&self, x: usize, u: usize, tau: usize, y: usize) -> usize {
        debug_assert!(tau <= self.t && y < self.vantage_size(tau));
        self.pair(x, u) * self.n_vantage() + self.vantage_offsets[tau] + y
    }

    fn r_index(&self, x: usize, u: usize, tau: usize, m: usize, y: usize) -> usize {
        debug_assert!(m >= self.t && m < self.horizon);
        self.f_index(x, u, tau, y) * (self.horizon - self.t) + (m - self.t)
    }

    pub fn check_index(&self, x: usize, u: usize, tau: usize, m: usize, y: usize) -> Result<()> {
        if x >= self.n_states || u >= self.n_actions {
            return Err(SperlError::Range(format!(
                "pair ({x}, {u}) outside epoch {}",
                self.t
            )));
        }
        if tau > self.t {
            return Err(SperlError::Range(format!(
                "vantage epoch {tau} after epoch {}",
                self.t
            )));
        }
        if m < self.t || m >= self.horizon {
            return Err(SperlError::Range(format!(
                "reward epoch {m} outside {}..{}",
                self.t, self.horizon
            )));
        }
        if y >= self.vantage_size(tau) {
            return Err(SperlError::Range(format!(
                "vantage state {y} outside epoch {tau}"
            )));
        }
        Ok(())
    }

    pub fn q(&self, x: usize, u: usize) -> T {
        self.q[self.pair(x, u)]
    }

    pub fn set_q(&mut self, x: usize, u: usize, v: T) {
        let i = self.pair(x, u);
        self.q[i] = v;
    }

    pub fn q_row(&self, x: usize) -> &[T] {
        &self.q[x * self.n_actions..(x + 1) * self.n_actions]
    }

    pub fn g(&self, x: usize, u: usize) -> T {
        self.g[self.pair(x, u)]
    }

    pub fn set_g(&mut self, x: usize, u: usize, v: T) {
        let i = self.pair(x, u);
        self.g[i] = v;
    }

    pub fn f(&self, x: usize, u: usize, tau: usize, y: usize) -> T {
        self.f[self.f_index(x, u, tau, y)]
    }

    pub fn set_f(&mut self, x: usize, u: usize, tau: usize, y: usize, v: T) {
        let i = self.f_index(x, u, tau, y);
        self.f[i] = v;
    }

    pub fn r(&self, x: usize, u: usize, tau: usize, m: usize, y: usize) -> T {
        self.r[self.r_index(x, u, tau, m, y)]
    }

    pub fn set_r(&mut self, x: usize, u: usize, tau: usize, m: usize, y: usize, v: T) {
        let i = self.r_index(x, u, tau, m, y);
        self.r[i] = v;
    }
}
