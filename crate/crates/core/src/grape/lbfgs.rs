//! Limited-memory BFGS direction and a backtracking Armijo line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Curvature pairs `(s, y)` for the two-loop recursion.
#[derive(Clone, Debug)]
pub struct LbfgsMemory {
    capacity: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

impl LbfgsMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            pairs: VecDeque::with_capacity(capacity),
        }
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    /// Stores the pair unless it violates the curvature condition `s·y > 0`.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot(&s, &y);
        if self.capacity == 0 || !(sy > 1e-12 * norm(&s) * norm(&y)) {
            return false;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
        true
    }

    /// `-H g` via the two-loop recursion, with `H_0 = (s·y / y·y) I`.
    ///
    /// With an empty memory this is the unit-length steepest-descent direction.
    pub fn direction(&self, grad: &[f64]) -> Vec<f64> {
        let Some((s_last, y_last, _)) = self.pairs.back() else {
            let g = norm(grad);
            if g == 0.0 {
                return vec![0.0; grad.len()];
            }
            return grad.iter().map(|v| -v / g).collect();
        };
        let mut q = grad.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = dot(s_last, y_last) / dot(y_last, y_last);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LineSearchConfig {
    pub armijo: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    pub initial_step: f64,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            armijo: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 30,
            initial_step: 1.0,
        }
    }
}

pub struct Accepted<T> {
    pub step: f64,
    pub value: f64,
    pub payload: T,
}

/// Backtracks from `initial_step` until `f(step) <= f0 + c·step·slope`.
///
/// `slope` is the directional derivative at the start and must be negative.
/// Returns `None` when no step is accepted within the budget.
pub fn backtrack<T>(
    cfg: &LineSearchConfig,
    f0: f64,
    slope: f64,
    mut eval: impl FnMut(f64) -> Result<(f64, T)>,
) -> Result<Option<Accepted<T>>> {
    if !(slope < 0.0) {
        return Ok(None);
    }
    let mut step = cfg.initial_step;
    for _ in 0..=cfg.max_backtracks {
        let (value, payload) = eval(step)?;
        if value.is_finite() && value <= f0 + cfg.armijo * step * slope {
            return Ok(Some(Accepted {
                step,
                value,
                payload,
            }));
        }
        step *= cfg.backtrack_factor;
    }
    Ok(None)
}
