//! Bound-constrained compass search for black-box objectives.
//!
//! Polls `x +- step * e_i` in coordinate order, moves to the first strict
//! improvement, and halves the step after a full unsuccessful poll. Values are
//! cached by the exact bit pattern of the point, so revisiting a point costs
//! nothing against the budget.

use std::collections::HashMap;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompassOptions {
    /// Initial step as a fraction of each coordinate's box width.
    pub initial_step: f64,
    /// Stop once the relative step falls below this.
    pub min_step: f64,
    /// Improvement below this (absolute) does not count as a move.
    pub min_decrease: f64,
}

impl Default for CompassOptions {
    fn default() -> Self {
        CompassOptions {
            initial_step: 0.25,
            min_step: 1e-4,
            min_decrease: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompassResult {
    pub x: Vec<f64>,
    pub value: f64,
    /// True if the step shrank below `min_step` before the budget ran out.
    pub stabilized: bool,
}

/// Memoizing, budget-counting wrapper around an objective.
pub struct Evaluator<F> {
    f: F,
    cache: HashMap<Vec<u64>, f64>,
    used: usize,
    budget: usize,
}

impl<F: FnMut(&[f64]) -> f64> Evaluator<F> {
    pub fn new(f: F, budget: usize) -> Self {
        Evaluator {
            f,
            cache: HashMap::new(),
            used: 0,
            budget,
        }
    }

    /// Fresh evaluations so far.
    pub fn used(&self) -> usize {
        self.used
    }

    pub fn exhausted(&self) -> bool {
        self.used >= self.budget
    }

    /// `None` when the point is new and the budget is spent.
    pub fn eval(&mut self, x: &[f64]) -> Option<f64> {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        if let Some(&v) = self.cache.get(&key) {
            return Some(v);
        }
        if self.exhausted() {
            return None;
        }
        self.used += 1;
        let v = (self.f)(x);
        self.cache.insert(key, v);
        Some(v)
    }

    pub fn into_inner(self) -> F {
        self.f
    }
}

/// Minimizes over the box `[lo, hi]` starting from `x0` (clamped into it).
pub fn compass_search<F: FnMut(&[f64]) -> f64>(
    eval: &mut Evaluator<F>,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &CompassOptions,
) -> Option<CompassResult> {
    let n = x0.len();
    let width: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| b - a).collect();
    let mut x: Vec<f64> = (0..n).map(|i| x0[i].clamp(lo[i], hi[i])).collect();
    let mut fx = eval.eval(&x)?;
    let mut step = opts.initial_step;
    while step >= opts.min_step {
        let mut moved = false;
        'poll: for i in 0..n {
            if width[i] <= 0.0 {
                continue;
            }
            for sign in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] = (x[i] + sign * step * width[i]).clamp(lo[i], hi[i]);
                if y[i] == x[i] {
                    continue;
                }
                let Some(fy) = eval.eval(&y) else {
                    return Some(CompassResult {
                        x,
                        value: fx,
                        stabilized: false,
                    });
                };
                if fy < fx - opts.min_decrease {
                    x = y;
                    fx = fy;
                    moved = true;
                    break 'poll;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    Some(CompassResult {
        x,
        value: fx,
        stabilized: true,
    })
}
