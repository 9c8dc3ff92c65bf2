//! Depth-first branch-and-bound.

use std::cell::Cell;
use std::rc::Rc;
use std::time::{Duration, Instant};

use super::engine::Model;
use super::propagators::{MonotoneSumBound, MonotoneTerm};
use super::store::{Store, VarId};

/// Binary choice point: `var == value` on the left, `var != value` on the right.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub var: VarId,
    pub value: i64,
}

/// Variable/value selection. Returning `None` means every decision variable is fixed.
pub trait Brancher {
    fn select(&mut self, store: &Store) -> Option<Decision>;
}

impl<F: FnMut(&Store) -> Option<Decision>> Brancher for F {
    fn select(&mut self, store: &Store) -> Option<Decision> {
        self(store)
    }
}

/// Search budget. Both limits are checked between propagation fixpoints.
#[derive(Debug, Clone, Copy, Default)]
pub struct Limits {
    pub deadline: Option<Instant>,
    pub max_nodes: Option<u64>,
}

impl Limits {
    pub fn unlimited() -> Self {
        Limits::default()
    }

    pub fn time(budget: Duration) -> Self {
        Limits {
            deadline: Some(Instant::now() + budget),
            max_nodes: None,
        }
    }

    pub fn with_nodes(mut self, nodes: u64) -> Self {
        self.max_nodes = Some(nodes);
        self
    }

    fn exhausted(&self, stats: &SearchStats) -> bool {
        if let Some(n) = self.max_nodes {
            if stats.decisions >= n {
                return true;
            }
        }
        matches!(self.deadline, Some(d) if Instant::now() >= d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Search space exhausted with an incumbent.
    Optimal,
    /// Budget ran out with an incumbent.
    Feasible,
    /// Search space exhausted without a solution.
    Infeasible,
    /// Budget ran out before any solution.
    Unknown,
}

#[derive(Debug, Clone, Default)]
pub struct SearchStats {
    pub decisions: u64,
    pub fails: u64,
    pub propagations: u64,
    pub solutions: u64,
    pub elapsed: Duration,
    pub best_objective: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solution {
    values: Vec<i64>,
    pub objective: Option<i64>,
}

impl Solution {
    pub fn value(&self, v: VarId) -> i64 {
        self.values[v.0]
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub solution: Option<Solution>,
    pub stats: SearchStats,
}

impl SolveOutcome {
    /// Budget ran out (with or without an incumbent).
    pub fn timed_out(&self) -> bool {
        matches!(self.status, SolveStatus::Feasible | SolveStatus::Unknown)
    }
}

/// Registered objective: the bound propagator plus the terms to evaluate.
pub(crate) struct Objective {
    prop: usize,
    bound: Rc<Cell<i64>>,
    terms: Vec<MonotoneTerm>,
}

impl Model {
    /// Minimizes `sum(terms)`; at most one objective per model.
    pub fn minimize(&mut self, terms: Vec<MonotoneTerm>) {
        let bound = Rc::new(Cell::new(i64::MAX));
        let prop = self.post(MonotoneSumBound::new(terms.clone(), bound.clone()));
        self.objective = Some(Objective { prop, bound, terms });
    }

    fn objective_value(&self) -> Option<i64> {
        self.objective.as_ref().map(|o| {
            o.terms
                .iter()
                .map(|t| t.eval(self.store().min(t.var)))
                .sum()
        })
    }

    fn snapshot(&self) -> Vec<i64> {
        (0..self.num_vars())
            .map(|v| self.store().min(VarId(v)))
            .collect()
    }

    /// Depth-first search; with an objective, every incumbent tightens the
    /// bound to `value - 1` and search continues until exhaustion or budget.
    pub fn solve(&mut self, brancher: &mut dyn Brancher, limits: &Limits) -> SolveOutcome {
        let start = Instant::now();
        let base_props = self.propagations();
        let mut stats = SearchStats::default();
        let mut best: Option<Solution> = None;
        let mut exhausted = false;

        if self.propagate().is_err() {
            exhausted = true;
        } else {
            let base_depth = self.store().depth();
            let mut stack: Vec<(Decision, bool)> = Vec::new();
            loop {
                if limits.exhausted(&stats) {
                    break;
                }
                match brancher.select(self.store()) {
                    None => {
                        let objective = self.objective_value();
                        stats.solutions += 1;
                        stats.best_objective = objective;
                        best = Some(Solution {
                            values: self.snapshot(),
                            objective,
                        });
                        let Some(obj) = &self.objective else {
                            break;
                        };
                        obj.bound.set(objective.unwrap() - 1);
                        if !self.backtrack(&mut stack, &mut stats) {
                            exhausted = true;
                            break;
                        }
                    }
                    Some(d) => {
                        debug_assert!(self.store().dom(d.var).contains(d.value));
                        stats.decisions += 1;
                        self.push_level();
                        stack.push((d, false));
                        let ok = self.store_mut().assign(d.var, d.value).is_ok()
                            && self.propagate().is_ok();
                        if !ok {
                            stats.fails += 1;
                            if !self.backtrack(&mut stack, &mut stats) {
                                exhausted = true;
                                break;
                            }
                        }
                    }
                }
            }
            while self.store().depth() > base_depth {
                self.pop_level();
            }
        }

        stats.elapsed = start.elapsed();
        stats.propagations = self.propagations() - base_props;
        let status = match (exhausted, best.is_some()) {
            (true, true) => SolveStatus::Optimal,
            (true, false) => SolveStatus::Infeasible,
            (false, true) if self.objective.is_none() => SolveStatus::Optimal,
            (false, true) => SolveStatus::Feasible,
            (false, false) => SolveStatus::Unknown,
        };
        SolveOutcome {
            status,
            solution: best,
            stats,
        }
    }

    // Undo to the deepest open left branch and take its refutation.
    fn backtrack(&mut self, stack: &mut Vec<(Decision, bool)>, stats: &mut SearchStats) -> bool {
        while let Some((d, refuted)) = stack.pop() {
            self.pop_level();
            if refuted {
                continue;
            }
            self.push_level();
            stack.push((d, true));
            if let Some(obj) = &self.objective {
                let p = obj.prop;
                self.schedule(p);
            }
            let ok = self.store_mut().remove(d.var, d.value).is_ok() && self.propagate().is_ok();
            if ok {
                return true;
            }
            stats.fails += 1;
        }
        false
    }
}
