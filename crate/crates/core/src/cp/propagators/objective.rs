//! Upper bound on a sum of monotone per-variable terms (the search objective).

use std::cell::Cell;
use std::rc::Rc;

use crate::cp::engine::{Delta, Propagator};
use crate::cp::store::{Fail, PropResult, Store, VarId};

/// `round((v + offset) * num / den)`, rounding halves up. Nondecreasing in
/// `v` when `num >= 0`; exact when `den == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonotoneTerm {
    pub var: VarId,
    pub offset: i64,
    pub num: i64,
    pub den: i64,
}

impl MonotoneTerm {
    pub fn eval(&self, v: i64) -> i64 {
        let x = (v as i128 + self.offset as i128) * self.num as i128;
        let den = self.den as i128;
        (2 * x + den).div_euclid(2 * den) as i64
    }

    /// Largest `v` with `eval(v) <= limit`, searched in `[lo, hi]`; None if even `lo` exceeds it.
    fn max_within(&self, limit: i64, lo: i64, hi: i64) -> Option<i64> {
        if self.eval(lo) > limit {
            return None;
        }
        if self.num == 0 || self.eval(hi) <= limit {
            return Some(hi);
        }
        let (mut a, mut b) = (lo, hi); // eval(a) <= limit < eval(b)
        while b - a > 1 {
            let mid = a + (b - a) / 2;
            if self.eval(mid) <= limit {
                a = mid;
            } else {
                b = mid;
            }
        }
        Some(a)
    }
}

/// Shared, externally tightened upper bound.
pub type Bound = Rc<Cell<i64>>;

/// `sum(terms) <= bound`.
#[derive(Debug, Clone)]
pub struct MonotoneSumBound {
    terms: Vec<MonotoneTerm>,
    bound: Bound,
}

impl MonotoneSumBound {
    pub fn new(terms: Vec<MonotoneTerm>, bound: Bound) -> Self {
        MonotoneSumBound { terms, bound }
    }
}

impl Propagator for MonotoneSumBound {
    fn name(&self) -> &'static str {
        "objective_bound"
    }

    fn watched(&self) -> Vec<VarId> {
        self.terms.iter().map(|t| t.var).collect()
    }

    fn propagate(&mut self, store: &mut Store, _delta: Delta<'_>) -> PropResult {
        let bound = self.bound.get();
        if bound == i64::MAX {
            return Ok(());
        }
        let mins: Vec<i64> = self.terms.iter().map(|t| t.eval(store.min(t.var))).collect();
        let lb: i64 = mins.iter().sum();
        if lb > bound {
            return Err(Fail);
        }
        let slack = bound - lb;
        for (t, &m) in self.terms.iter().zip(&mins) {
            let (lo, hi) = (store.min(t.var), store.max(t.var));
            let vmax = t.max_within(m + slack, lo, hi).ok_or(Fail)?;
            store.set_max(t.var, vmax)?;
        }
        Ok(())
    }

    fn describe(&self) -> String {
        format!("objective({} terms) <= {}", self.terms.len(), self.bound.get())
    }
}
