//! Linear equality over unit coefficients.

use crate::cp::engine::{Delta, Propagator};
use crate::cp::store::{Fail, PropResult, Store, VarId};

/// `sum(vars) == total`, bounds consistent. Used as a cardinality constraint
/// over 0/1 presence variables.
#[derive(Debug, Clone)]
pub struct SumEq {
    vars: Vec<VarId>,
    total: i64,
}

impl SumEq {
    pub fn new(vars: Vec<VarId>, total: i64) -> Self {
        SumEq { vars, total }
    }
}

impl Propagator for SumEq {
    fn name(&self) -> &'static str {
        "sum_eq"
    }

    fn watched(&self) -> Vec<VarId> {
        self.vars.clone()
    }

    fn propagate(&mut self, store: &mut Store, _delta: Delta<'_>) -> PropResult {
        loop {
            let lo: i64 = self.vars.iter().map(|&v| store.min(v)).sum();
            let hi: i64 = self.vars.iter().map(|&v| store.max(v)).sum();
            if lo > self.total || hi < self.total {
                return Err(Fail);
            }
            let mut changed = false;
            for &v in &self.vars {
                let (vmin, vmax) = (store.min(v), store.max(v));
                changed |= store.set_min(v, self.total - (hi - vmax))?;
                changed |= store.set_max(v, self.total - (lo - vmin))?;
            }
            if !changed {
                return Ok(());
            }
        }
    }

    fn describe(&self) -> String {
        let vs: Vec<String> = self.vars.iter().map(|v| format!("v{}", v.0)).collect();
        format!("sum([{}]) = {}", vs.join(","), self.total)
    }
}
