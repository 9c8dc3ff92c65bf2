//! All-different by forward checking.

use crate::cp::engine::{Delta, Propagator};
use crate::cp::store::{Fail, PropResult, Store, VarId};

/// Pairwise distinct values. A fixed variable removes its value from the
/// others; two equal fixed variables fail.
#[derive(Debug, Clone)]
pub struct AllDifferent {
    vars: Vec<VarId>,
}

impl AllDifferent {
    pub fn new(vars: Vec<VarId>) -> Self {
        AllDifferent { vars }
    }
}

impl Propagator for AllDifferent {
    fn name(&self) -> &'static str {
        "alldifferent"
    }

    fn watched(&self) -> Vec<VarId> {
        self.vars.clone()
    }

    fn propagate(&mut self, store: &mut Store, delta: Delta<'_>) -> PropResult {
        let mut work: Vec<usize> = match delta {
            Delta::All => (0..self.vars.len()).collect(),
            Delta::Changed(locals) => locals.iter().map(|&k| k as usize).collect(),
        };
        while let Some(i) = work.pop() {
            let Some(val) = store.value(self.vars[i]) else {
                continue;
            };
            for (j, &other) in self.vars.iter().enumerate() {
                if j == i {
                    continue;
                }
                if store.value(other) == Some(val) {
                    return Err(Fail);
                }
                if store.remove(other, val)? && store.is_fixed(other) {
                    work.push(j);
                }
            }
        }
        Ok(())
    }

    fn describe(&self) -> String {
        let vs: Vec<String> = self.vars.iter().map(|v| format!("v{}", v.0)).collect();
        format!("alldifferent([{}])", vs.join(","))
    }
}
