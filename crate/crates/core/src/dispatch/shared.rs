//! Model pieces common to the three dispatchers.

use std::collections::HashMap;

use num_rational::Ratio;

use crate::cp::propagators::{Cumulative, CumulativeTask};
use crate::cp::{Decision, Domain, Model, Store, VarId};

use super::{JobOrder, Prepared};

/// Fixed variables, one per distinct value.
#[derive(Default)]
pub(crate) struct Consts(HashMap<i64, VarId>);

impl Consts {
    pub fn get(&mut self, m: &mut Model, v: i64) -> VarId {
        *self.0.entry(v).or_insert_with(|| m.new_var(Domain::singleton(v)))
    }
}

/// One start variable per selected job, `D(s) = [lo, hi]`.
pub(crate) fn start_vars(m: &mut Model, lo: &[i64], hi: i64) -> Vec<VarId> {
    lo.iter().map(|&l| m.new_var(Domain::interval(l, hi.max(l)))).collect()
}

/// Per resource type, the jobs' total demand against the pooled capacity,
/// with running jobs as fixed tasks.
pub(crate) fn post_pooled_cumulatives(m: &mut Model, p: &Prepared, svars: &[VarId], consts: &mut Consts) {
    let t_var = consts.get(m, p.t);
    for r in 0..p.system.num_resources() {
        let mut tasks = Vec::new();
        for (j, &s) in p.jobs.iter().zip(svars) {
            if j.unit[r] > 0 {
                tasks.push(CumulativeTask::new(s, j.d, j.unit[r] * j.rn));
            }
        }
        if tasks.is_empty() {
            continue;
        }
        for rj in &p.running {
            if rj.usage[r] > 0 {
                tasks.push(CumulativeTask::new(t_var, rj.residual, rj.usage[r]));
            }
        }
        m.post(Cumulative::new(tasks, p.system.tcap(r)));
    }
}

/// Picks the next job to branch on among those with an unfixed variable:
/// earliest possible start, then priority (or priority first). `jobs` is in
/// priority order, so the rank settles remaining ties by id.
pub(crate) fn select_job<'a, J>(
    store: &Store,
    jobs: &'a [J],
    start: impl Fn(&J) -> VarId,
    priority: impl Fn(&J) -> Ratio<i64>,
    open: impl Fn(&Store, &J) -> bool,
    order: JobOrder,
) -> Option<&'a J> {
    let mut best: Option<(i64, Ratio<i64>, &J)> = None;
    for j in jobs {
        if !open(store, j) {
            continue;
        }
        let est = store.min(start(j));
        let prio = priority(j);
        let better = match (&best, order) {
            (None, _) => true,
            (Some((e, p, _)), JobOrder::StartFirst) => est < *e || (est == *e && prio > *p),
            (Some((e, p, _)), JobOrder::PriorityFirst) => prio > *p || (prio == *p && est < *e),
        };
        if better {
            best = Some((est, prio, j));
        }
    }
    best.map(|b| b.2)
}

pub(crate) fn fix_start(store: &Store, s: VarId) -> Option<Decision> {
    (!store.is_fixed(s)).then(|| Decision {
        var: s,
        value: store.min(s),
    })
}
