//! Two-stage dispatcher: schedule against pooled capacities, then allocate
//! the jobs due now with best fit. Jobs the allocator cannot place are
//! barred from starting now and the schedule is recomputed.

use std::time::Instant;

use num_rational::Ratio;

use crate::cp::{Brancher, Decision, Model, SolveStatus, Store, VarId};
use crate::system::Allocation;

use super::alloc::Occupancy;
use super::shared::{fix_start, post_pooled_cumulatives, select_job, start_vars, Consts};
use super::{objective_terms, DispatchConfig, DispatchDecision, DispatchStats, DispatcherKind, Prepared};

struct StartOnly<'a> {
    svars: &'a [VarId],
    priorities: Vec<Ratio<i64>>,
    order: super::JobOrder,
}

impl Brancher for StartOnly<'_> {
    fn select(&mut self, store: &Store) -> Option<Decision> {
        let idx: Vec<usize> = (0..self.svars.len()).collect();
        let k = select_job(
            store,
            &idx,
            |&k| self.svars[k],
            |&k| self.priorities[k],
            |st, &k| !st.is_fixed(self.svars[k]),
            self.order,
        )?;
        fix_start(store, self.svars[*k])
    }
}

pub(crate) fn solve(p: &Prepared, cfg: &DispatchConfig, started: Instant) -> DispatchDecision {
    let mut stats = DispatchStats::new(DispatcherKind::Hcp19);
    stats.selected = p.jobs.len();
    stats.vars = p.jobs.len();
    stats.iterations = 0;
    let mut excluded = vec![false; p.jobs.len()];
    let limits = cfg.limits(started);

    loop {
        stats.iterations += 1;
        let mut m = Model::new();
        let mut consts = Consts::default();
        let lo: Vec<i64> = excluded.iter().map(|&e| if e { p.t + 1 } else { p.t }).collect();
        let svars = start_vars(&mut m, &lo, p.eoh + 1);
        post_pooled_cumulatives(&mut m, p, &svars, &mut consts);
        m.minimize(objective_terms(&p.jobs, &svars));
        stats.propagators = m.num_propagators();
        let mut brancher = StartOnly {
            svars: &svars,
            priorities: p.jobs.iter().map(|j| j.priority).collect(),
            order: cfg.job_order,
        };
        let out = m.solve(&mut brancher, &limits);
        stats.absorb(&out.stats);
        stats.status = out.status;
        let Some(sol) = out.solution else {
            return p.fallback(cfg, stats, started);
        };
        let mut starts: Vec<i64> = svars.iter().map(|&v| sol.value(v)).collect();

        let mut occ = Occupancy::with_running(p.system, &p.running);
        let mut allocations = Vec::new();
        let mut failed = false;
        for (k, j) in p.jobs.iter().enumerate() {
            if starts[k] != p.t {
                continue;
            }
            match occ.place_job(j, |o, d| o.best_fit_node(d)) {
                Some(segments) => allocations.push(Allocation {
                    job_id: j.id,
                    start: p.t,
                    duration: j.d,
                    segments,
                }),
                None => {
                    excluded[k] = true;
                    failed = true;
                }
            }
        }
        let out_of_time = limits.deadline.is_some_and(|d| Instant::now() >= d);
        if !failed || stats.iterations >= cfg.hcp_max_iterations || out_of_time {
            // jobs still without room wait for the next cycle
            for (k, s) in starts.iter_mut().enumerate() {
                if *s == p.t && !allocations.iter().any(|a| a.job_id == p.jobs[k].id) {
                    *s = p.t + 1;
                }
            }
            if failed {
                stats.status = match stats.status {
                    SolveStatus::Optimal => SolveStatus::Feasible,
                    s => s,
                };
            }
            let unit_nodes = p
                .jobs
                .iter()
                .map(|j| match allocations.iter().find(|a| a.job_id == j.id) {
                    Some(a) => a.unit_nodes(p.system).into_iter().flatten().collect(),
                    None => Vec::new(),
                })
                .collect();
            return p.finish(cfg, starts, unit_nodes, allocations, stats, started);
        }
    }
}
