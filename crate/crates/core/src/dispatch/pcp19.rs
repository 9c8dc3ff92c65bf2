//! Node-level allocation model: one 0/1 variable per (job, node, unit slot).
//!
//! A job gets `rn` slots in total, and every (node, resource) pair is a
//! cumulative resource whose tasks are present only when their slot is
//! taken. Concrete positions are chosen after the solve, lowest free first.

use std::time::Instant;

use num_rational::Ratio;

use crate::cp::propagators::{Cumulative, CumulativeTask, SumEq};
use crate::cp::{Brancher, Decision, Domain, Model, Store, VarId};
use crate::system::{Allocation, NodeId, SystemModel};
use crate::workload::units_on_node;

use super::alloc::Occupancy;
use super::nodefit::{CountJob, NodeCount};
use super::shared::{fix_start, post_pooled_cumulatives, select_job, start_vars, Consts};
use super::{objective_terms, DispatchConfig, DispatchDecision, DispatchStats, DispatcherKind, JobOrder, Prepared};

/// Unit slots of a job on node `n`: how many units fit on the empty node, at most `rn`.
pub fn p_in(system: &SystemModel, n: NodeId, unit: &[i64], rn: i64) -> i64 {
    units_on_node(system, n, unit, rn)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct XVar {
    pub node: NodeId,
    pub var: VarId,
}

#[derive(Debug, Clone)]
pub(crate) struct Pcp19Job {
    pub s: VarId,
    pub d: i64,
    pub unit: Vec<i64>,
    pub xs: Vec<XVar>,
    pub priority: Ratio<i64>,
}

pub struct Pcp19Model {
    pub model: Model,
    pub(crate) jobs: Vec<Pcp19Job>,
    /// Start and slot variables; fixed helpers are not counted.
    pub decision_vars: usize,
    /// Per node and resource, what running jobs hold and until when.
    pub(crate) running_load: Vec<Vec<(i64, usize, i64)>>,
}

pub(crate) fn build(p: &Prepared) -> Pcp19Model {
    let sys = p.system;
    let nr = sys.num_resources();
    let nn = sys.num_nodes();
    let mut m = Model::new();
    let mut consts = Consts::default();

    let svars = start_vars(&mut m, &vec![p.t; p.jobs.len()], p.eoh);
    let mut decision_vars = svars.len();
    let mut jobs = Vec::with_capacity(p.jobs.len());
    for (j, &s) in p.jobs.iter().zip(&svars) {
        let mut xs = Vec::new();
        for n in sys.nodes() {
            for _ in 0..p_in(sys, n, &j.unit, j.rn) {
                xs.push(XVar {
                    node: n,
                    var: m.new_var(Domain::interval(0, 1)),
                });
            }
        }
        decision_vars += xs.len();
        m.post(SumEq::new(xs.iter().map(|x| x.var).collect(), j.rn));
        jobs.push(Pcp19Job {
            s,
            d: j.d,
            unit: j.unit.clone(),
            xs,
            priority: j.priority,
        });
    }
    post_pooled_cumulatives(&mut m, p, &svars, &mut consts);

    // running usage per node: (end, resource, amount)
    let mut running_load: Vec<Vec<(i64, usize, i64)>> = vec![Vec::new(); nn];
    for rj in &p.running {
        let mut per_node = vec![vec![0i64; nr]; nn];
        for seg in &rj.segments {
            for pos in seg.y..=seg.last() {
                let n = sys.map(seg.r)[(pos - 1) as usize] as usize;
                per_node[n - 1][seg.r] += 1;
            }
        }
        for (n, row) in per_node.iter().enumerate() {
            for (r, &amt) in row.iter().enumerate() {
                if amt > 0 {
                    running_load[n].push((p.t + rj.residual, r, amt));
                }
            }
        }
    }

    let t_var = consts.get(&mut m, p.t);
    for n in sys.nodes() {
        for r in 0..nr {
            let mut tasks = Vec::new();
            for j in &jobs {
                let q = j.unit[r];
                if q == 0 {
                    continue;
                }
                for x in j.xs.iter().filter(|x| x.node == n) {
                    tasks.push(CumulativeTask::optional(j.s, j.d, q, x.var));
                }
            }
            if tasks.is_empty() {
                continue;
            }
            for &(end, rr, amt) in &running_load[n - 1] {
                if rr == r {
                    tasks.push(CumulativeTask::new(t_var, end - p.t, amt));
                }
            }
            m.post(Cumulative::new(tasks, sys.cap(n, r)));
        }
    }

    // redundant: starts skip times where too few nodes have room
    let count_jobs = jobs
        .iter()
        .zip(&p.jobs)
        .map(|(j, pj)| {
            let mut slots = vec![0; nn];
            for x in &j.xs {
                slots[x.node - 1] += 1;
            }
            CountJob {
                s: j.s,
                d: j.d,
                rn: pj.rn,
                unit: j.unit.clone(),
                xs: j.xs.iter().map(|x| (x.node, x.var)).collect(),
                slots,
            }
        })
        .collect();
    m.post(NodeCount::new(sys, p.t, &running_load, count_jobs));

    m.minimize(objective_terms(&p.jobs, &svars));
    Pcp19Model {
        model: m,
        jobs,
        decision_vars,
        running_load,
    }
}

/// Public entry point used by tools that inspect the model.
pub fn build_pcp19(inst: &super::DispatchInstance, cfg: &DispatchConfig) -> Pcp19Model {
    build(&super::prepare(inst, cfg))
}

/// Job by job: earliest start, then one unit at a time on the fullest node
/// that still fits it.
pub(crate) struct Pcp19Brancher<'a> {
    pub system: &'a SystemModel,
    pub jobs: &'a [Pcp19Job],
    pub running_load: &'a [Vec<(i64, usize, i64)>],
    pub t: i64,
    pub order: JobOrder,
}

impl Pcp19Brancher<'_> {
    // free capacity of n over [s, s + d) assuming every overlapping holder overlaps everywhere
    fn free_on(&self, store: &Store, job: &Pcp19Job, n: NodeId, s: i64) -> Vec<i64> {
        let nr = self.system.num_resources();
        let mut free: Vec<i64> = (0..nr).map(|r| self.system.cap(n, r)).collect();
        let end = s + job.d;
        for &(e, r, amt) in &self.running_load[n - 1] {
            if self.t < end && s < e {
                free[r] -= amt;
            }
        }
        for other in self.jobs {
            if !store.is_fixed(other.s) {
                continue;
            }
            let os = store.min(other.s);
            if !(os < end && s < os + other.d) {
                continue;
            }
            for x in other.xs.iter().filter(|x| x.node == n) {
                if store.min(x.var) == 1 {
                    for r in 0..nr {
                        free[r] -= other.unit[r];
                    }
                }
            }
        }
        free
    }
}

impl Brancher for Pcp19Brancher<'_> {
    fn select(&mut self, store: &Store) -> Option<Decision> {
        let job = select_job(
            store,
            self.jobs,
            |j| j.s,
            |j| j.priority,
            |st, j| !st.is_fixed(j.s) || j.xs.iter().any(|x| !st.is_fixed(x.var)),
            self.order,
        )?;
        if let Some(d) = fix_start(store, job.s) {
            return Some(d);
        }
        let s = store.min(job.s);
        let scarce = super::alloc::scarcest(self.system, &job.unit);
        let mut best: Option<(VarId, i64, i64)> = None;
        let mut last_node = 0;
        for x in job.xs.iter().filter(|x| !store.is_fixed(x.var)) {
            // further slots on the same node score the same
            if x.node == last_node {
                continue;
            }
            last_node = x.node;
            let free = self.free_on(store, job, x.node, s);
            if !free.iter().zip(&job.unit).all(|(f, q)| f >= q) {
                continue;
            }
            let (slack, cap) = match scarce {
                Some(r) => (free[r] - job.unit[r], self.system.cap(x.node, r).max(1)),
                None => (0, 1),
            };
            let better = match best {
                None => true,
                Some((_, bs, bc)) => (slack as i128) * (bc as i128) < (bs as i128) * (cap as i128),
            };
            if better {
                best = Some((x.var, slack, cap));
            }
        }
        match best {
            Some((var, _, _)) => Some(Decision { var, value: 1 }),
            None => {
                let x = job.xs.iter().find(|x| !store.is_fixed(x.var))?;
                Some(Decision { var: x.var, value: 0 })
            }
        }
    }
}

pub(crate) fn solve(p: &Prepared, cfg: &DispatchConfig, started: Instant) -> DispatchDecision {
    let mut built = build(p);
    let mut stats = DispatchStats::new(DispatcherKind::Pcp19);
    stats.selected = p.jobs.len();
    stats.vars = built.decision_vars;
    stats.propagators = built.model.num_propagators();
    let mut brancher = Pcp19Brancher {
        system: p.system,
        jobs: &built.jobs,
        running_load: &built.running_load,
        t: p.t,
        order: cfg.job_order,
    };
    let out = built.model.solve(&mut brancher, &cfg.limits(started));
    stats.absorb(&out.stats);
    stats.status = out.status;
    let Some(sol) = out.solution else {
        return p.fallback(cfg, stats, started);
    };
    let starts: Vec<i64> = built.jobs.iter().map(|j| sol.value(j.s)).collect();
    let mut occ = Occupancy::with_running(p.system, &p.running);
    let mut allocations = Vec::new();
    for ((qj, j), &s) in p.jobs.iter().zip(&built.jobs).zip(&starts) {
        if s != p.t {
            continue;
        }
        let mut segments = Vec::new();
        let chosen = j.xs.iter().filter(|x| sol.value(x.var) == 1);
        for (unit, x) in chosen.enumerate() {
            match occ.place_unit(x.node, unit, &qj.unit) {
                Some(segs) => segments.extend(segs),
                None => {
                    log::error!("job {} does not fit node {} at t={}", qj.id, x.node, p.t);
                    return p.fallback(cfg, stats, started);
                }
            }
        }
        allocations.push(Allocation {
            job_id: qj.id,
            start: p.t,
            duration: qj.d,
            segments,
        });
    }
    let unit_nodes = built
        .jobs
        .iter()
        .map(|j| j.xs.iter().filter(|x| sol.value(x.var) == 1).map(|x| x.node).collect())
        .collect();
    p.finish(cfg, starts, unit_nodes, allocations, stats, started)
}
