//! Joint scheduling and allocation over flattened resource positions.
//!
//! Every unit of a job gets one position variable per requested resource
//! type; a unit is a box of height `q` at that position spanning the job's
//! run. Boxes of one resource type may not overlap, and the node maps tie
//! the positions of one unit to a single node. The number of variables does
//! not depend on the size of the machine.

use std::collections::HashMap;
use std::rc::Rc;
use std::time::Instant;

use crate::cp::propagators::{
    AllDifferent, ConstArray, Cumulative, CumulativeTask, Diffn, DiffnBox, ElementEq, ElementTerm,
};
use crate::cp::{Brancher, Decision, Domain, Model, SolveStatus, Store, VarId};
use crate::system::{Allocation, NodeId, Segment};

use super::nodefit::{NodeFit, OtherBox};
use super::shared::{fix_start, post_pooled_cumulatives, select_job, start_vars, Consts};
use super::{
    objective_terms, DispatchConfig, DispatchDecision, DispatchStats, DispatcherKind, JobOrder, Prepared,
    WithinNode,
};

#[derive(Debug, Clone, Copy)]
pub(crate) struct YVar {
    pub r: usize,
    pub unit: usize,
    pub q: i64,
    pub var: VarId,
}

#[derive(Debug, Clone)]
pub(crate) struct Pcp20Job {
    pub s: VarId,
    /// Ordered by resource, then unit.
    pub ys: Vec<YVar>,
    pub priority: num_rational::Ratio<i64>,
}

pub struct Pcp20Model {
    pub model: Model,
    pub(crate) jobs: Vec<Pcp20Job>,
    /// Start and position variables; the fixed helpers for running jobs are not counted.
    pub decision_vars: usize,
}

/// Positions whose block of `q` cells passes the same-node check.
fn within_node_domain(p: &Prepared, r: usize, q: i64, mode: WithinNode) -> Domain {
    let reach = match mode {
        WithinNode::Exact => q - 1,
        WithinNode::Literal => q,
    };
    let intervals: Vec<(i64, i64)> = p
        .system
        .nodes()
        .filter_map(|n| p.system.node_range(n, r))
        .filter_map(|(a, b)| (a <= b - reach).then_some((a, b - reach)))
        .collect();
    if intervals.is_empty() {
        // no legal block; the same-node constraint rejects this lone value
        Domain::singleton(1)
    } else {
        Domain::from_intervals(intervals)
    }
}

pub(crate) fn build(p: &Prepared, cfg: &DispatchConfig) -> Pcp20Model {
    let mut m = Model::new();
    let mut consts = Consts::default();
    let sys = p.system;
    let nr = sys.num_resources();

    let svars = start_vars(&mut m, &vec![p.t; p.jobs.len()], p.eoh);
    let mut decision_vars = svars.len();
    let mut domains: HashMap<(usize, i64), Domain> = HashMap::new();
    let mut jobs = Vec::with_capacity(p.jobs.len());
    for (j, &s) in p.jobs.iter().zip(&svars) {
        let mut ys = Vec::new();
        for r in j.requested() {
            let q = j.unit[r];
            let dom = domains
                .entry((r, q))
                .or_insert_with(|| within_node_domain(p, r, q, cfg.within_node))
                .clone();
            for unit in 0..j.rn as usize {
                ys.push(YVar { r, unit, q, var: m.new_var(dom.clone()) });
            }
        }
        decision_vars += ys.len();
        jobs.push(Pcp20Job { s, ys, priority: j.priority });
    }

    let maps: Vec<Option<Rc<ConstArray>>> = (0..nr)
        .map(|r| {
            jobs.iter()
                .any(|j| j.ys.iter().any(|y| y.r == r))
                .then(|| Rc::new(ConstArray::new(sys.map(r).to_vec())))
        })
        .collect();
    let t_var = consts.get(&mut m, p.t);
    // per resource: every box with its owning queued job, if any
    let mut all_boxes: Vec<Vec<(Option<usize>, OtherBox)>> = vec![Vec::new(); nr];

    for r in 0..nr {
        let Some(map) = &maps[r] else { continue };
        // non-overlap in time x position, running jobs as fixed boxes
        let mut boxes = Vec::new();
        let mut position_tasks = Vec::new();
        for (k, (qj, j)) in p.jobs.iter().zip(&jobs).enumerate() {
            for y in j.ys.iter().filter(|y| y.r == r) {
                boxes.push(DiffnBox::new(j.s, qj.d, y.var, y.q));
                position_tasks.push(CumulativeTask::new(y.var, y.q, qj.d));
                all_boxes[r].push((Some(k), OtherBox { x: j.s, len: qj.d, y: y.var, q: y.q }));
            }
        }
        for rj in &p.running {
            for seg in rj.segments.iter().filter(|s| s.r == r) {
                let y = consts.get(&mut m, seg.y);
                boxes.push(DiffnBox::new(t_var, rj.residual, y, seg.q));
                position_tasks.push(CumulativeTask::new(y, seg.q, rj.residual));
                all_boxes[r].push((None, OtherBox { x: t_var, len: rj.residual, y, q: seg.q }));
            }
        }
        m.post(Diffn::new(boxes));
        // the same boxes seen along the position axis
        m.post(Cumulative::new(position_tasks, p.eoh - p.t));

        for j in &jobs {
            let ys: Vec<&YVar> = j.ys.iter().filter(|y| y.r == r).collect();
            let offset = match cfg.within_node {
                WithinNode::Exact => ys.first().map_or(0, |y| y.q - 1),
                WithinNode::Literal => ys.first().map_or(0, |y| y.q),
            };
            for y in &ys {
                m.post(ElementEq::new(
                    ElementTerm::new(map.clone(), 1, y.var, 0),
                    ElementTerm::new(map.clone(), 1, y.var, offset),
                ));
            }
            if ys.len() > 1 {
                m.post(AllDifferent::new(ys.iter().map(|y| y.var).collect()));
            }
        }
    }
    post_pooled_cumulatives(&mut m, p, &svars, &mut consts);

    // all resources of a unit on one node
    for j in &jobs {
        let units = j.ys.iter().map(|y| y.unit + 1).max().unwrap_or(0);
        for unit in 0..units {
            let chain: Vec<&YVar> = j.ys.iter().filter(|y| y.unit == unit).collect();
            for w in chain.windows(2) {
                m.post(ElementEq::new(
                    ElementTerm::new(maps[w[0].r].clone().unwrap(), 1, w[0].var, 0),
                    ElementTerm::new(maps[w[1].r].clone().unwrap(), 1, w[1].var, 0),
                ));
            }
        }
    }

    // earliest start at which the units can find room among fixed boxes
    for (k, (qj, j)) in p.jobs.iter().zip(&jobs).enumerate() {
        let needs = qj
            .requested()
            .map(|r| {
                let others = all_boxes[r].iter().filter(|b| b.0 != Some(k)).map(|b| b.1).collect();
                (r, qj.unit[r], others)
            })
            .collect();
        m.post(NodeFit::new(sys, j.s, qj.d, qj.rn, needs));
    }

    m.minimize(objective_terms(&p.jobs, &svars));
    Pcp20Model { model: m, jobs, decision_vars }
}

/// Public entry point used by tools that inspect the model.
pub fn build_pcp20(inst: &super::DispatchInstance, cfg: &DispatchConfig) -> Pcp20Model {
    build(&super::prepare(inst, cfg), cfg)
}

/// Job by job: start at the earliest time, then the position with the
/// smallest domain at its largest value.
pub(crate) struct Pcp20Brancher<'a> {
    pub jobs: &'a [Pcp20Job],
    pub order: JobOrder,
}

impl Brancher for Pcp20Brancher<'_> {
    fn select(&mut self, store: &Store) -> Option<Decision> {
        let job = select_job(
            store,
            self.jobs,
            |j| j.s,
            |j| j.priority,
            |st, j| !st.is_fixed(j.s) || j.ys.iter().any(|y| !st.is_fixed(y.var)),
            self.order,
        )?;
        if let Some(d) = fix_start(store, job.s) {
            return Some(d);
        }
        let y = job
            .ys
            .iter()
            .filter(|y| !store.is_fixed(y.var))
            .min_by_key(|y| store.dom(y.var).size())?;
        Some(Decision {
            var: y.var,
            value: store.max(y.var),
        })
    }
}

pub(crate) fn solve(p: &Prepared, cfg: &DispatchConfig, started: Instant) -> DispatchDecision {
    let mut built = build(p, cfg);
    let mut stats = DispatchStats::new(DispatcherKind::Pcp20);
    stats.selected = p.jobs.len();
    stats.vars = built.decision_vars;
    stats.propagators = built.model.num_propagators();
    let mut brancher = Pcp20Brancher {
        jobs: &built.jobs,
        order: cfg.job_order,
    };
    let out = built.model.solve(&mut brancher, &cfg.limits(started));
    stats.absorb(&out.stats);
    stats.status = out.status;
    let Some(sol) = out.solution else {
        return p.fallback(cfg, stats, started);
    };
    let starts: Vec<i64> = built.jobs.iter().map(|j| sol.value(j.s)).collect();
    let allocations = p
        .jobs
        .iter()
        .zip(&built.jobs)
        .zip(&starts)
        .filter(|(_, &s)| s == p.t)
        .map(|((qj, j), _)| Allocation {
            job_id: qj.id,
            start: p.t,
            duration: qj.d,
            segments: j
                .ys
                .iter()
                .map(|y| Segment {
                    unit: y.unit,
                    r: y.r,
                    y: sol.value(y.var),
                    q: y.q,
                })
                .collect(),
        })
        .collect();
    let unit_nodes = built
        .jobs
        .iter()
        .map(|j| {
            let units = j.ys.iter().map(|y| y.unit + 1).max().unwrap_or(0);
            (0..units)
                .map(|u| {
                    let y = j.ys.iter().find(|y| y.unit == u).expect("unit has a position");
                    p.system.map(y.r)[(sol.value(y.var) - 1) as usize] as NodeId
                })
                .collect()
        })
        .collect();
    debug_assert!(matches!(out.status, SolveStatus::Optimal | SolveStatus::Feasible));
    p.finish(cfg, starts, unit_nodes, allocations, stats, started)
}
