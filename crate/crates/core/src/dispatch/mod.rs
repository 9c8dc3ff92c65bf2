//! The three dispatchers and what they share: job selection, priorities,
//! the objective and decision assembly.

mod alloc;
mod hcp19;
mod instance;
mod nodefit;
mod pcp19;
mod pcp20;
mod priority;
mod shared;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use num_integer::Integer;
use num_rational::Ratio;

use crate::cp::propagators::MonotoneTerm;
use crate::cp::{Limits, SearchStats, SolveStatus, VarId};
use crate::system::{validate_allocation, Allocation, NodeId, Segment, SystemModel};
use crate::workload::units_on_node;

pub use alloc::{scarcest, Occupancy};
pub use instance::{DispatchInstance, InstanceError, RunningJob};
pub use pcp19::{build_pcp19, p_in, Pcp19Model};
pub use pcp20::{build_pcp20, Pcp20Model};
pub use priority::priority;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DispatcherKind {
    Pcp20,
    Pcp19,
    Hcp19,
}

impl DispatcherKind {
    pub const ALL: [DispatcherKind; 3] = [DispatcherKind::Pcp20, DispatcherKind::Pcp19, DispatcherKind::Hcp19];

    pub fn as_str(&self) -> &'static str {
        match self {
            DispatcherKind::Pcp20 => "pcp20",
            DispatcherKind::Pcp19 => "pcp19",
            DispatcherKind::Hcp19 => "hcp19",
        }
    }
}

impl FromStr for DispatcherKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pcp20" => Ok(DispatcherKind::Pcp20),
            "pcp19" => Ok(DispatcherKind::Pcp19),
            "hcp19" => Ok(DispatcherKind::Hcp19),
            _ => Err(format!("unknown dispatcher '{s}' (expected pcp20, pcp19 or hcp19)")),
        }
    }
}

impl fmt::Display for DispatcherKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Index used by the same-node check of a unit's positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WithinNode {
    /// Last covered position, `y + q - 1`.
    Exact,
    /// One past the block, `y + q`; forbids blocks that end a node's range.
    Literal,
}

/// Job selection order in the allocation-aware search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobOrder {
    /// Earliest possible start, then priority.
    StartFirst,
    /// Priority, then earliest possible start.
    PriorityFirst,
}

#[derive(Debug, Clone)]
pub struct DispatchConfig {
    /// Wall-clock budget per invocation, counted from before model construction.
    pub budget: Option<Duration>,
    /// Cap on search decisions per solve; makes results independent of machine speed.
    pub node_limit: Option<u64>,
    /// Largest number of queued jobs handed to the model.
    pub window: usize,
    pub within_node: WithinNode,
    pub job_order: JobOrder,
    /// On failure dispatch greedily instead of dispatching nothing.
    pub greedy_fallback: bool,
    pub hcp_max_iterations: u32,
}

impl Default for DispatchConfig {
    fn default() -> Self {
        DispatchConfig {
            budget: Some(Duration::from_millis(2000)),
            node_limit: None,
            window: 100,
            within_node: WithinNode::Exact,
            job_order: JobOrder::StartFirst,
            greedy_fallback: false,
            hcp_max_iterations: 10,
        }
    }
}

impl DispatchConfig {
    pub fn unlimited() -> Self {
        DispatchConfig {
            budget: None,
            ..Default::default()
        }
    }

    fn limits(&self, start: Instant) -> Limits {
        Limits {
            deadline: self.budget.map(|b| start + b),
            max_nodes: self.node_limit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fallback {
    /// Nothing dispatched this cycle.
    Idle,
    /// Greedy first-fit dispatch.
    Greedy,
}

#[derive(Debug, Clone)]
pub struct DispatchStats {
    pub dispatcher: DispatcherKind,
    /// Jobs handed to the model.
    pub selected: usize,
    /// Decision variables (constants excluded).
    pub vars: usize,
    pub propagators: usize,
    pub decisions: u64,
    pub fails: u64,
    pub propagations: u64,
    pub elapsed: Duration,
    pub status: SolveStatus,
    /// Scheduling/allocation rounds (1 unless the second stage failed).
    pub iterations: u32,
    pub fallback: Option<Fallback>,
}

impl DispatchStats {
    fn new(dispatcher: DispatcherKind) -> Self {
        DispatchStats {
            dispatcher,
            selected: 0,
            vars: 0,
            propagators: 0,
            decisions: 0,
            fails: 0,
            propagations: 0,
            elapsed: Duration::ZERO,
            status: SolveStatus::Optimal,
            iterations: 1,
            fallback: None,
        }
    }

    fn absorb(&mut self, s: &SearchStats) {
        self.decisions += s.decisions;
        self.fails += s.fails;
        self.propagations += s.propagations;
    }
}

/// Outcome of one invocation.
#[derive(Debug, Clone)]
pub struct DispatchDecision {
    pub t: i64,
    /// Scheduled start of every selected job, in selection order.
    pub starts: Vec<(u64, i64)>,
    /// Jobs starting at `t`, with concrete positions.
    pub allocations: Vec<Allocation>,
    /// Node of every unit of each job in `starts`, as planned by the model;
    /// empty for a job whose future placement the dispatcher does not decide.
    pub unit_nodes: Vec<Vec<NodeId>>,
    /// Sum of the selected jobs' slowdowns under `starts`.
    pub objective: Option<f64>,
    pub stats: DispatchStats,
}

impl DispatchDecision {
    pub fn is_fallback(&self) -> bool {
        self.stats.fallback.is_some()
    }

    pub fn start_of(&self, job: u64) -> Option<i64> {
        self.starts.iter().find(|s| s.0 == job).map(|s| s.1)
    }
}

/// A selected queued job in model terms.
#[derive(Debug, Clone)]
pub(crate) struct QJob {
    pub id: u64,
    pub q: i64,
    pub d: i64,
    pub rn: i64,
    /// Per-unit demand by resource index.
    pub unit: Vec<i64>,
    pub priority: Ratio<i64>,
}

impl QJob {
    pub fn requested(&self) -> impl Iterator<Item = usize> + '_ {
        self.unit.iter().enumerate().filter(|p| *p.1 > 0).map(|p| p.0)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct RJob {
    pub id: u64,
    pub residual: i64,
    pub segments: Vec<Segment>,
    /// Total held per resource.
    pub usage: Vec<i64>,
}

/// Instance reduced to what the models need.
pub(crate) struct Prepared<'a> {
    pub t: i64,
    pub system: &'a SystemModel,
    /// Selected jobs, most urgent first.
    pub jobs: Vec<QJob>,
    pub running: Vec<RJob>,
    /// Worst-case makespan end.
    pub eoh: i64,
}

/// Queued jobs in priority order (ties by id), keeping those that fit the
/// machine at all, up to `window`.
pub(crate) fn prepare<'a>(inst: &'a DispatchInstance, cfg: &DispatchConfig) -> Prepared<'a> {
    let system = inst.system.as_ref();
    let t = inst.t;
    let mut jobs: Vec<QJob> = inst
        .queued
        .iter()
        .filter_map(|j| {
            let unit = j.unit_demand(system).ok()?;
            let slots: i64 = system.nodes().map(|n| units_on_node(system, n, &unit, j.rn)).sum();
            (slots >= j.rn).then(|| QJob {
                id: j.job_id,
                q: j.q,
                d: j.d_expected.max(1),
                rn: j.rn,
                unit,
                priority: priority(t, j.q, j.d_expected),
            })
        })
        .collect();
    jobs.sort_by(|a, b| b.priority.cmp(&a.priority).then(a.id.cmp(&b.id)));
    jobs.truncate(cfg.window);
    let nr = system.num_resources();
    let running: Vec<RJob> = inst
        .running
        .iter()
        .map(|r| {
            let mut usage = vec![0; nr];
            for s in &r.segments {
                usage[s.r] += s.q;
            }
            RJob {
                id: r.job.job_id,
                residual: r.residual(t),
                segments: r.segments.clone(),
                usage,
            }
        })
        .collect();
    let eoh = t + jobs.iter().map(|j| j.d).sum::<i64>() + running.iter().map(|r| r.residual).sum::<i64>();
    Prepared {
        t,
        system,
        jobs,
        running,
        eoh,
    }
}

const SCALE_LIMIT: i64 = 10_000_000;
const ROUNDED_SCALE: i64 = 10_000;

/// Integer objective terms for `sum((s - q + d) / d)`. Scaled by the lcm of
/// the durations when that stays small (exact); otherwise each term is
/// scaled by a constant and rounded.
pub(crate) fn objective_terms(jobs: &[QJob], svars: &[VarId]) -> Vec<MonotoneTerm> {
    let mut l: i64 = 1;
    for j in jobs {
        l = l.lcm(&j.d);
        if l > SCALE_LIMIT {
            break;
        }
    }
    jobs.iter()
        .zip(svars)
        .map(|(j, &var)| {
            if l <= SCALE_LIMIT {
                MonotoneTerm {
                    var,
                    offset: j.d - j.q,
                    num: l / j.d,
                    den: 1,
                }
            } else {
                MonotoneTerm {
                    var,
                    offset: j.d - j.q,
                    num: ROUNDED_SCALE,
                    den: j.d,
                }
            }
        })
        .collect()
}

/// Sum of slowdowns `(s - q + d) / d` over the selected jobs.
pub(crate) fn slowdown_sum(jobs: &[QJob], starts: &[i64]) -> f64 {
    jobs.iter()
        .zip(starts)
        .map(|(j, &s)| (s - j.q + j.d) as f64 / j.d as f64)
        .sum()
}

impl Prepared<'_> {
    fn empty_decision(&self, kind: DispatcherKind, started: Instant) -> DispatchDecision {
        let mut stats = DispatchStats::new(kind);
        stats.elapsed = started.elapsed();
        DispatchDecision {
            t: self.t,
            starts: Vec::new(),
            allocations: Vec::new(),
            unit_nodes: Vec::new(),
            objective: Some(0.0),
            stats,
        }
    }

    /// No schedule: dispatch nothing, or first-fit greedily when enabled.
    fn fallback(&self, cfg: &DispatchConfig, mut stats: DispatchStats, started: Instant) -> DispatchDecision {
        let mut allocations = Vec::new();
        if cfg.greedy_fallback {
            let mut occ = Occupancy::with_running(self.system, &self.running);
            for j in &self.jobs {
                if let Some(segments) = occ.place_job(j, |o, d| o.first_fit_node(d)) {
                    allocations.push(Allocation {
                        job_id: j.id,
                        start: self.t,
                        duration: j.d,
                        segments,
                    });
                }
            }
            stats.fallback = Some(Fallback::Greedy);
        } else {
            stats.fallback = Some(Fallback::Idle);
        }
        stats.elapsed = started.elapsed();
        DispatchDecision {
            t: self.t,
            starts: allocations.iter().map(|a| (a.job_id, self.t)).collect(),
            unit_nodes: allocations.iter().map(|a| a.unit_nodes(self.system).into_iter().flatten().collect()).collect(),
            allocations,
            objective: None,
            stats,
        }
    }

    /// Checks decoded allocations against the running set and each other.
    fn check(&self, allocations: &[Allocation]) -> bool {
        let mut placed: Vec<Allocation> = self
            .running
            .iter()
            .map(|r| Allocation {
                job_id: r.id,
                start: self.t,
                duration: r.residual,
                segments: r.segments.clone(),
            })
            .collect();
        for a in allocations {
            if let Err(v) = validate_allocation(self.system, &placed, a) {
                log::error!("decoded allocation rejected at t={}: {v}", self.t);
                return false;
            }
            placed.push(a.clone());
        }
        true
    }

    fn finish(
        &self,
        cfg: &DispatchConfig,
        starts: Vec<i64>,
        unit_nodes: Vec<Vec<NodeId>>,
        allocations: Vec<Allocation>,
        mut stats: DispatchStats,
        started: Instant,
    ) -> DispatchDecision {
        if !self.check(&allocations) {
            return self.fallback(cfg, stats, started);
        }
        stats.elapsed = started.elapsed();
        DispatchDecision {
            t: self.t,
            objective: Some(slowdown_sum(&self.jobs, &starts)),
            starts: self.jobs.iter().map(|j| j.id).zip(starts).collect(),
            unit_nodes,
            allocations,
            stats,
        }
    }
}

/// Runs one dispatcher on an instance.
pub fn dispatch(kind: DispatcherKind, inst: &DispatchInstance, cfg: &DispatchConfig) -> DispatchDecision {
    let started = Instant::now();
    let p = prepare(inst, cfg);
    if p.jobs.is_empty() {
        return p.empty_decision(kind, started);
    }
    match kind {
        DispatcherKind::Pcp20 => pcp20::solve(&p, cfg, started),
        DispatcherKind::Pcp19 => pcp19::solve(&p, cfg, started),
        DispatcherKind::Hcp19 => hcp19::solve(&p, cfg, started),
    }
}

/// Decision-variable count of a dispatcher's model for this instance.
pub fn variable_count(kind: DispatcherKind, inst: &DispatchInstance, cfg: &DispatchConfig) -> usize {
    let p = prepare(inst, cfg);
    match kind {
        DispatcherKind::Pcp20 => pcp20::build(&p, cfg).decision_vars,
        DispatcherKind::Pcp19 => pcp19::build(&p).decision_vars,
        DispatcherKind::Hcp19 => p.jobs.len(),
    }
}
