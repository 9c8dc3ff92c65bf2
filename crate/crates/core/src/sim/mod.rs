//! Event-driven replay of a workload trace against one dispatcher.
//!
//! Jobs run for their real duration; dispatchers only ever see predicted
//! durations. The wall time spent deciding is measured but never added to
//! the simulated clock.

mod report;
mod replay;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::dispatch::{dispatch, DispatchConfig, DispatchInstance, DispatcherKind, Fallback, RunningJob};
use crate::system::{validate_all, Allocation, SystemModel};
use crate::workload::{JobRecord, Predictor, PredictorMode};

pub use replay::{replay_instances, write_replay_csv, ReplayRow};
pub use report::{Invocation, JobOutcome, Outcome, SimReport};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("allocation check failed at t={t}: {msg}")]
    Violation { t: i64, msg: String },
    #[error("trace is not sorted by arrival (job {0})")]
    Unsorted(u64),
    #[error("duplicate job id {0}")]
    Duplicate(u64),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub dispatcher: DispatcherKind,
    pub predictor: PredictorMode,
    pub dispatch: DispatchConfig,
    /// Seconds between dispatcher invocations; 0 dispatches at every event.
    pub min_interval: i64,
    /// Seconds until a retry when jobs wait and nothing else is pending.
    pub retry_interval: i64,
    /// End jobs at their expected duration instead of their real one.
    pub strict_kill: bool,
    /// Consecutive idle fallbacks after which the run is declared unfinished.
    pub max_idle_fallbacks: Option<u32>,
    /// Wall-clock cap on the whole run.
    pub wall_clock_cap: Option<Duration>,
    /// Directory receiving one instance file per invocation.
    pub dump_dir: Option<PathBuf>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dispatcher: DispatcherKind::Pcp20,
            predictor: PredictorMode::Oracle,
            dispatch: DispatchConfig::default(),
            min_interval: 0,
            retry_interval: 60,
            strict_kill: false,
            max_idle_fallbacks: None,
            wall_clock_cap: None,
            dump_dir: None,
        }
    }
}

// completions sort before arrivals and retries at the same time
const COMPLETION: u8 = 0;
const RETRY: u8 = 1;

struct Running {
    job: JobRecord,
    s: i64,
    end: i64,
    alloc: Allocation,
    killed: bool,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    system: Arc<SystemModel>,
    predictor: Predictor,
    events: BinaryHeap<Reverse<(i64, u8, u64)>>,
    queue: Vec<JobRecord>,
    running: BTreeMap<u64, Running>,
    report: SimReport,
    last_dispatch: Option<i64>,
    idle_streak: u32,
    // invocations in a row that started nothing on an empty machine
    stalled: u32,
}

const MAX_STALLED: u32 = 1000;

/// Replays `trace` (sorted by arrival) on `system`.
pub fn run_simulation(trace: &[JobRecord], system: Arc<SystemModel>, cfg: &SimConfig) -> Result<SimReport, SimError> {
    let mut seen = std::collections::HashSet::new();
    for w in trace.windows(2) {
        if w[1].q < w[0].q {
            return Err(SimError::Unsorted(w[1].job_id));
        }
    }
    for j in trace {
        if !seen.insert(j.job_id) {
            return Err(SimError::Duplicate(j.job_id));
        }
    }
    if let Some(dir) = &cfg.dump_dir {
        std::fs::create_dir_all(dir)?;
    }
    let started = Instant::now();
    let mut sim = Sim {
        cfg,
        system: system.clone(),
        predictor: Predictor::new(cfg.predictor),
        events: BinaryHeap::new(),
        queue: Vec::new(),
        running: BTreeMap::new(),
        report: SimReport::new(cfg.dispatcher, cfg.predictor),
        last_dispatch: None,
        idle_streak: 0,
        stalled: 0,
    };
    let mut next_arrival = 0;
    loop {
        let t_event = sim.events.peek().map(|e| e.0 .0);
        let t_arrival = trace.get(next_arrival).map(|j| j.q);
        let t = match (t_event, t_arrival) {
            (None, None) => break,
            (Some(a), Some(b)) => a.min(b),
            (a, b) => a.or(b).unwrap(),
        };
        if cfg.wall_clock_cap.is_some_and(|cap| started.elapsed() > cap) {
            sim.report.outcome = Outcome::Dnf(format!("wall-clock cap reached at t={t}"));
            break;
        }
        let mut changed = false;
        let mut retry = false;
        while let Some(&Reverse((et, kind, id))) = sim.events.peek() {
            if et != t {
                break;
            }
            sim.events.pop();
            match kind {
                COMPLETION => {
                    sim.complete(t, id);
                    changed = true;
                }
                _ => retry = true,
            }
        }
        while next_arrival < trace.len() && trace[next_arrival].q == t {
            changed |= sim.arrive(t, &trace[next_arrival]);
            next_arrival += 1;
        }
        if sim.queue.is_empty() || !(changed || retry) {
            continue;
        }
        if let Some(last) = sim.last_dispatch {
            if t < last + cfg.min_interval {
                sim.schedule_retry(last + cfg.min_interval);
                continue;
            }
        }
        sim.dispatch_at(t)?;
        if let Some(limit) = cfg.max_idle_fallbacks {
            if sim.idle_streak >= limit {
                sim.report.outcome = Outcome::Dnf(format!("{limit} consecutive dispatch failures at t={t}"));
                break;
            }
        }
        if sim.stalled >= MAX_STALLED {
            sim.report.outcome = Outcome::Dnf(format!("no job could start on an idle machine (t={t})"));
            break;
        }
        let idle = next_arrival >= trace.len() && sim.events.is_empty();
        if !sim.queue.is_empty() && idle {
            sim.schedule_retry(t + cfg.retry_interval.max(1));
        }
    }
    sim.report.wall = started.elapsed();
    sim.report.jobs.sort_by_key(|j| j.job_id);
    if matches!(sim.report.outcome, Outcome::Completed) && !(sim.queue.is_empty() && sim.running.is_empty()) {
        sim.report.outcome = Outcome::Dnf("jobs left unfinished".into());
    }
    Ok(sim.report)
}

impl Sim<'_> {
    fn log(&mut self, line: String) {
        self.report.events.push(line);
    }

    fn schedule_retry(&mut self, at: i64) {
        if !self.events.iter().any(|e| e.0 .0 == at && e.0 .1 == RETRY) {
            self.events.push(Reverse((at, RETRY, 0)));
        }
    }

    fn arrive(&mut self, t: i64, job: &JobRecord) -> bool {
        if !job.fits(&self.system) {
            self.log(format!("{t} reject {}", job.job_id));
            self.report.rejected.push(job.job_id);
            return false;
        }
        let mut job = job.clone();
        job.d_expected = self.predictor.predict(&job);
        self.log(format!("{t} arrive {} expect={}", job.job_id, job.d_expected));
        self.queue.push(job);
        true
    }

    fn complete(&mut self, t: i64, id: u64) {
        let r = self.running.remove(&id).expect("completion of a running job");
        let run = r.end - r.s;
        self.predictor.record_completion(r.job.user_id, run);
        let wait = r.s - r.job.q;
        self.report.jobs.push(JobOutcome {
            job_id: id,
            user_id: r.job.user_id,
            q: r.job.q,
            rn: r.job.rn,
            start: r.s,
            end: r.end,
            d_real: r.job.d_real,
            d_expected: r.job.d_expected,
            wait,
            slowdown: (wait + run) as f64 / run as f64,
            killed: r.killed,
        });
        self.log(format!("{t} {} {id}", if r.killed { "kill" } else { "end" }));
    }

    fn snapshot(&self, t: i64) -> DispatchInstance {
        DispatchInstance {
            t,
            queued: self.queue.clone(),
            running: self
                .running
                .values()
                .map(|r| RunningJob {
                    job: r.job.clone(),
                    s: r.s,
                    segments: r.alloc.segments.clone(),
                })
                .collect(),
            system: self.system.clone(),
        }
    }

    fn dispatch_at(&mut self, t: i64) -> Result<(), SimError> {
        let inst = self.snapshot(t);
        let index = self.report.invocations.len();
        if let Some(dir) = &self.cfg.dump_dir {
            inst.save(&dir.join(format!("instance_{index:06}.json")))
                .map_err(|e| std::io::Error::other(e.to_string()))?;
        }
        let decision = dispatch(self.cfg.dispatcher, &inst, &self.cfg.dispatch);
        self.last_dispatch = Some(t);
        let st = &decision.stats;
        self.report.invocations.push(Invocation {
            index,
            t,
            queued: inst.queued.len(),
            running: inst.running.len(),
            selected: st.selected,
            dispatched: decision.allocations.len(),
            vars: st.vars,
            propagators: st.propagators,
            decisions: st.decisions,
            fails: st.fails,
            status: st.status,
            iterations: st.iterations,
            fallback: st.fallback,
            elapsed: st.elapsed,
            objective: decision.objective,
        });
        self.idle_streak = match st.fallback {
            Some(Fallback::Idle) => self.idle_streak + 1,
            _ => 0,
        };
        let fallback = match st.fallback {
            Some(Fallback::Idle) => " fallback=idle",
            Some(Fallback::Greedy) => " fallback=greedy",
            None => "",
        };
        self.log(format!(
            "{t} dispatch queued={} started={}{fallback}",
            inst.queued.len(),
            decision.allocations.len()
        ));

        for alloc in decision.allocations {
            let Some(k) = self.queue.iter().position(|j| j.job_id == alloc.job_id) else {
                return Err(SimError::Violation {
                    t,
                    msg: format!("job {} is not queued", alloc.job_id),
                });
            };
            let job = self.queue.remove(k);
            let killed = self.cfg.strict_kill && job.d_real > job.d_expected;
            let run = if killed { job.d_expected } else { job.d_real.max(1) };
            let nodes: Vec<String> = alloc
                .unit_nodes(&self.system)
                .iter()
                .map(|n| n.map_or("?".to_string(), |n| n.to_string()))
                .collect();
            self.log(format!("{t} start {} nodes={}", job.job_id, nodes.join(",")));
            self.events.push(Reverse((t + run, COMPLETION, job.job_id)));
            self.running.insert(
                job.job_id,
                Running {
                    s: t,
                    end: t + run,
                    alloc,
                    killed,
                    job,
                },
            );
        }
        self.stalled = if self.running.is_empty() { self.stalled + 1 } else { 0 };
        self.sweep(t)
    }

    // every running job against every other at this instant
    fn sweep(&mut self, t: i64) -> Result<(), SimError> {
        let now: Vec<Allocation> = self
            .running
            .values()
            .map(|r| Allocation {
                job_id: r.job.job_id,
                start: t,
                duration: 1,
                segments: r.alloc.segments.clone(),
            })
            .collect();
        validate_all(&self.system, &now).map_err(|v| SimError::Violation { t, msg: v.to_string() })?;
        for r in self.running.values() {
            if r.s < r.job.q {
                return Err(SimError::Violation {
                    t,
                    msg: format!("job {} started before its arrival", r.job.job_id),
                });
            }
        }
        self.report.sweeps += 1;
        Ok(())
    }
}
