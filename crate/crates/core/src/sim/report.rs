//! Per-job and per-invocation records and their CSV forms.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::time::Duration;

use crate::cp::SolveStatus;
use crate::dispatch::{DispatcherKind, Fallback};
use crate::workload::PredictorMode;

#[derive(Debug, Clone, PartialEq)]
pub struct JobOutcome {
    pub job_id: u64,
    pub user_id: i64,
    pub q: i64,
    pub rn: i64,
    pub start: i64,
    pub end: i64,
    pub d_real: i64,
    /// Prediction made at arrival.
    pub d_expected: i64,
    pub wait: i64,
    /// `(wait + run) / run` with the time actually run.
    pub slowdown: f64,
    pub killed: bool,
}

#[derive(Debug, Clone)]
pub struct Invocation {
    pub index: usize,
    pub t: i64,
    pub queued: usize,
    pub running: usize,
    pub selected: usize,
    pub dispatched: usize,
    pub vars: usize,
    pub propagators: usize,
    pub decisions: u64,
    pub fails: u64,
    pub status: SolveStatus,
    pub iterations: u32,
    pub fallback: Option<Fallback>,
    pub elapsed: Duration,
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    /// Did not finish; the reason is kept for the log.
    Dnf(String),
}

#[derive(Debug, Clone)]
pub struct SimReport {
    pub dispatcher: DispatcherKind,
    pub predictor: PredictorMode,
    /// Finished jobs by id.
    pub jobs: Vec<JobOutcome>,
    /// Jobs that can never fit the machine.
    pub rejected: Vec<u64>,
    pub invocations: Vec<Invocation>,
    pub events: Vec<String>,
    pub outcome: Outcome,
    pub wall: Duration,
    /// Allocation checks passed.
    pub sweeps: u64,
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

impl SimReport {
    pub fn new(dispatcher: DispatcherKind, predictor: PredictorMode) -> Self {
        SimReport {
            dispatcher,
            predictor,
            jobs: Vec::new(),
            rejected: Vec::new(),
            invocations: Vec::new(),
            events: Vec::new(),
            outcome: Outcome::Completed,
            wall: Duration::ZERO,
            sweeps: 0,
        }
    }

    pub fn finished(&self) -> bool {
        self.outcome == Outcome::Completed
    }

    pub fn slowdown_stats(&self) -> (f64, f64) {
        mean_sd(self.jobs.iter().map(|j| j.slowdown))
    }

    pub fn wait_stats(&self) -> (f64, f64) {
        mean_sd(self.jobs.iter().map(|j| j.wait as f64))
    }

    pub fn avg_slowdown(&self) -> f64 {
        self.slowdown_stats().0
    }

    pub fn avg_dispatch_ms(&self) -> f64 {
        mean_sd(self.invocations.iter().map(|i| i.elapsed.as_secs_f64() * 1000.0)).0
    }

    pub fn fallbacks(&self) -> usize {
        self.invocations.iter().filter(|i| i.fallback.is_some()).count()
    }

    /// Per-job rows and a closing aggregate row; no timing data.
    pub fn write_jobs_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "job_id,user_id,q,rn,start,end,d_real,d_expected,wait,slowdown,killed")?;
        for j in &self.jobs {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{:.6},{}",
                j.job_id, j.user_id, j.q, j.rn, j.start, j.end, j.d_real, j.d_expected, j.wait, j.slowdown, j.killed as u8
            )?;
        }
        let (sd_avg, _) = self.slowdown_stats();
        let (w_avg, _) = self.wait_stats();
        writeln!(w, "all,,,,,,,,{w_avg:.6},{sd_avg:.6},")
    }

    pub fn write_events(&self, mut w: impl Write) -> io::Result<()> {
        for e in &self.events {
            writeln!(w, "{e}")?;
        }
        if let Outcome::Dnf(why) = &self.outcome {
            writeln!(w, "dnf {why}")?;
        }
        Ok(())
    }

    pub const SUMMARY_HEADER: &'static str =
        "dispatcher,predictor,avg_dispatch_ms,total_sim_s,avg_slowdown,sd_slowdown,avg_wait_s,sd_wait_s";

    /// Summary row; an unfinished run shows `inf` in every measure.
    pub fn summary_row(&self) -> String {
        let mut s = format!("{},{}", self.dispatcher, self.predictor);
        if self.finished() {
            let (sl, sl_sd) = self.slowdown_stats();
            let (wt, wt_sd) = self.wait_stats();
            let _ = write!(
                s,
                ",{:.3},{:.3},{sl:.4},{sl_sd:.4},{wt:.2},{wt_sd:.2}",
                self.avg_dispatch_ms(),
                self.wall.as_secs_f64()
            );
        } else {
            s.push_str(",inf,inf,inf,inf,inf,inf");
        }
        s
    }

    pub fn write_summary_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "{}", Self::SUMMARY_HEADER)?;
        writeln!(w, "{}", self.summary_row())
    }

    pub fn write_invocations_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(
            w,
            "index,t,queued,running,selected,dispatched,vars,propagators,decisions,fails,status,iterations,fallback,objective,elapsed_ms"
        )?;
        for i in &self.invocations {
            let fallback = match i.fallback {
                None => "",
                Some(Fallback::Idle) => "idle",
                Some(Fallback::Greedy) => "greedy",
            };
            let objective = i.objective.map(|o| format!("{o:.6}")).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{:?},{},{},{},{:.3}",
                i.index,
                i.t,
                i.queued,
                i.running,
                i.selected,
                i.dispatched,
                i.vars,
                i.propagators,
                i.decisions,
                i.fails,
                i.status,
                i.iterations,
                fallback,
                objective,
                i.elapsed.as_secs_f64() * 1000.0
            )?;
        }
        Ok(())
    }
}
