//! Job records, trace input and runtime prediction.

mod predictor;
mod swf;
mod synth;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::system::SystemModel;

pub use predictor::{Predictor, PredictorMode, DEFAULT_DURATION};
pub use swf::{parse_swf, render_swf, SwfOptions, SwfStats};
pub use synth::{generate, SynthConfig};

#[derive(Debug, thiserror::Error)]
pub enum WorkloadError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Json { line: usize, msg: String },
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("job {job}: {msg}")]
    Job { job: u64, msg: String },
}

/// One user request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobRecord {
    #[serde(rename = "id")]
    pub job_id: u64,
    #[serde(rename = "user")]
    pub user_id: i64,
    /// Arrival time in seconds.
    pub q: i64,
    /// Number of identical units (nodes).
    pub rn: i64,
    /// Total demand per resource type, split evenly over the units.
    pub req: BTreeMap<String, i64>,
    pub d_real: i64,
    /// Filled by the predictor on arrival.
    #[serde(default = "one")]
    pub d_expected: i64,
    /// Wall time requested by the user, if the trace has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requested_time: Option<i64>,
}

fn one() -> i64 {
    1
}

impl JobRecord {
    /// Rounds each demand up to a multiple of `rn` and clamps durations to at least 1.
    pub fn normalize(&mut self) {
        self.rn = self.rn.max(1);
        for v in self.req.values_mut() {
            *v = (*v).max(0);
            *v = (*v + self.rn - 1) / self.rn * self.rn;
        }
        self.req.retain(|_, v| *v > 0);
        self.d_real = self.d_real.max(1);
        self.d_expected = self.d_expected.max(1);
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    /// Per-unit demand indexed by the system's resource order.
    pub fn unit_demand(&self, system: &SystemModel) -> Result<Vec<i64>, WorkloadError> {
        let mut out = vec![0; system.num_resources()];
        for (name, &total) in &self.req {
            let r = system.resource_index(name).ok_or_else(|| WorkloadError::Job {
                job: self.job_id,
                msg: format!("unknown resource type '{name}'"),
            })?;
            out[r] = (total + self.rn - 1) / self.rn;
        }
        Ok(out)
    }

    /// Whether the job fits an otherwise empty system.
    pub fn fits(&self, system: &SystemModel) -> bool {
        let Ok(unit) = self.unit_demand(system) else {
            return false;
        };
        let slots: i64 = system
            .nodes()
            .map(|n| units_on_node(system, n, &unit, self.rn))
            .sum();
        slots >= self.rn
    }
}

/// How many units with per-unit demand `unit` fit on an empty node, capped at `rn`.
pub fn units_on_node(system: &SystemModel, n: usize, unit: &[i64], rn: i64) -> i64 {
    unit.iter()
        .enumerate()
        .filter(|&(_, &q)| q > 0)
        .map(|(r, &q)| system.cap(n, r) / q)
        .fold(rn, i64::min)
}

/// Reads a trace as JSON lines, one job per line; blank lines are skipped.
pub fn read_jsonl(reader: impl BufRead) -> Result<Vec<JobRecord>, WorkloadError> {
    let mut jobs = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let job: JobRecord = serde_json::from_str(&line).map_err(|e| WorkloadError::Json {
            line: k + 1,
            msg: e.to_string(),
        })?;
        jobs.push(job.normalized());
    }
    Ok(jobs)
}

pub fn write_jsonl(mut w: impl Write, jobs: &[JobRecord]) -> std::io::Result<()> {
    for j in jobs {
        serde_json::to_writer(&mut w, j)?;
        writeln!(w)?;
    }
    Ok(())
}

/// Loads a trace by extension: `.swf` as SWF, anything else as JSON lines.
pub fn load_trace(path: &Path, swf: &SwfOptions) -> Result<(Vec<JobRecord>, Option<SwfStats>), WorkloadError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("swf")) {
        let (jobs, stats) = parse_swf(file, swf)?;
        Ok((jobs, Some(stats)))
    } else {
        Ok((read_jsonl(file)?, None))
    }
}

/// Sorts by arrival then id and keeps the first `limit` jobs.
pub fn prefix(mut jobs: Vec<JobRecord>, limit: Option<usize>) -> Vec<JobRecord> {
    jobs.sort_by_key(|j| (j.q, j.job_id));
    if let Some(n) = limit {
        jobs.truncate(n);
    }
    jobs
}
