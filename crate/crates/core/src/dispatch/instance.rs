//! Dispatch-time snapshot and its JSON form.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::system::{Allocation, Segment, SystemConfig, SystemError, SystemModel};
use crate::workload::JobRecord;

#[derive(Debug, thiserror::Error)]
pub enum InstanceError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("invalid instance: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    System(#[from] SystemError),
    #[error("running job {job}: unknown resource type '{resource}'")]
    UnknownResource { job: u64, resource: String },
}

/// A job already executing, with the positions it holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunningJob {
    pub job: JobRecord,
    pub s: i64,
    pub segments: Vec<Segment>,
}

impl RunningJob {
    /// Remaining time the dispatcher reserves from `t`; at least 1 even when
    /// the job has outlived its expected duration.
    pub fn residual(&self, t: i64) -> i64 {
        (self.s + self.job.d_expected - t).max(1)
    }
}

/// Everything a dispatcher sees at time `t`.
#[derive(Debug, Clone)]
pub struct DispatchInstance {
    pub t: i64,
    pub queued: Vec<JobRecord>,
    pub running: Vec<RunningJob>,
    pub system: Arc<SystemModel>,
}

impl DispatchInstance {
    pub fn new(t: i64, system: Arc<SystemModel>) -> Self {
        DispatchInstance {
            t,
            queued: Vec::new(),
            running: Vec::new(),
            system,
        }
    }

    /// Running jobs as allocations reserved for their residual time.
    pub fn running_allocations(&self) -> Vec<Allocation> {
        self.running
            .iter()
            .map(|r| Allocation {
                job_id: r.job.job_id,
                start: self.t,
                duration: r.residual(self.t),
                segments: r.segments.clone(),
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&InstanceFile::from_instance(self)).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        let file: InstanceFile = serde_json::from_str(text)?;
        file.into_instance()
    }

    pub fn save(&self, path: &Path) -> Result<(), InstanceError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, InstanceError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum SystemSpec {
    Preset(String),
    Inline(SystemConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentFile {
    unit: usize,
    r: String,
    y: i64,
    q: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunningFile {
    #[serde(flatten)]
    job: JobRecord,
    s: i64,
    allocation: Vec<SegmentFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    t: i64,
    queued: Vec<JobRecord>,
    running: Vec<RunningFile>,
    system: SystemSpec,
}

impl InstanceFile {
    fn from_instance(inst: &DispatchInstance) -> Self {
        let sys = &inst.system;
        let config = sys.config();
        let system = match config.name.as_deref().map(SystemConfig::preset) {
            Some(Ok(preset)) if &preset == config => SystemSpec::Preset(sys.name().to_string()),
            _ => SystemSpec::Inline(config.clone()),
        };
        InstanceFile {
            t: inst.t,
            queued: inst.queued.clone(),
            running: inst
                .running
                .iter()
                .map(|r| RunningFile {
                    job: r.job.clone(),
                    s: r.s,
                    allocation: r
                        .segments
                        .iter()
                        .map(|g| SegmentFile {
                            unit: g.unit,
                            r: sys.resources()[g.r].clone(),
                            y: g.y,
                            q: g.q,
                        })
                        .collect(),
                })
                .collect(),
            system,
        }
    }

    fn into_instance(self) -> Result<DispatchInstance, InstanceError> {
        let config = match self.system {
            SystemSpec::Preset(name) => SystemConfig::preset(&name)?,
            SystemSpec::Inline(c) => c,
        };
        let system = Arc::new(SystemModel::build(&config)?);
        let mut running = Vec::new();
        for r in self.running {
            let mut segments = Vec::new();
            for g in r.allocation {
                let idx = system
                    .resource_index(&g.r)
                    .ok_or_else(|| InstanceError::UnknownResource {
                        job: r.job.job_id,
                        resource: g.r.clone(),
                    })?;
                segments.push(Segment {
                    unit: g.unit,
                    r: idx,
                    y: g.y,
                    q: g.q,
                });
            }
            running.push(RunningJob {
                job: r.job,
                s: r.s,
                segments,
            });
        }
        Ok(DispatchInstance {
            t: self.t,
            queued: self.queued,
            running,
            system,
        })
    }
}
