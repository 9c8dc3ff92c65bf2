//! Expected-duration prediction.

use std::collections::BTreeMap;
use std::str::FromStr;

use super::JobRecord;

pub const DEFAULT_DURATION: i64 = 3600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PredictorMode {
    /// The real runtime.
    Oracle,
    /// Mean of the user's last two completed runtimes.
    LastTwo,
}

impl PredictorMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PredictorMode::Oracle => "oracle",
            PredictorMode::LastTwo => "last2",
        }
    }
}

impl FromStr for PredictorMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(PredictorMode::Oracle),
            "last2" | "last-two" => Ok(PredictorMode::LastTwo),
            _ => Err(format!("unknown predictor '{s}' (expected oracle or last2)")),
        }
    }
}

impl std::fmt::Display for PredictorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Predictor {
    mode: PredictorMode,
    default_duration: i64,
    // oldest first, at most two entries
    history: BTreeMap<i64, Vec<i64>>,
}

impl Predictor {
    pub fn new(mode: PredictorMode) -> Self {
        Self::with_default(mode, DEFAULT_DURATION)
    }

    pub fn with_default(mode: PredictorMode, default_duration: i64) -> Self {
        Predictor {
            mode,
            default_duration: default_duration.max(1),
            history: BTreeMap::new(),
        }
    }

    pub fn mode(&self) -> PredictorMode {
        self.mode
    }

    pub fn predict(&self, job: &JobRecord) -> i64 {
        let d = match self.mode {
            PredictorMode::Oracle => job.d_real,
            PredictorMode::LastTwo => match self.history.get(&job.user_id).map(Vec::as_slice) {
                Some([a, b]) => (a + b + 1) / 2,
                Some([a]) => *a,
                _ => job.requested_time.unwrap_or(self.default_duration),
            },
        };
        d.max(1)
    }

    /// Records a finished job's runtime for its user.
    pub fn record_completion(&mut self, user: i64, d_real: i64) {
        let buf = self.history.entry(user).or_default();
        if buf.len() == 2 {
            buf.remove(0);
        }
        buf.push(d_real);
    }

    pub fn history(&self, user: i64) -> &[i64] {
        self.history.get(&user).map(Vec::as_slice).unwrap_or(&[])
    }
}
