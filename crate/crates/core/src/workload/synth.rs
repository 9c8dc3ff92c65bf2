//! Synthetic trace generator.
//!
//! Arrivals are Poisson. Each user has a typical short and a typical long
//! runtime; a job picks its class, then varies its user's typical runtime by
//! log-normal noise, so per-user history carries predictive signal.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};

use super::{JobRecord, WorkloadError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub jobs: usize,
    pub seed: u64,
    /// Mean seconds between arrivals.
    pub mean_interarrival: f64,
    pub users: usize,
    /// Share of jobs shorter than `short_max`.
    pub short_fraction: f64,
    pub short_min: i64,
    pub short_max: i64,
    pub long_max: i64,
    /// Sigma of the per-job log-normal noise around the user's typical runtime.
    pub duration_noise: f64,
    pub parallel_fraction: f64,
    pub max_nodes: i64,
    /// Largest per-unit core count.
    pub cores_per_unit: i64,
    pub gpu_fraction: f64,
    pub gpus_per_unit: i64,
    pub mic_fraction: f64,
    pub mics_per_unit: i64,
    /// Largest per-unit memory in GB; 0 omits memory demands.
    pub mem_per_unit: i64,
    /// Requested wall time is the real runtime times a factor in [1, this]; 0 omits it.
    pub requested_factor: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::eurora_like(1000, 1)
    }
}

impl SynthConfig {
    /// Eurora-like mix: mostly short serial jobs, a few GPU and MIC users.
    pub fn eurora_like(jobs: usize, seed: u64) -> Self {
        SynthConfig {
            jobs,
            seed,
            mean_interarrival: 40.0,
            users: 40,
            short_fraction: 0.93,
            short_min: 10,
            short_max: 3600,
            long_max: 6 * 3600,
            duration_noise: 0.3,
            parallel_fraction: 0.15,
            max_nodes: 4,
            cores_per_unit: 16,
            gpu_fraction: 0.1,
            gpus_per_unit: 2,
            mic_fraction: 0.05,
            mics_per_unit: 2,
            mem_per_unit: 16,
            requested_factor: 2.0,
        }
    }

    /// Half of the jobs ask for GPUs; pair with a system where few nodes carry them.
    pub fn gpu_scarce(jobs: usize, seed: u64) -> Self {
        SynthConfig {
            gpu_fraction: 0.5,
            mic_fraction: 0.0,
            ..Self::eurora_like(jobs, seed)
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, WorkloadError> {
        let c: SynthConfig = toml::from_str(text).map_err(|e| WorkloadError::Config(e.to_string()))?;
        c.check()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("generator config serializes")
    }

    pub fn check(&self) -> Result<(), WorkloadError> {
        let bad = |m: &str| Err(WorkloadError::Config(m.to_string()));
        let frac = |f: f64| (0.0..=1.0).contains(&f);
        if self.mean_interarrival.is_nan() || self.mean_interarrival <= 0.0 {
            return bad("mean_interarrival must be positive");
        }
        if self.users == 0 {
            return bad("users must be at least 1");
        }
        if !frac(self.short_fraction) || !frac(self.parallel_fraction) {
            return bad("fractions must lie in [0, 1]");
        }
        if !frac(self.gpu_fraction) || !frac(self.mic_fraction) || self.gpu_fraction + self.mic_fraction > 1.0 {
            return bad("gpu_fraction + mic_fraction must lie in [0, 1]");
        }
        if !(1 <= self.short_min && self.short_min < self.short_max && self.short_max < self.long_max) {
            return bad("need 1 <= short_min < short_max < long_max");
        }
        if self.max_nodes < 1 || self.cores_per_unit < 1 {
            return bad("max_nodes and cores_per_unit must be at least 1");
        }
        if self.gpus_per_unit < 1 || self.mics_per_unit < 1 || self.mem_per_unit < 0 {
            return bad("accelerator counts must be at least 1 and memory non-negative");
        }
        if self.duration_noise.is_nan() || self.duration_noise < 0.0 || !(self.requested_factor == 0.0 || self.requested_factor >= 1.0) {
            return bad("duration_noise must be >= 0 and requested_factor 0 or >= 1");
        }
        Ok(())
    }
}

fn log_uniform(rng: &mut impl Rng, lo: i64, hi: i64) -> f64 {
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    rng.random_range(a..b).exp()
}

/// Generates `config.jobs` jobs sorted by arrival, ids from 1.
pub fn generate(config: &SynthConfig) -> Result<Vec<JobRecord>, WorkloadError> {
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let typical: Vec<(f64, f64)> = (0..config.users)
        .map(|_| {
            (
                log_uniform(&mut rng, config.short_min, config.short_max),
                log_uniform(&mut rng, config.short_max, config.long_max),
            )
        })
        .collect();
    let gap = Exp::new(1.0 / config.mean_interarrival).map_err(|e| WorkloadError::Config(e.to_string()))?;
    let noise = LogNormal::new(0.0, config.duration_noise).map_err(|e| WorkloadError::Config(e.to_string()))?;
    let core_choices: Vec<i64> = [1, 2, 4, 8, 16, 32]
        .into_iter()
        .filter(|&c| c <= config.cores_per_unit)
        .chain(std::iter::once(config.cores_per_unit))
        .collect();

    let mut clock = 0.0;
    let mut jobs = Vec::with_capacity(config.jobs);
    for id in 1..=config.jobs as u64 {
        clock += gap.sample(&mut rng);
        let user = rng.random_range(0..config.users);
        let short = rng.random_bool(config.short_fraction);
        let (base, lo, hi) = if short {
            (typical[user].0, config.short_min, config.short_max - 1)
        } else {
            (typical[user].1, config.short_max, config.long_max)
        };
        let d_real = ((base * noise.sample(&mut rng)).round() as i64).clamp(lo, hi);

        let rn = if rng.random_bool(config.parallel_fraction) && config.max_nodes > 1 {
            rng.random_range(2..=config.max_nodes)
        } else {
            1
        };
        let mut unit = BTreeMap::new();
        unit.insert("core".to_string(), core_choices[rng.random_range(0..core_choices.len())]);
        if config.mem_per_unit > 0 {
            unit.insert("mem".to_string(), rng.random_range(1..=config.mem_per_unit));
        }
        let accel: f64 = rng.random();
        if accel < config.gpu_fraction {
            unit.insert("gpu".to_string(), rng.random_range(1..=config.gpus_per_unit));
        } else if accel < config.gpu_fraction + config.mic_fraction {
            unit.insert("mic".to_string(), rng.random_range(1..=config.mics_per_unit));
        }
        let requested_time = (config.requested_factor >= 1.0)
            .then(|| (d_real as f64 * rng.random_range(1.0..=config.requested_factor)).ceil() as i64);
        jobs.push(JobRecord {
            job_id: id,
            user_id: user as i64 + 1,
            q: clock as i64,
            rn,
            req: unit.into_iter().map(|(k, v)| (k, v * rn)).collect(),
            d_real,
            d_expected: 1,
            requested_time,
        });
    }
    Ok(jobs)
}
