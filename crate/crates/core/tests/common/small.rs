//! Random dispatch instances small enough to enumerate: at most 4 queued
//! jobs, 3 nodes, 2 resource types and 30 time units between `t` and `eoh`.

use std::collections::BTreeMap;
use std::sync::Arc;

use hpc_dispatch::dispatch::{DispatchInstance, RunningJob};
use hpc_dispatch::system::{group, Segment, SystemConfig, SystemModel};
use hpc_dispatch::workload::JobRecord;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const HORIZON: i64 = 30;

pub fn job(id: u64, q: i64, d: i64, rn: i64, req: &[(&str, i64)]) -> JobRecord {
    JobRecord {
        job_id: id,
        user_id: 1,
        q,
        rn,
        req: req.iter().filter(|p| p.1 > 0).map(|&(k, v)| (k.to_string(), v)).collect::<BTreeMap<_, _>>(),
        d_real: d,
        d_expected: d,
        requested_time: None,
    }
}

pub fn instance(seed: u64) -> DispatchInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = rng.random_range(1..=3usize);
    let with_gpu = rng.random_bool(0.6);
    let mut groups = Vec::new();
    for n in 0..nodes {
        let core = rng.random_range(1..=4);
        if with_gpu {
            let gpu = if n == 0 { rng.random_range(1..=2) } else { rng.random_range(0..=2) };
            groups.push(group(1, &[("core", core), ("gpu", gpu)]));
        } else {
            groups.push(group(1, &[("core", core)]));
        }
    }
    let mut resources = vec!["core".to_string()];
    if with_gpu {
        resources.push("gpu".to_string());
    }
    let config = SystemConfig {
        name: None,
        resources,
        groups,
    };
    let system = Arc::new(SystemModel::build(&config).expect("valid system"));
    let t = rng.random_range(10..=15);
    let mut inst = DispatchInstance::new(t, system.clone());
    let mut budget = HORIZON;

    // running jobs: one unit at the lowest free positions of a node
    let mut used: Vec<Vec<bool>> = (0..system.num_resources())
        .map(|r| vec![false; system.tcap(r) as usize])
        .collect();
    for k in 0..rng.random_range(0..=2u64) {
        let demand = [rng.random_range(1..=2), if with_gpu { rng.random_range(0..=1) } else { 0 }];
        let s = t - rng.random_range(1..=5);
        let d = rng.random_range(1..=8);
        let residual = (s + d - t).max(1);
        if residual > budget - 1 {
            continue;
        }
        let n = rng.random_range(1..=nodes);
        let mut segments = Vec::new();
        let mut ok = true;
        for r in 0..system.num_resources() {
            if demand[r] == 0 {
                continue;
            }
            let Some((a, b)) = system.node_range(n, r) else {
                ok = false;
                break;
            };
            let free: Vec<i64> = (a..=b).filter(|&p| !used[r][(p - 1) as usize]).take(demand[r] as usize).collect();
            if free.len() < demand[r] as usize {
                ok = false;
                break;
            }
            for p in free {
                segments.push(Segment { unit: 0, r, y: p, q: 1 });
            }
        }
        if !ok {
            continue;
        }
        for g in &segments {
            used[g.r][(g.y - 1) as usize] = true;
        }
        budget -= residual;
        let mut req = vec![("core", demand[0])];
        if with_gpu {
            req.push(("gpu", demand[1]));
        }
        inst.running.push(RunningJob {
            job: job(100 + k, s - 3, d, 1, &req),
            s,
            segments,
        });
    }

    for id in 1..=rng.random_range(1..=4u64) {
        let rn = if rng.random_bool(0.3) { 2 } else { 1 };
        let core = rng.random_range(1..=3) * rn;
        let gpu = if with_gpu && rng.random_bool(0.5) { rng.random_range(1..=2) * rn } else { 0 };
        let d = rng.random_range(1..=8);
        if d > budget {
            break;
        }
        let mut req = vec![("core", core)];
        if with_gpu {
            req.push(("gpu", gpu));
        }
        let candidate = job(id, t - rng.random_range(0..=10), d, rn, &req);
        if candidate.fits(&system) {
            budget -= d;
            inst.queued.push(candidate);
        }
    }
    inst
}
