//! Independent test oracles shared by the integration tests.
#![allow(dead_code)]

pub mod brute;
pub mod propcheck;
pub mod small;

use hpc_dispatch::dispatch::{DispatchDecision, DispatchInstance};
use hpc_dispatch::system::validate_allocation;

/// Dispatched allocations checked one by one against the running jobs and
/// the ones accepted before them.
pub fn decision_is_valid(inst: &DispatchInstance, d: &DispatchDecision) -> Result<(), String> {
    let mut placed = inst.running_allocations();
    for a in &d.allocations {
        validate_allocation(&inst.system, &placed, a).map_err(|v| format!("job {}: {v}", a.job_id))?;
        if d.start_of(a.job_id) != Some(inst.t) {
            return Err(format!("job {} allocated but not started at t", a.job_id));
        }
        placed.push(a.clone());
    }
    for &(id, s) in &d.starts {
        if s == inst.t && !d.allocations.iter().any(|a| a.job_id == id) {
            return Err(format!("job {id} starts at t without an allocation"));
        }
    }
    Ok(())
}
