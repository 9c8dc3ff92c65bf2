//! Concrete position bookkeeping at the dispatch instant.

use crate::system::{NodeId, Segment, SystemModel};

use super::{QJob, RJob};

/// Which positions are held right now, with per-node free counts.
#[derive(Debug, Clone)]
pub struct Occupancy<'a> {
    system: &'a SystemModel,
    used: Vec<Vec<bool>>,
    // free[n - 1][r]
    free: Vec<Vec<i64>>,
}

impl<'a> Occupancy<'a> {
    pub fn new(system: &'a SystemModel) -> Self {
        let nr = system.num_resources();
        Occupancy {
            system,
            used: (0..nr).map(|r| vec![false; system.tcap(r) as usize]).collect(),
            free: system
                .nodes()
                .map(|n| (0..nr).map(|r| system.cap(n, r)).collect())
                .collect(),
        }
    }

    pub(crate) fn with_running(system: &'a SystemModel, running: &[RJob]) -> Self {
        let mut occ = Self::new(system);
        for j in running {
            for s in &j.segments {
                occ.occupy(s);
            }
        }
        occ
    }

    pub fn occupy(&mut self, s: &Segment) {
        for p in s.y..=s.last() {
            let cell = &mut self.used[s.r][(p - 1) as usize];
            if !*cell {
                *cell = true;
                let n = self.system.map(s.r)[(p - 1) as usize] as usize;
                self.free[n - 1][s.r] -= 1;
            }
        }
    }

    pub fn release(&mut self, s: &Segment) {
        for p in s.y..=s.last() {
            let cell = &mut self.used[s.r][(p - 1) as usize];
            if *cell {
                *cell = false;
                let n = self.system.map(s.r)[(p - 1) as usize] as usize;
                self.free[n - 1][s.r] += 1;
            }
        }
    }

    pub fn free(&self, n: NodeId, r: usize) -> i64 {
        self.free[n - 1][r]
    }

    pub fn unit_fits(&self, n: NodeId, demand: &[i64]) -> bool {
        demand.iter().enumerate().all(|(r, &q)| self.free(n, r) >= q)
    }

    /// Lowest free positions of `r` on node `n`, grouped into contiguous segments.
    fn lowest(&self, n: NodeId, unit: usize, r: usize, q: i64) -> Option<Vec<Segment>> {
        if q == 0 {
            return Some(Vec::new());
        }
        let (a, b) = self.system.node_range(n, r)?;
        let mut out: Vec<Segment> = Vec::new();
        let mut need = q;
        for p in a..=b {
            if need == 0 {
                break;
            }
            if self.used[r][(p - 1) as usize] {
                continue;
            }
            match out.last_mut() {
                Some(s) if s.last() + 1 == p => s.q += 1,
                _ => out.push(Segment { unit, r, y: p, q: 1 }),
            }
            need -= 1;
        }
        (need == 0).then_some(out)
    }

    /// Places one unit on node `n` at the lowest free positions of every resource.
    pub fn place_unit(&mut self, n: NodeId, unit: usize, demand: &[i64]) -> Option<Vec<Segment>> {
        if !self.unit_fits(n, demand) {
            return None;
        }
        let mut segs = Vec::new();
        for (r, &q) in demand.iter().enumerate() {
            segs.extend(self.lowest(n, unit, r, q)?);
        }
        for s in &segs {
            self.occupy(s);
        }
        Some(segs)
    }

    /// Lowest-id node that can take the unit.
    pub fn first_fit_node(&self, demand: &[i64]) -> Option<NodeId> {
        self.system.nodes().find(|&n| self.unit_fits(n, demand))
    }

    /// Node leaving the least relative slack on the unit's scarcest resource.
    pub fn best_fit_node(&self, demand: &[i64]) -> Option<NodeId> {
        let scarce = scarcest(self.system, demand);
        let mut best: Option<(NodeId, i64, i64)> = None;
        for n in self.system.nodes() {
            if !self.unit_fits(n, demand) {
                continue;
            }
            let (slack, cap) = match scarce {
                Some(r) => (self.free(n, r) - demand[r], self.system.cap(n, r).max(1)),
                None => (0, 1),
            };
            let better = match best {
                None => true,
                Some((_, bs, bc)) => (slack as i128) * (bc as i128) < (bs as i128) * (cap as i128),
            };
            if better {
                best = Some((n, slack, cap));
            }
        }
        best.map(|b| b.0)
    }

    /// Places every unit of a job or nothing.
    pub(crate) fn place_job(&mut self, job: &QJob, choose: impl Fn(&Self, &[i64]) -> Option<NodeId>) -> Option<Vec<Segment>> {
        let mut segs = Vec::new();
        for unit in 0..job.rn as usize {
            let placed = choose(self, &job.unit).and_then(|n| self.place_unit(n, unit, &job.unit));
            match placed {
                Some(s) => segs.extend(s),
                None => {
                    for s in &segs {
                        self.release(s);
                    }
                    return None;
                }
            }
        }
        Some(segs)
    }
}

/// The requested resource with the largest demand relative to the biggest node.
pub fn scarcest(system: &SystemModel, demand: &[i64]) -> Option<usize> {
    let mut best: Option<(usize, i64, i64)> = None;
    for (r, &q) in demand.iter().enumerate() {
        if q == 0 {
            continue;
        }
        let cap = system.max_cap(r).max(1);
        let better = match best {
            None => true,
            Some((_, bq, bc)) => (q as i128) * (bc as i128) > (bq as i128) * (cap as i128),
        };
        if better {
            best = Some((r, q, cap));
        }
    }
    best.map(|b| b.0)
}
