//! Redundant start-time filters.
//!
//! [`NodeFit`] serves one job of the position model. It looks only at boxes
//! of other jobs whose start and position are both fixed. At a candidate
//! start, every unit needs a free block of `q` cells per requested resource
//! on a single node, free over the whole run; if the nodes cannot host `rn`
//! such units, the start moves to the next time one of the blocking boxes
//! ends.
//!
//! [`NodeCount`] does the same for all jobs of the node-level model, counting
//! free capacity per node at its peak over the run instead of positions.

use crate::cp::{Delta, Fail, PropResult, Priority, Propagator, Store, VarId};
use crate::system::{NodeId, SystemModel};

#[derive(Debug, Clone, Copy)]
pub(crate) struct OtherBox {
    pub x: VarId,
    pub len: i64,
    pub y: VarId,
    pub q: i64,
}

#[derive(Debug, Clone)]
struct Need {
    q: i64,
    /// Position range per node (index n - 1); None where the node has none.
    ranges: Vec<Option<(i64, i64)>>,
    others: Vec<OtherBox>,
}

pub(crate) struct NodeFit {
    s: VarId,
    d: i64,
    rn: i64,
    needs: Vec<Need>,
    // scratch
    blocked: Vec<(i64, i64)>,
    fit: Vec<i64>,
}

impl NodeFit {
    /// `needs` holds (resource, per-unit demand, boxes of other jobs on it).
    pub fn new(system: &SystemModel, s: VarId, d: i64, rn: i64, needs: Vec<(usize, i64, Vec<OtherBox>)>) -> Self {
        NodeFit {
            s,
            d,
            rn,
            needs: needs
                .into_iter()
                .map(|(r, q, others)| Need {
                    q,
                    ranges: system.nodes().map(|n| system.node_range(n, r)).collect(),
                    others,
                })
                .collect(),
            blocked: Vec::new(),
            fit: vec![0; system.num_nodes()],
        }
    }

    /// Whether the units fit at start `s`; otherwise the earliest time a
    /// blocking box ends (None if none ever does).
    fn check(&mut self, store: &Store, s: i64) -> Result<(), Option<i64>> {
        let end = s + self.d;
        let mut next = None::<i64>;
        self.fit.iter_mut().for_each(|f| *f = i64::MAX);
        for need in &self.needs {
            self.blocked.clear();
            for b in &need.others {
                if !(store.is_fixed(b.x) && store.is_fixed(b.y)) {
                    continue;
                }
                let (bs, by) = (store.min(b.x), store.min(b.y));
                if bs < end && s < bs + b.len {
                    self.blocked.push((by, by + b.q - 1));
                    next = Some(next.map_or(bs + b.len, |v| v.min(bs + b.len)));
                }
            }
            self.blocked.sort_unstable();
            let mut k = 0;
            for (n, range) in need.ranges.iter().enumerate() {
                let Some((a, z)) = *range else {
                    self.fit[n] = 0;
                    continue;
                };
                while k < self.blocked.len() && self.blocked[k].1 < a {
                    k += 1;
                }
                let mut count = 0;
                let mut cursor = a;
                let mut i = k;
                while i < self.blocked.len() && self.blocked[i].0 <= z {
                    let (ba, bz) = self.blocked[i];
                    if ba > cursor {
                        count += (ba - cursor) / need.q;
                    }
                    cursor = cursor.max(bz + 1);
                    i += 1;
                }
                if cursor <= z {
                    count += (z - cursor + 1) / need.q;
                }
                self.fit[n] = self.fit[n].min(count);
            }
        }
        let mut total = 0;
        for &f in &self.fit {
            total += f.min(self.rn);
            if total >= self.rn {
                return Ok(());
            }
        }
        Err(next)
    }
}

impl Propagator for NodeFit {
    fn name(&self) -> &'static str {
        "node_fit"
    }

    fn watched(&self) -> Vec<VarId> {
        let mut v = vec![self.s];
        for need in &self.needs {
            for b in &need.others {
                v.push(b.x);
                v.push(b.y);
            }
        }
        v.sort_unstable_by_key(|x| x.0);
        v.dedup();
        v
    }

    fn priority(&self) -> Priority {
        Priority::Expensive
    }

    fn propagate(&mut self, store: &mut Store, _delta: Delta<'_>) -> PropResult {
        loop {
            let s = store.min(self.s);
            match self.check(store, s) {
                Ok(()) => return Ok(()),
                Err(Some(next)) => {
                    store.set_min(self.s, next)?;
                }
                Err(None) => {
                    // nothing blocking ends, so no later start helps either
                    store.set_min(self.s, store.max(self.s) + 1)?;
                }
            }
        }
    }
}

/// One job as seen by [`NodeCount`].
#[derive(Debug, Clone)]
pub(crate) struct CountJob {
    pub s: VarId,
    pub d: i64,
    pub rn: i64,
    pub unit: Vec<i64>,
    /// Slot variables with their 1-based node.
    pub xs: Vec<(NodeId, VarId)>,
    /// Slots per node (index n - 1).
    pub slots: Vec<i64>,
}

// a usage interval on one node: [from, to) holding `amt` of resource `r`,
// or one unit of job `job` when `r` is None
#[derive(Debug, Clone, Copy)]
struct Usage {
    from: i64,
    to: i64,
    r: Option<usize>,
    amt: i64,
    job: usize,
}

pub(crate) struct NodeCount {
    jobs: Vec<CountJob>,
    caps: Vec<Vec<i64>>,
    total_slots: Vec<i64>,
    // running holders per node, from the dispatch time on
    running: Vec<Vec<Usage>>,
    // scratch: usage per node from running and placed units
    used: Vec<Vec<Usage>>,
    busy: Vec<usize>,
}

impl NodeCount {
    /// `running[n - 1]` lists (end, resource, amount) held from `t` on node `n`.
    pub fn new(system: &SystemModel, t: i64, running: &[Vec<(i64, usize, i64)>], jobs: Vec<CountJob>) -> Self {
        let caps = system
            .nodes()
            .map(|n| (0..system.num_resources()).map(|r| system.cap(n, r)).collect())
            .collect();
        let running = running
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&(end, r, amt)| Usage {
                        from: t,
                        to: end,
                        r: Some(r),
                        amt,
                        job: usize::MAX,
                    })
                    .collect()
            })
            .collect();
        NodeCount {
            total_slots: jobs.iter().map(|j| j.slots.iter().sum()).collect(),
            jobs,
            caps,
            running,
            used: vec![Vec::new(); system.num_nodes()],
            busy: Vec::new(),
        }
    }

    fn collect(&mut self, store: &Store) {
        for &n in &self.busy {
            self.used[n].clear();
        }
        self.busy.clear();
        for (n, row) in self.running.iter().enumerate() {
            if !row.is_empty() {
                self.used[n].extend_from_slice(row);
                self.busy.push(n);
            }
        }
        for (k, j) in self.jobs.iter().enumerate() {
            if !store.is_fixed(j.s) {
                continue;
            }
            let s = store.min(j.s);
            for &(n, x) in &j.xs {
                if store.is_fixed(x) && store.min(x) == 1 {
                    if self.used[n - 1].is_empty() {
                        self.busy.push(n - 1);
                    }
                    self.used[n - 1].push(Usage {
                        from: s,
                        to: s + j.d,
                        r: None,
                        amt: 1,
                        job: k,
                    });
                }
            }
        }
    }

    /// Whether job `k` can place its units at start `s`; otherwise the
    /// earliest end of a holder in its way (None if there is none).
    fn check(&self, k: usize, s: i64) -> Result<(), Option<i64>> {
        let job = &self.jobs[k];
        let end = s + job.d;
        let mut total = self.total_slots[k];
        let mut next = None::<i64>;
        for &n in &self.busy {
            if job.slots[n] == 0 {
                continue;
            }
            let fit = self.fit_on(k, n, s, end, &mut next);
            total -= job.slots[n] - fit.min(job.slots[n]);
        }
        if total >= job.rn {
            Ok(())
        } else {
            Err(next)
        }
    }

    // units of job k that fit on node n through [s, end), at the peak usage
    fn fit_on(&self, k: usize, n: usize, s: i64, end: i64, next: &mut Option<i64>) -> i64 {
        let job = &self.jobs[k];
        let used = &self.used[n];
        let overlaps = |u: &Usage| u.job != k && u.from < end && s < u.to;
        let mut fit = i64::MAX;
        let mut any = false;
        // the peak is reached at s or where some holder starts
        for probe in used.iter().filter(|u| overlaps(u)) {
            any = true;
            *next = Some(next.map_or(probe.to, |v| v.min(probe.to)));
            let tau = probe.from.max(s);
            let mut load = vec![0i64; self.caps[n].len()];
            for u in used.iter().filter(|u| overlaps(u) && u.from <= tau && tau < u.to) {
                match u.r {
                    Some(r) => load[r] += u.amt,
                    None => {
                        for (l, q) in load.iter_mut().zip(&self.jobs[u.job].unit) {
                            *l += q;
                        }
                    }
                }
            }
            for (r, &q) in job.unit.iter().enumerate() {
                if q > 0 {
                    fit = fit.min((self.caps[n][r] - load[r]).max(0) / q);
                }
            }
        }
        if any {
            fit
        } else {
            i64::MAX
        }
    }
}

impl Propagator for NodeCount {
    fn name(&self) -> &'static str {
        "node_count"
    }

    fn watched(&self) -> Vec<VarId> {
        let mut v: Vec<VarId> = Vec::new();
        for j in &self.jobs {
            v.push(j.s);
            v.extend(j.xs.iter().map(|&(_, x)| x));
        }
        v
    }

    fn priority(&self) -> Priority {
        Priority::Expensive
    }

    fn propagate(&mut self, store: &mut Store, _delta: Delta<'_>) -> PropResult {
        // a moved start can only matter to others once it is fixed, so
        // repeat until no start is fixed by this pass
        loop {
            self.collect(store);
            let mut newly_fixed = false;
            for k in 0..self.jobs.len() {
                let sv = self.jobs[k].s;
                let was_fixed = store.is_fixed(sv);
                loop {
                    match self.check(k, store.min(sv)) {
                        Ok(()) => break,
                        Err(Some(next)) => {
                            store.set_min(sv, next)?;
                        }
                        Err(None) => return Err(Fail),
                    }
                }
                newly_fixed |= !was_fixed && store.is_fixed(sv);
            }
            if !newly_fixed {
                return Ok(());
            }
        }
    }
}
