//! Brute-force dispatch optimum.
//!
//! Enumerates every start time in `[t, eoh]` and every contiguous block of
//! positions for every unit, job by job, with exact rational slowdowns.
//! Nothing here is shared with the solver's models.

use std::sync::Arc;

use hpc_dispatch::dispatch::DispatchInstance;
use hpc_dispatch::system::SystemModel;
use num_rational::Ratio;

#[derive(Debug, Clone)]
pub struct BJob {
    pub id: u64,
    pub q: i64,
    pub d: i64,
    pub rn: i64,
    pub unit: Vec<i64>,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    r: usize,
    y: i64,
    len: i64,
    from: i64,
    to: i64,
}

impl Block {
    fn clashes(&self, o: &Block) -> bool {
        self.r == o.r && self.from < o.to && o.from < self.to && self.y < o.y + o.len && o.y < self.y + self.len
    }
}

pub struct Problem {
    pub t: i64,
    pub eoh: i64,
    pub jobs: Vec<BJob>,
    // cap[n][r], nodes 0-based here
    cap: Vec<Vec<i64>>,
    // first position of node n for resource r
    first: Vec<Vec<i64>>,
    running: Vec<Block>,
    // per node, per r: (until, amount) held by running jobs
    running_load: Vec<Vec<Vec<(i64, i64)>>>,
}

fn layout(system: &SystemModel) -> (Vec<Vec<i64>>, Vec<Vec<i64>>) {
    let nr = system.num_resources();
    let cap: Vec<Vec<i64>> = system.nodes().map(|n| (0..nr).map(|r| system.cap(n, r)).collect()).collect();
    let mut first = vec![vec![0; nr]; cap.len()];
    for r in 0..nr {
        let mut next = 1;
        for n in 0..cap.len() {
            first[n][r] = next;
            next += cap[n][r];
        }
    }
    (cap, first)
}

impl Problem {
    pub fn new(inst: &DispatchInstance) -> Problem {
        let system: &Arc<SystemModel> = &inst.system;
        let (cap, first) = layout(system);
        let nr = system.num_resources();
        let t = inst.t;
        let mut jobs = Vec::new();
        for j in &inst.queued {
            let mut unit = vec![0; nr];
            for (name, &v) in &j.req {
                let r = system.resources().iter().position(|x| x == name).expect("known resource");
                unit[r] = (v + j.rn - 1) / j.rn;
            }
            let per_node: i64 = cap
                .iter()
                .map(|c| {
                    (0..nr)
                        .filter(|&r| unit[r] > 0)
                        .map(|r| c[r] / unit[r])
                        .min()
                        .unwrap_or(j.rn)
                        .min(j.rn)
                })
                .sum();
            if per_node >= j.rn {
                jobs.push(BJob {
                    id: j.job_id,
                    q: j.q,
                    d: j.d_expected.max(1),
                    rn: j.rn,
                    unit,
                });
            }
        }
        let mut running = Vec::new();
        let mut running_load = vec![vec![Vec::new(); nr]; cap.len()];
        let mut busy = 0;
        for rj in &inst.running {
            let residual = (rj.s + rj.job.d_expected - t).max(1);
            busy += residual;
            for g in &rj.segments {
                running.push(Block {
                    r: g.r,
                    y: g.y,
                    len: g.q,
                    from: t,
                    to: t + residual,
                });
                for pos in g.y..g.y + g.q {
                    let n = (0..cap.len()).rev().find(|&n| first[n][g.r] <= pos).unwrap();
                    running_load[n][g.r].push((t + residual, 1));
                }
            }
        }
        let eoh = t + jobs.iter().map(|j| j.d).sum::<i64>() + busy;
        Problem {
            t,
            eoh,
            jobs,
            cap,
            first,
            running,
            running_load,
        }
    }

    pub fn slowdown(j: &BJob, s: i64) -> Ratio<i64> {
        Ratio::new(s - j.q + j.d, j.d)
    }

    /// Objective of a start assignment given as (job id, start).
    pub fn objective(&self, starts: &[(u64, i64)]) -> Ratio<i64> {
        self.jobs
            .iter()
            .map(|j| {
                let s = starts.iter().find(|x| x.0 == j.id).expect("start for every job").1;
                Self::slowdown(j, s)
            })
            .sum()
    }

    fn blocks_for(&self, j: &BJob, s: i64, ys: &[i64]) -> Vec<Block> {
        let mut out = Vec::new();
        let mut k = 0;
        for (r, &q) in j.unit.iter().enumerate() {
            if q > 0 {
                out.push(Block {
                    r,
                    y: ys[k],
                    len: q,
                    from: s,
                    to: s + j.d,
                });
                k += 1;
            }
        }
        out
    }

    // every way to place one unit on `node`: one block per requested resource
    fn unit_options(&self, j: &BJob, node: usize) -> Vec<Vec<i64>> {
        let mut opts: Vec<Vec<i64>> = vec![Vec::new()];
        for (r, &q) in j.unit.iter().enumerate() {
            if q == 0 {
                continue;
            }
            let lo = self.first[node][r];
            let hi = lo + self.cap[node][r] - q;
            let mut next = Vec::new();
            for o in &opts {
                for y in lo..=hi {
                    let mut o2 = o.clone();
                    o2.push(y);
                    next.push(o2);
                }
            }
            opts = next;
        }
        opts
    }

    fn free(&self, placed: &[Block], cand: &[Block]) -> bool {
        cand.iter()
            .all(|b| !self.running.iter().chain(placed).any(|o| b.clashes(o)))
            && cand.iter().enumerate().all(|(i, b)| cand[..i].iter().all(|o| !b.clashes(o)))
    }

    /// Calls `f` for every placement of all units of `j` at start `s`; units
    /// are interchangeable, so they are placed in increasing (node, y) order.
    /// `nodes` pins each unit to a node when given. Stops when `f` returns true.
    fn each_placement(
        &self,
        j: &BJob,
        s: i64,
        nodes: Option<&[usize]>,
        placed: &mut Vec<Block>,
        unit: i64,
        floor: (usize, Vec<i64>),
        f: &mut dyn FnMut(&mut Vec<Block>) -> bool,
    ) -> bool {
        if unit == j.rn {
            return f(placed);
        }
        let candidates: Vec<usize> = match nodes {
            Some(ns) => vec![ns[unit as usize]],
            None => (0..self.cap.len()).collect(),
        };
        for node in candidates {
            for ys in self.unit_options(j, node) {
                if nodes.is_none() && (node, ys.clone()) <= floor && unit > 0 {
                    continue;
                }
                let blocks = self.blocks_for(j, s, &ys);
                if !self.free(placed, &blocks) {
                    continue;
                }
                let before = placed.len();
                placed.extend(blocks);
                let stop = self.each_placement(j, s, nodes, placed, unit + 1, (node, ys), f);
                placed.truncate(before);
                if stop {
                    return true;
                }
            }
        }
        false
    }

    /// Optimal objective and starts (in `jobs` order), or None when nothing is feasible.
    pub fn optimum(&self) -> Option<(Ratio<i64>, Vec<i64>)> {
        let mut best: Option<(Ratio<i64>, Vec<i64>)> = None;
        let mut starts = Vec::new();
        let mut placed = Vec::new();
        self.search(0, Ratio::from_integer(0), &mut starts, &mut placed, &mut best);
        best
    }

    fn search(
        &self,
        k: usize,
        acc: Ratio<i64>,
        starts: &mut Vec<i64>,
        placed: &mut Vec<Block>,
        best: &mut Option<(Ratio<i64>, Vec<i64>)>,
    ) {
        if k == self.jobs.len() {
            if best.as_ref().is_none_or(|b| acc < b.0) {
                *best = Some((acc, starts.clone()));
            }
            return;
        }
        let j = &self.jobs[k];
        let rest: Ratio<i64> = self.jobs[k + 1..].iter().map(|o| Self::slowdown(o, self.t)).sum();
        for s in self.t..=self.eoh {
            let here = acc + Self::slowdown(j, s);
            if best.as_ref().is_some_and(|b| here + rest >= b.0) {
                break;
            }
            starts.push(s);
            self.each_placement(j, s, None, placed, 0, (0, Vec::new()), &mut |pl| {
                self.search(k + 1, here, starts, pl, best);
                false
            });
            starts.pop();
        }
    }

    /// Whether positions exist for the given starts and unit-to-node
    /// assignment (both in `jobs` order).
    pub fn packs(&self, starts: &[i64], nodes: &[Vec<usize>]) -> bool {
        let mut placed = Vec::new();
        self.pack_from(0, starts, nodes, &mut placed)
    }

    fn pack_from(&self, k: usize, starts: &[i64], nodes: &[Vec<usize>], placed: &mut Vec<Block>) -> bool {
        if k == self.jobs.len() {
            return true;
        }
        let j = &self.jobs[k];
        if nodes[k].len() != j.rn as usize {
            return false;
        }
        self.each_placement(j, starts[k], Some(&nodes[k]), placed, 0, (0, Vec::new()), &mut |pl| {
            self.pack_from(k + 1, starts, nodes, pl)
        })
    }

    /// Whether the starts and unit-to-node assignment respect every node's
    /// capacity at every instant (counting only, positions ignored).
    pub fn fits_nodes(&self, starts: &[i64], nodes: &[Vec<usize>]) -> bool {
        let horizon = self.eoh + self.jobs.iter().map(|j| j.d).max().unwrap_or(0) + 1;
        for (k, j) in self.jobs.iter().enumerate() {
            if nodes[k].len() != j.rn as usize || starts[k] < self.t {
                return false;
            }
        }
        for n in 0..self.cap.len() {
            for r in 0..self.cap[n].len() {
                for time in self.t..horizon {
                    let mut used: i64 = self.running_load[n][r].iter().filter(|h| time < h.0).map(|h| h.1).sum();
                    for (k, j) in self.jobs.iter().enumerate() {
                        if starts[k] <= time && time < starts[k] + j.d {
                            used += j.unit[r] * nodes[k].iter().filter(|&&m| m == n).count() as i64;
                        }
                    }
                    if used > self.cap[n][r] {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Optimum when units only need room on their node (counts, not
    /// positions). Node lists are in `jobs` order, nodes 0-based.
    pub fn optimum_by_counts(&self) -> Option<(Ratio<i64>, Vec<i64>, Vec<Vec<usize>>)> {
        let mut best = None;
        let mut starts = Vec::new();
        let mut nodes = Vec::new();
        self.search_counts(0, Ratio::from_integer(0), &mut starts, &mut nodes, &mut best);
        best
    }

    fn search_counts(
        &self,
        k: usize,
        acc: Ratio<i64>,
        starts: &mut Vec<i64>,
        nodes: &mut Vec<Vec<usize>>,
        best: &mut Option<(Ratio<i64>, Vec<i64>, Vec<Vec<usize>>)>,
    ) {
        if k == self.jobs.len() {
            if best.as_ref().is_none_or(|b| acc < b.0) {
                *best = Some((acc, starts.clone(), nodes.clone()));
            }
            return;
        }
        let j = &self.jobs[k];
        let rest: Ratio<i64> = self.jobs[k + 1..].iter().map(|o| Self::slowdown(o, self.t)).sum();
        for s in self.t..=self.eoh {
            let here = acc + Self::slowdown(j, s);
            if best.as_ref().is_some_and(|b| here + rest >= b.0) {
                break;
            }
            starts.push(s);
            for multiset in multisets(self.cap.len(), j.rn as usize) {
                nodes.push(multiset);
                if self.counts_ok(k, starts, nodes) {
                    self.search_counts(k + 1, here, starts, nodes, best);
                }
                nodes.pop();
            }
            starts.pop();
        }
    }

    // capacity check of job k against running jobs and jobs before it
    fn counts_ok(&self, k: usize, starts: &[i64], nodes: &[Vec<usize>]) -> bool {
        let j = &self.jobs[k];
        for &n in &nodes[k] {
            for r in 0..self.cap[n].len() {
                for time in starts[k]..starts[k] + j.d {
                    let mut used: i64 = self.running_load[n][r].iter().filter(|h| time < h.0).map(|h| h.1).sum();
                    for (i, o) in self.jobs[..=k].iter().enumerate() {
                        if starts[i] <= time && time < starts[i] + o.d {
                            used += o.unit[r] * nodes[i].iter().filter(|&&m| m == n).count() as i64;
                        }
                    }
                    if used > self.cap[n][r] {
                        return false;
                    }
                }
            }
        }
        true
    }
}

// non-decreasing sequences of length len over 0..n
fn multisets(n: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        let mut next = Vec::new();
        for v in &out {
            let lo = v.last().copied().unwrap_or(0);
            for x in lo..n {
                let mut w = v.clone();
                w.push(x);
                next.push(w);
            }
        }
        out = next;
    }
    out
}
