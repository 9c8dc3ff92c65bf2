//! Two-dimensional non-overlap of boxes (time x position).
//!
//! Filtering combines three rules, all derived from compulsory parts:
//!  * pairwise disjunction: when two boxes must overlap on one axis they
//!    have to be separated on the other, which bounds that axis;
//!  * hole punching: the other axis loses every origin that would cover the
//!    partner's compulsory part;
//!  * an x-sweep: the earliest x of a box is moved past points where every
//!    y left in its domain lies inside some other box's forbidden region.

use crate::cp::engine::{Delta, Priority, Propagator};
use crate::cp::store::{Fail, PropResult, Store, VarId};

/// A rectangle with variable origin and constant extents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiffnBox {
    pub x: VarId,
    pub x_len: i64,
    pub y: VarId,
    pub y_len: i64,
}

impl DiffnBox {
    pub fn new(x: VarId, x_len: i64, y: VarId, y_len: i64) -> Self {
        DiffnBox { x, x_len, y, y_len }
    }
}

#[derive(Debug, Clone)]
pub struct Diffn {
    boxes: Vec<DiffnBox>,
    // boxes sharing each box's x variable (units of one job share a start)
    x_peers: Vec<Vec<usize>>,
    // scratch
    in_work: Vec<bool>,
    work: Vec<usize>,
    regions: Vec<Region>,
    // bounds of every box, kept current during one propagate call
    bnds: Vec<Bounds>,
}

#[derive(Debug, Clone, Copy)]
struct Bounds {
    xmin: i64,
    xmax: i64,
    ymin: i64,
    ymax: i64,
}

impl Bounds {
    fn is_fixed(&self) -> bool {
        self.xmin == self.xmax && self.ymin == self.ymax
    }
}

// forbidden origins for a box, inclusive on both axes
#[derive(Debug, Clone, Copy)]
struct Region {
    owner: usize,
    x_lo: i64,
    x_hi: i64,
    y_lo: i64,
    y_hi: i64,
}

impl Diffn {
    /// Boxes with a zero extent never conflict and are dropped.
    pub fn new(boxes: Vec<DiffnBox>) -> Self {
        let boxes: Vec<DiffnBox> = boxes
            .into_iter()
            .filter(|b| b.x_len > 0 && b.y_len > 0)
            .collect();
        let n = boxes.len();
        let mut by_x: std::collections::HashMap<VarId, Vec<usize>> = Default::default();
        for (i, b) in boxes.iter().enumerate() {
            by_x.entry(b.x).or_default().push(i);
        }
        let x_peers = boxes.iter().map(|b| by_x[&b.x].clone()).collect();
        Diffn {
            boxes,
            x_peers,
            in_work: vec![false; n],
            work: Vec::new(),
            regions: Vec::new(),
            bnds: Vec::new(),
        }
    }

    fn bounds(&self, store: &Store, i: usize) -> Bounds {
        let b = &self.boxes[i];
        Bounds {
            xmin: store.min(b.x),
            xmax: store.max(b.x),
            ymin: store.min(b.y),
            ymax: store.max(b.y),
        }
    }


    fn push_one(&mut self, i: usize) {
        if !self.in_work[i] {
            self.in_work[i] = true;
            self.work.push(i);
        }
    }

    // a moved x moves every box sharing it
    fn push_peers(&mut self, i: usize) {
        for k in 0..self.x_peers[i].len() {
            self.push_one(self.x_peers[i][k]);
        }
    }

    // refreshes the cached bounds of box `i` after a pruning and re-queues
    // it; peers share its x, so they follow when x moved
    fn refresh(&mut self, store: &Store, i: usize) {
        let old = self.bnds[i];
        let new = self.bounds(store, i);
        self.bnds[i] = new;
        if (old.xmin, old.xmax) != (new.xmin, new.xmax) {
            for k in 0..self.x_peers[i].len() {
                let p = self.x_peers[i][k];
                self.bnds[p].xmin = new.xmin;
                self.bnds[p].xmax = new.xmax;
            }
            self.push_peers(i);
        } else {
            self.push_one(i);
        }
    }

    /// Prunes box `i` against box `j`. Returns whether `i` changed.
    fn prune_pair(&self, store: &mut Store, i: usize, j: usize) -> Result<bool, Fail> {
        let (bi, bj) = (self.boxes[i], self.boxes[j]);
        let (a, b) = (self.bnds[i], self.bnds[j]);
        let must_x = a.xmax < b.xmin + bj.x_len && b.xmax < a.xmin + bi.x_len;
        let must_y = a.ymax < b.ymin + bj.y_len && b.ymax < a.ymin + bi.y_len;
        if must_x && must_y {
            return Err(Fail);
        }
        let mut changed = false;
        if must_x {
            changed |= Self::separate(store, bi.y, bi.y_len, (a.ymin, a.ymax), (b.ymin, b.ymax), bj.y_len)?;
        }
        if must_y {
            changed |= Self::separate(store, bi.x, bi.x_len, (a.xmin, a.xmax), (b.xmin, b.xmax), bj.x_len)?;
        }
        Ok(changed)
    }

    // one axis: box i (origin var, len) must lie fully before or fully after box j
    fn separate(
        store: &mut Store,
        var: VarId,
        len: i64,
        (imin, imax): (i64, i64),
        (jmin, jmax): (i64, i64),
        jlen: i64,
    ) -> Result<bool, Fail> {
        let before_ok = imin + len <= jmax;
        let after_ok = jmin + jlen <= imax;
        if !before_ok && !after_ok {
            return Err(Fail);
        }
        let mut changed = false;
        if !before_ok {
            changed |= store.set_min(var, jmin + jlen)?;
        }
        if !after_ok {
            changed |= store.set_max(var, jmax - len)?;
        }
        // compulsory part of j on this axis is [jmax, jmin + jlen)
        if jmax < jmin + jlen {
            changed |= store.remove_range(var, jmax - len + 1, jmin + jlen - 1)?;
        }
        Ok(changed)
    }

    fn collect_regions(&mut self, store: &Store) {
        self.regions.clear();
        for k in 0..self.boxes.len() {
            let b = self.boxes[k];
            let (xmin, xmax) = (store.min(b.x), store.max(b.x));
            let (ymin, ymax) = (store.min(b.y), store.max(b.y));
            if xmax < xmin + b.x_len && ymax < ymin + b.y_len {
                self.regions.push(Region {
                    owner: k,
                    x_lo: xmax,
                    x_hi: xmin + b.x_len - 1,
                    y_lo: ymax,
                    y_hi: ymin + b.y_len - 1,
                });
            }
        }
        // y order lets the sweep build its blocked list already sorted
        self.regions.sort_unstable_by_key(|r| (r.y_lo, r.y_hi));
    }

    /// Earliest feasible x for box `i` given the compulsory regions.
    fn sweep_x(&self, store: &Store, i: usize) -> Option<i64> {
        let bi = self.boxes[i];
        let xdom = store.dom(bi.x);
        let ydom = store.dom(bi.y);
        let mut x = xdom.min();
        let mut blocked: Vec<(i64, i64)> = Vec::with_capacity(self.regions.len());
        loop {
            blocked.clear();
            let mut next_x = i64::MAX;
            for r in &self.regions {
                if r.owner == i || r.x_hi < x || r.x_lo - bi.x_len + 1 > x {
                    continue;
                }
                blocked.push((r.y_lo - bi.y_len + 1, r.y_hi));
                next_x = next_x.min(r.x_hi + 1);
            }
            if blocked.is_empty() || !covers(&blocked, ydom.intervals()) {
                return Some(x);
            }
            x = xdom.next_value(next_x)?;
        }
    }
}

// whether the union of `blocked` (sorted by start) contains every interval of `dom`
fn covers(blocked: &[(i64, i64)], dom: &[(i64, i64)]) -> bool {
    let mut k = 0;
    let mut reach = i64::MIN; // union covers everything in [start, reach]
    let mut start = i64::MIN;
    for &(a, b) in dom {
        // extend the current merged run until it reaches past b or breaks before a
        loop {
            if reach >= b && start <= a {
                break;
            }
            if k >= blocked.len() {
                return false;
            }
            let (c, d) = blocked[k];
            k += 1;
            if reach != i64::MIN && c <= reach + 1 {
                reach = reach.max(d);
            } else {
                start = c;
                reach = d;
            }
            if start > a {
                return false;
            }
        }
    }
    true
}

impl Propagator for Diffn {
    fn name(&self) -> &'static str {
        "diffn"
    }

    fn watched(&self) -> Vec<VarId> {
        self.boxes.iter().flat_map(|b| [b.x, b.y]).collect()
    }

    fn priority(&self) -> Priority {
        Priority::Expensive
    }

    fn propagate(&mut self, store: &mut Store, delta: Delta<'_>) -> PropResult {
        let n = self.boxes.len();
        if n < 2 {
            return Ok(());
        }
        self.work.clear();
        self.in_work.iter_mut().for_each(|f| *f = false);
        self.bnds.clear();
        for i in 0..n {
            let b = self.bounds(store, i);
            self.bnds.push(b);
        }
        match delta {
            Delta::All => (0..n).rev().for_each(|i| self.push_one(i)),
            // every box watches its own x, so peers are notified directly
            Delta::Changed(locals) => locals.iter().for_each(|&k| self.push_one(k as usize / 2)),
        }
        // pairwise rules until quiescent
        while let Some(c) = self.work.pop() {
            self.in_work[c] = false;
            for j in 0..n {
                if j == c {
                    continue;
                }
                let (a, b) = (self.bnds[c], self.bnds[j]);
                let (c_fixed, j_fixed) = (a.is_fixed(), b.is_fixed());
                if c_fixed && j_fixed {
                    let (bc, bj) = (self.boxes[c], self.boxes[j]);
                    if a.xmin < b.xmin + bj.x_len
                        && b.xmin < a.xmin + bc.x_len
                        && a.ymin < b.ymin + bj.y_len
                        && b.ymin < a.ymin + bc.y_len
                    {
                        return Err(Fail);
                    }
                    continue;
                }
                if !c_fixed && self.prune_pair(store, c, j)? {
                    self.refresh(store, c);
                }
                if !self.bnds[j].is_fixed() && self.prune_pair(store, j, c)? {
                    self.refresh(store, j);
                }
            }
            if self.work.is_empty() {
                // sweep once the pairwise rules are quiet; re-run pairs on change
                self.collect_regions(store);
                for i in 0..n {
                    let xv = self.boxes[i].x;
                    if store.is_fixed(xv) {
                        continue;
                    }
                    let est = self.sweep_x(store, i).ok_or(Fail)?;
                    if store.set_min(xv, est)? {
                        self.refresh(store, i);
                    }
                }
            }
        }
        Ok(())
    }

    fn describe(&self) -> String {
        let boxes: Vec<String> = self
            .boxes
            .iter()
            .map(|b| format!("(v{},{},v{},{})", b.x.0, b.x_len, b.y.0, b.y_len))
            .collect();
        format!("diffn([{}])", boxes.join(","))
    }
}
