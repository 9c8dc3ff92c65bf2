//! Variable store with a level-based trail.

use super::domain::Domain;

/// Index of an integer variable inside a [`Store`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

/// Propagation failure: some domain became empty or a check was violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fail;

pub type PropResult = Result<(), Fail>;

#[derive(Debug, Clone)]
pub struct Store {
    domains: Vec<Domain>,
    trail: Vec<(VarId, Domain, u64)>,
    // bumped on every change and restored on backtrack, so equal stamps
    // mean equal domains
    stamps: Vec<u64>,
    next_stamp: u64,
    level_marks: Vec<usize>,
    epochs: Vec<u64>,
    next_epoch: u64,
    saved_at: Vec<u64>,
    changed: Vec<VarId>,
    changed_flag: Vec<bool>,
}

impl Default for Store {
    fn default() -> Self {
        Self::new()
    }
}

impl Store {
    pub fn new() -> Self {
        Store {
            domains: Vec::new(),
            trail: Vec::new(),
            stamps: Vec::new(),
            next_stamp: 0,
            level_marks: Vec::new(),
            epochs: vec![0],
            next_epoch: 1,
            saved_at: Vec::new(),
            changed: Vec::new(),
            changed_flag: Vec::new(),
        }
    }

    pub fn new_var(&mut self, dom: Domain) -> VarId {
        let id = VarId(self.domains.len());
        self.domains.push(dom);
        self.stamps.push(self.next_stamp);
        self.next_stamp += 1;
        self.saved_at.push(0);
        self.changed_flag.push(false);
        id
    }

    pub fn num_vars(&self) -> usize {
        self.domains.len()
    }

    pub fn dom(&self, v: VarId) -> &Domain {
        &self.domains[v.0]
    }

    pub fn min(&self, v: VarId) -> i64 {
        self.domains[v.0].min()
    }

    pub fn max(&self, v: VarId) -> i64 {
        self.domains[v.0].max()
    }

    /// Version of `v`'s domain; unchanged stamp means unchanged domain.
    pub fn stamp(&self, v: VarId) -> u64 {
        self.stamps[v.0]
    }

    pub fn is_fixed(&self, v: VarId) -> bool {
        self.domains[v.0].is_fixed()
    }

    /// Value of a fixed variable.
    pub fn value(&self, v: VarId) -> Option<i64> {
        let d = &self.domains[v.0];
        d.is_fixed().then(|| d.min())
    }

    pub fn depth(&self) -> usize {
        self.level_marks.len()
    }

    pub fn push_level(&mut self) {
        self.level_marks.push(self.trail.len());
        self.epochs.push(self.next_epoch);
        self.next_epoch += 1;
    }

    /// Restores every domain to its state at the matching `push_level`.
    pub fn pop_level(&mut self) {
        let mark = self.level_marks.pop().expect("pop_level at root");
        self.epochs.pop();
        while self.trail.len() > mark {
            let (v, d, stamp) = self.trail.pop().unwrap();
            self.domains[v.0] = d;
            self.stamps[v.0] = stamp;
        }
        self.clear_changed();
    }

    /// Variables modified since the last `clear_changed`.
    pub fn changed(&self) -> &[VarId] {
        &self.changed
    }

    pub fn take_changed(&mut self) -> Vec<VarId> {
        for v in &self.changed {
            self.changed_flag[v.0] = false;
        }
        std::mem::take(&mut self.changed)
    }

    pub fn clear_changed(&mut self) {
        for v in &self.changed {
            self.changed_flag[v.0] = false;
        }
        self.changed.clear();
    }

    fn save(&mut self, v: VarId) {
        let epoch = *self.epochs.last().unwrap();
        if epoch != 0 && self.saved_at[v.0] != epoch {
            self.saved_at[v.0] = epoch;
            self.trail.push((v, self.domains[v.0].clone(), self.stamps[v.0]));
        }
    }

    fn update(&mut self, v: VarId, f: impl FnOnce(&mut Domain) -> bool) -> Result<bool, Fail> {
        self.save(v);
        let d = &mut self.domains[v.0];
        if !f(d) {
            return Ok(false);
        }
        if d.is_empty() {
            return Err(Fail);
        }
        self.stamps[v.0] = self.next_stamp;
        self.next_stamp += 1;
        if !self.changed_flag[v.0] {
            self.changed_flag[v.0] = true;
            self.changed.push(v);
        }
        Ok(true)
    }

    pub fn set_min(&mut self, v: VarId, val: i64) -> Result<bool, Fail> {
        if val <= self.min(v) {
            return Ok(false);
        }
        if val > self.max(v) {
            return Err(Fail);
        }
        self.update(v, |d| d.set_min(val))
    }

    pub fn set_max(&mut self, v: VarId, val: i64) -> Result<bool, Fail> {
        if val >= self.max(v) {
            return Ok(false);
        }
        if val < self.min(v) {
            return Err(Fail);
        }
        self.update(v, |d| d.set_max(val))
    }

    pub fn remove(&mut self, v: VarId, val: i64) -> Result<bool, Fail> {
        if !self.domains[v.0].contains(val) {
            return Ok(false);
        }
        self.update(v, |d| d.remove(val))
    }

    pub fn remove_range(&mut self, v: VarId, lo: i64, hi: i64) -> Result<bool, Fail> {
        let d = &self.domains[v.0];
        if lo > hi || d.next_value(lo).is_none_or(|x| x > hi) {
            return Ok(false);
        }
        self.update(v, |d| d.remove_range(lo, hi))
    }

    pub fn assign(&mut self, v: VarId, val: i64) -> Result<bool, Fail> {
        if !self.domains[v.0].contains(val) {
            return Err(Fail);
        }
        self.update(v, |d| d.assign(val))
    }

    pub fn intersect_intervals(&mut self, v: VarId, allowed: &[(i64, i64)]) -> Result<bool, Fail> {
        self.update(v, |d| d.intersect_intervals(allowed))
    }
}
