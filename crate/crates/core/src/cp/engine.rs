//! Constraint network and the propagation fixpoint loop.

use std::collections::VecDeque;

use super::domain::Domain;
use super::store::{Fail, PropResult, Store, VarId};

/// What changed since a propagator last ran.
///
/// `Changed` carries indices into the propagator's own `watched()` list.
#[derive(Debug, Clone, Copy)]
pub enum Delta<'a> {
    All,
    Changed(&'a [u32]),
}

/// Scheduling class; cheaper classes drain first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Priority {
    Cheap = 0,
    Medium = 1,
    Expensive = 2,
}

/// A filtering algorithm attached to a set of variables.
///
/// A propagator is never re-woken by its own modifications, so one call must
/// leave it at its own fixpoint.
pub trait Propagator {
    fn name(&self) -> &'static str;

    fn watched(&self) -> Vec<VarId>;

    fn propagate(&mut self, store: &mut Store, delta: Delta<'_>) -> PropResult;

    fn priority(&self) -> Priority {
        Priority::Cheap
    }

    fn describe(&self) -> String {
        self.name().to_string()
    }
}

/// Variables plus posted propagators.
pub struct Model {
    store: Store,
    props: Vec<Box<dyn Propagator>>,
    watchers: Vec<Vec<(usize, u32)>>,
    queues: [VecDeque<usize>; 3],
    queued: Vec<bool>,
    pending: Vec<Vec<u32>>,
    pending_all: Vec<bool>,
    propagations: u64,
    pub(crate) objective: Option<super::search::Objective>,
}

impl Default for Model {
    fn default() -> Self {
        Self::new()
    }
}

impl Model {
    pub fn new() -> Self {
        Model {
            store: Store::new(),
            props: Vec::new(),
            watchers: Vec::new(),
            queues: Default::default(),
            queued: Vec::new(),
            pending: Vec::new(),
            pending_all: Vec::new(),
            propagations: 0,
            objective: None,
        }
    }

    pub fn new_var(&mut self, dom: Domain) -> VarId {
        self.watchers.push(Vec::new());
        self.store.new_var(dom)
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut Store {
        &mut self.store
    }

    pub fn num_vars(&self) -> usize {
        self.store.num_vars()
    }

    pub fn num_propagators(&self) -> usize {
        self.props.len()
    }

    pub fn propagations(&self) -> u64 {
        self.propagations
    }

    /// Adds a propagator and schedules a full run of it.
    pub fn post<P: Propagator + 'static>(&mut self, p: P) -> usize {
        let id = self.props.len();
        for (k, v) in p.watched().into_iter().enumerate() {
            self.watchers[v.0].push((id, k as u32));
        }
        self.props.push(Box::new(p));
        self.queued.push(false);
        self.pending.push(Vec::new());
        self.pending_all.push(true);
        self.enqueue(id);
        id
    }

    fn enqueue(&mut self, id: usize) {
        if !self.queued[id] {
            self.queued[id] = true;
            let q = self.props[id].priority() as usize;
            self.queues[q].push_back(id);
        }
    }

    /// Schedules a full run of propagator `id`.
    pub fn schedule(&mut self, id: usize) {
        self.pending_all[id] = true;
        self.enqueue(id);
    }

    fn notify(&mut self, source: Option<usize>) {
        for v in self.store.take_changed() {
            for k in 0..self.watchers[v.0].len() {
                let (p, local) = self.watchers[v.0][k];
                if Some(p) == source {
                    continue;
                }
                self.pending[p].push(local);
                self.enqueue(p);
            }
        }
    }

    fn pop(&mut self) -> Option<usize> {
        self.queues.iter_mut().find_map(|q| q.pop_front())
    }

    fn reset_queue(&mut self) {
        while let Some(p) = self.pop() {
            self.queued[p] = false;
            self.pending[p].clear();
            self.pending_all[p] = false;
        }
    }

    /// Runs queued propagators until nothing changes.
    pub fn propagate(&mut self) -> PropResult {
        // direct modifications made through store_mut()
        self.notify(None);
        while let Some(p) = self.pop() {
            self.queued[p] = false;
            let pending = std::mem::take(&mut self.pending[p]);
            let all = std::mem::replace(&mut self.pending_all[p], false);
            let delta = if all {
                Delta::All
            } else {
                Delta::Changed(&pending)
            };
            self.store.clear_changed();
            self.propagations += 1;
            let res = self.props[p].propagate(&mut self.store, delta);
            let mut pending = pending;
            pending.clear();
            self.pending[p] = pending;
            if res.is_err() {
                self.store.clear_changed();
                self.reset_queue();
                return Err(Fail);
            }
            self.notify(Some(p));
        }
        Ok(())
    }

    pub(crate) fn push_level(&mut self) {
        self.store.push_level();
    }

    pub(crate) fn pop_level(&mut self) {
        self.store.pop_level();
        self.reset_queue();
    }

    /// Human-readable listing of variables and constraints.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for v in 0..self.store.num_vars() {
            out.push_str(&format!("v{} in {:?}\n", v, self.store.dom(VarId(v))));
        }
        for p in &self.props {
            out.push_str(&p.describe());
            out.push('\n');
        }
        out
    }
}
