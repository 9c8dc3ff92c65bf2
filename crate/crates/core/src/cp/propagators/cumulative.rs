//! Timetable filtering for the cumulative resource constraint.

use crate::cp::engine::{Delta, Priority, Propagator};
use crate::cp::store::{Fail, PropResult, Store, VarId};

/// One task of a cumulative constraint.
///
/// Duration and demand are constants. An optional `presence` 0/1 variable
/// makes the task conditional: it consumes capacity only when present.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CumulativeTask {
    pub start: VarId,
    pub duration: i64,
    pub demand: i64,
    pub presence: Option<VarId>,
}

impl CumulativeTask {
    pub fn new(start: VarId, duration: i64, demand: i64) -> Self {
        CumulativeTask {
            start,
            duration,
            demand,
            presence: None,
        }
    }

    pub fn optional(start: VarId, duration: i64, demand: i64, presence: VarId) -> Self {
        CumulativeTask {
            start,
            duration,
            demand,
            presence: Some(presence),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Presence {
    Absent,
    Present,
    Unknown,
}

/// At every time point the summed demand of running tasks stays within `capacity`.
#[derive(Debug, Clone)]
pub struct Cumulative {
    tasks: Vec<CumulativeTask>,
    capacity: i64,
    entailed: bool,
    // scratch
    events: Vec<(i64, i64)>,
    segments: Vec<Segment>,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    start: i64,
    end: i64,
    height: i64,
}

impl Cumulative {
    pub fn new(tasks: Vec<CumulativeTask>, capacity: i64) -> Self {
        let tasks: Vec<CumulativeTask> = tasks
            .into_iter()
            .filter(|t| t.duration > 0 && t.demand > 0)
            .collect();
        let total: i64 = tasks.iter().map(|t| t.demand).sum();
        Cumulative {
            entailed: total <= capacity,
            tasks,
            capacity,
            events: Vec::new(),
            segments: Vec::new(),
        }
    }

    fn presence(store: &Store, t: &CumulativeTask) -> Presence {
        match t.presence {
            None => Presence::Present,
            Some(p) => match store.value(p) {
                Some(0) => Presence::Absent,
                Some(_) => Presence::Present,
                None => {
                    if store.max(p) <= 0 {
                        Presence::Absent
                    } else if store.min(p) >= 1 {
                        Presence::Present
                    } else {
                        Presence::Unknown
                    }
                }
            },
        }
    }

    // compulsory part [lst, ect) of a present task
    fn compulsory(store: &Store, t: &CumulativeTask) -> Option<(i64, i64)> {
        let lst = store.max(t.start);
        let ect = store.min(t.start) + t.duration;
        (lst < ect).then_some((lst, ect))
    }

    fn build_profile(&mut self, store: &Store) -> PropResult {
        self.events.clear();
        for t in &self.tasks {
            if Self::presence(store, t) != Presence::Present {
                continue;
            }
            if let Some((a, b)) = Self::compulsory(store, t) {
                self.events.push((a, t.demand));
                self.events.push((b, -t.demand));
            }
        }
        self.events.sort_unstable();
        self.segments.clear();
        let mut height = 0;
        let mut k = 0;
        while k < self.events.len() {
            let time = self.events[k].0;
            while k < self.events.len() && self.events[k].0 == time {
                height += self.events[k].1;
                k += 1;
            }
            if height > self.capacity {
                return Err(Fail);
            }
            if height > 0 && k < self.events.len() {
                self.segments.push(Segment {
                    start: time,
                    end: self.events[k].0,
                    height,
                });
            }
        }
        Ok(())
    }

    /// Earliest start `>= min` such that the task fits the profile, or None.
    fn earliest(&self, store: &Store, t: &CumulativeTask, own: Option<(i64, i64)>) -> Option<i64> {
        let dom = store.dom(t.start);
        let mut est = dom.min();
        let max = dom.max();
        let mut k = self.segments.partition_point(|s| s.end <= est);
        while k < self.segments.len() {
            let seg = self.segments[k];
            if seg.end <= est {
                k += 1;
                continue;
            }
            if seg.start >= est + t.duration {
                break;
            }
            if self.conflicts(&seg, t, own) {
                est = dom.next_value(seg.end)?;
                if est > max {
                    return None;
                }
            }
            k += 1;
        }
        Some(est)
    }

    /// Latest start `<= max` such that the task fits the profile, or None.
    fn latest(&self, store: &Store, t: &CumulativeTask, own: Option<(i64, i64)>) -> Option<i64> {
        let dom = store.dom(t.start);
        let mut lst = dom.max();
        let min = dom.min();
        let mut k = self.segments.partition_point(|s| s.start < lst + t.duration);
        while k > 0 {
            let seg = self.segments[k - 1];
            if seg.start >= lst + t.duration {
                k -= 1;
                continue;
            }
            if seg.end <= lst {
                break;
            }
            if self.conflicts(&seg, t, own) {
                lst = dom.prev_value(seg.start - t.duration)?;
                if lst < min {
                    return None;
                }
            }
            k -= 1;
        }
        Some(lst)
    }

    fn conflicts(&self, seg: &Segment, t: &CumulativeTask, own: Option<(i64, i64)>) -> bool {
        let mine = match own {
            Some((a, b)) if seg.start >= a && seg.end <= b => t.demand,
            _ => 0,
        };
        seg.height - mine + t.demand > self.capacity
    }
}

impl Propagator for Cumulative {
    fn name(&self) -> &'static str {
        "cumulative"
    }

    fn watched(&self) -> Vec<VarId> {
        let mut v = Vec::new();
        for t in &self.tasks {
            v.push(t.start);
            if let Some(p) = t.presence {
                v.push(p);
            }
        }
        v
    }

    fn priority(&self) -> Priority {
        Priority::Medium
    }

    fn propagate(&mut self, store: &mut Store, _delta: Delta<'_>) -> PropResult {
        if self.entailed {
            return Ok(());
        }
        loop {
            self.build_profile(store)?;
            if self.segments.is_empty() {
                return Ok(());
            }
            let mut changed = false;
            for i in 0..self.tasks.len() {
                let t = self.tasks[i];
                let presence = Self::presence(store, &t);
                match presence {
                    Presence::Absent => continue,
                    Presence::Present if store.is_fixed(t.start) => continue,
                    _ => {}
                }
                let own = match presence {
                    Presence::Present => Self::compulsory(store, &t),
                    _ => None,
                };
                let est = self.earliest(store, &t, own);
                if presence == Presence::Unknown {
                    if est.is_none() {
                        store.assign(t.presence.unwrap(), 0)?;
                        changed = true;
                    }
                    continue;
                }
                let est = est.ok_or(Fail)?;
                changed |= store.set_min(t.start, est)?;
                let lst = self.latest(store, &t, own).ok_or(Fail)?;
                changed |= store.set_max(t.start, lst)?;
            }
            if !changed {
                return Ok(());
            }
        }
    }

    fn describe(&self) -> String {
        let tasks: Vec<String> = self
            .tasks
            .iter()
            .map(|t| match t.presence {
                Some(p) => format!("(v{},{},{},?v{})", t.start.0, t.duration, t.demand, p.0),
                None => format!("(v{},{},{})", t.start.0, t.duration, t.demand),
            })
            .collect();
        format!("cumulative([{}], cap={})", tasks.join(","), self.capacity)
    }
}
