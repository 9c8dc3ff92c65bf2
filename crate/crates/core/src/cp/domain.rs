//! Finite integer domains stored as sorted, disjoint, non-adjacent closed intervals.

use std::fmt;

use smallvec::SmallVec;

/// A finite set of integers.
///
/// Intervals are kept sorted, disjoint and non-adjacent, so the bounds are
/// the first and last endpoints and removed values show up as gaps. An
/// empty domain only exists transiently; the store turns it into a failure.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct Domain {
    ivs: SmallVec<[(i64, i64); 2]>,
}

impl Domain {
    pub fn interval(lo: i64, hi: i64) -> Self {
        let mut ivs = SmallVec::new();
        if lo <= hi {
            ivs.push((lo, hi));
        }
        Domain { ivs }
    }

    pub fn singleton(v: i64) -> Self {
        Self::interval(v, v)
    }

    /// Builds a domain from arbitrary values (duplicates allowed).
    pub fn from_values(values: impl IntoIterator<Item = i64>) -> Self {
        let mut vals: Vec<i64> = values.into_iter().collect();
        vals.sort_unstable();
        vals.dedup();
        let mut d = Domain::default();
        for v in vals {
            d.push_back(v, v);
        }
        d
    }

    /// Builds a domain from intervals that may overlap or touch.
    pub fn from_intervals(intervals: impl IntoIterator<Item = (i64, i64)>) -> Self {
        let mut ivs: Vec<(i64, i64)> = intervals.into_iter().filter(|(a, b)| a <= b).collect();
        ivs.sort_unstable();
        let mut d = Domain::default();
        for (a, b) in ivs {
            d.push_back(a, b);
        }
        d
    }

    // appends an interval whose start is >= every stored start
    fn push_back(&mut self, a: i64, b: i64) {
        if let Some(last) = self.ivs.last_mut() {
            if a <= last.1.saturating_add(1) {
                last.1 = last.1.max(b);
                return;
            }
        }
        self.ivs.push((a, b));
    }

    pub fn is_empty(&self) -> bool {
        self.ivs.is_empty()
    }

    pub fn min(&self) -> i64 {
        self.ivs[0].0
    }

    pub fn max(&self) -> i64 {
        self.ivs[self.ivs.len() - 1].1
    }

    pub fn is_fixed(&self) -> bool {
        self.ivs.len() == 1 && self.ivs[0].0 == self.ivs[0].1
    }

    /// Number of values.
    pub fn size(&self) -> u64 {
        self.ivs.iter().map(|(a, b)| (b - a) as u64 + 1).sum()
    }

    pub fn intervals(&self) -> &[(i64, i64)] {
        &self.ivs
    }

    pub fn values(&self) -> impl Iterator<Item = i64> + '_ {
        self.ivs.iter().flat_map(|&(a, b)| a..=b)
    }

    fn locate(&self, v: i64) -> Result<usize, usize> {
        self.ivs.binary_search_by(|&(a, b)| {
            if b < v {
                std::cmp::Ordering::Less
            } else if a > v {
                std::cmp::Ordering::Greater
            } else {
                std::cmp::Ordering::Equal
            }
        })
    }

    pub fn contains(&self, v: i64) -> bool {
        self.locate(v).is_ok()
    }

    /// Smallest value `>= v`, if any.
    pub fn next_value(&self, v: i64) -> Option<i64> {
        match self.locate(v) {
            Ok(_) => Some(v),
            Err(i) => self.ivs.get(i).map(|iv| iv.0),
        }
    }

    /// Largest value `<= v`, if any.
    pub fn prev_value(&self, v: i64) -> Option<i64> {
        match self.locate(v) {
            Ok(_) => Some(v),
            Err(0) => None,
            Err(i) => Some(self.ivs[i - 1].1),
        }
    }

    /// Removes every value `< v`. Returns whether anything changed.
    pub fn set_min(&mut self, v: i64) -> bool {
        if self.is_empty() || v <= self.min() {
            return false;
        }
        match self.ivs.partition_point(|&(_, b)| b < v) {
            i if i == self.ivs.len() => self.ivs.clear(),
            i => {
                self.ivs.drain(..i);
                if self.ivs[0].0 < v {
                    self.ivs[0].0 = v;
                }
            }
        }
        true
    }

    /// Removes every value `> v`. Returns whether anything changed.
    pub fn set_max(&mut self, v: i64) -> bool {
        if self.is_empty() || v >= self.max() {
            return false;
        }
        match self.ivs.partition_point(|&(a, _)| a <= v) {
            0 => self.ivs.clear(),
            k => {
                let i = k - 1;
                self.ivs.truncate(i + 1);
                if self.ivs[i].1 > v {
                    self.ivs[i].1 = v;
                }
            }
        }
        true
    }

    pub fn remove(&mut self, v: i64) -> bool {
        self.remove_range(v, v)
    }

    /// Removes every value in `[lo, hi]`.
    pub fn remove_range(&mut self, lo: i64, hi: i64) -> bool {
        if lo > hi || self.is_empty() || hi < self.min() || lo > self.max() {
            return false;
        }
        // intervals i..j meet [lo, hi]
        let i = self.ivs.partition_point(|&(_, b)| b < lo);
        let j = self.ivs.partition_point(|&(a, _)| a <= hi);
        if i >= j {
            return false;
        }
        let (first, last) = (self.ivs[i].0, self.ivs[j - 1].1);
        let mut keep: SmallVec<[(i64, i64); 2]> = SmallVec::new();
        if first < lo {
            keep.push((first, lo - 1));
        }
        if last > hi {
            keep.push((hi + 1, last));
        }
        self.ivs.drain(i..j);
        self.ivs.insert_many(i, keep);
        true
    }

    pub fn assign(&mut self, v: i64) -> bool {
        if self.is_fixed() && self.min() == v {
            return false;
        }
        if self.contains(v) {
            self.ivs.clear();
            self.ivs.push((v, v));
        } else {
            self.ivs.clear();
        }
        true
    }

    /// Keeps only values lying in the given sorted, disjoint intervals.
    pub fn intersect_intervals(&mut self, allowed: &[(i64, i64)]) -> bool {
        let mut out: SmallVec<[(i64, i64); 2]> = SmallVec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.ivs.len() && j < allowed.len() {
            let (a, b) = self.ivs[i];
            let (c, d) = allowed[j];
            let lo = a.max(c);
            let hi = b.min(d);
            if lo <= hi {
                out.push((lo, hi));
            }
            if b < d {
                i += 1;
            } else {
                j += 1;
            }
        }
        if out != self.ivs {
            self.ivs = out;
            true
        } else {
            false
        }
    }
}

impl fmt::Debug for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, (a, b)) in self.ivs.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            if a == b {
                write!(f, "{a}")?;
            } else {
                write!(f, "{a}..{b}")?;
            }
        }
        write!(f, "}}")
    }
}
