//! `array_a[idx_a + off_a] == array_b[idx_b + off_b]` over constant arrays.

use std::rc::Rc;

use crate::cp::engine::{Delta, Propagator};
use crate::cp::store::{Fail, PropResult, Store, VarId};

/// A constant integer array addressed by 0-based offsets, with the end of
/// each run of equal values precomputed so sorted arrays are scanned by run
/// instead of by element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstArray {
    values: Vec<i64>,
    run_end: Vec<usize>,
    sorted: bool,
    // sorted with no value skipped, so index ranges map to value ranges
    dense: bool,
}

impl ConstArray {
    pub fn new(values: Vec<i64>) -> Self {
        let n = values.len();
        let mut run_end = vec![0; n];
        for i in (0..n).rev() {
            run_end[i] = if i + 1 < n && values[i + 1] == values[i] {
                run_end[i + 1]
            } else {
                i
            };
        }
        let sorted = values.windows(2).all(|w| w[0] <= w[1]);
        let dense = values.windows(2).all(|w| w[0] <= w[1] && w[1] - w[0] <= 1);
        ConstArray {
            values,
            run_end,
            sorted,
            dense,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> i64 {
        self.values[i]
    }

    /// Runs `(first, last, value)` covering the index range `[lo, hi]`.
    fn runs(&self, lo: usize, hi: usize) -> impl Iterator<Item = (usize, usize, i64)> + '_ {
        let mut i = lo;
        std::iter::from_fn(move || {
            if i > hi {
                return None;
            }
            let end = self.run_end[i].min(hi);
            let item = (i, end, self.values[i]);
            i = end + 1;
            Some(item)
        })
    }
}

/// One side of an element equality: `array[var + offset]`, with the array
/// indexed from `base` (e.g. 1 for 1-based positions).
#[derive(Debug, Clone)]
pub struct ElementTerm {
    pub array: Rc<ConstArray>,
    pub base: i64,
    pub var: VarId,
    pub offset: i64,
}

impl ElementTerm {
    pub fn new(array: Rc<ConstArray>, base: i64, var: VarId, offset: i64) -> Self {
        ElementTerm {
            array,
            base,
            var,
            offset,
        }
    }

    // var values with a valid array slot
    fn var_range(&self) -> (i64, i64) {
        let lo = self.base - self.offset;
        (lo, lo + self.array.len() as i64 - 1)
    }

    fn index(&self, v: i64) -> usize {
        (v + self.offset - self.base) as usize
    }

    /// Sorted distinct array values reachable from the var's domain, into `out`.
    fn reachable(&self, store: &Store, out: &mut Vec<i64>) {
        out.clear();
        for &(a, b) in store.dom(self.var).intervals() {
            for (_, _, val) in self.array.runs(self.index(a), self.index(b)) {
                // a sorted array yields values in order; only repeats need dropping
                if out.last() != Some(&val) {
                    out.push(val);
                }
            }
        }
        if !self.array.sorted {
            out.sort_unstable();
            out.dedup();
        }
    }

    /// Reachable values as sorted, merged intervals; dense arrays only.
    fn reachable_spans(&self, store: &Store, out: &mut Vec<(i64, i64)>) {
        out.clear();
        for &(a, b) in store.dom(self.var).intervals() {
            let (lo, hi) = (self.array.get(self.index(a)), self.array.get(self.index(b)));
            match out.last_mut() {
                Some(last) if last.1 + 1 >= lo => last.1 = last.1.max(hi),
                _ => out.push((lo, hi)),
            }
        }
    }

    /// Keeps only var values whose entry lies in `keep`; dense arrays only.
    fn restrict_spans(&self, store: &mut Store, keep: &[(i64, i64)], allowed: &mut Vec<(i64, i64)>) -> Result<bool, Fail> {
        allowed.clear();
        let values = &self.array.values;
        let shift = self.base - self.offset;
        for &(u, v) in keep {
            let first = values.partition_point(|&x| x < u);
            let end = values.partition_point(|&x| x <= v);
            if first < end {
                allowed.push((first as i64 + shift, end as i64 - 1 + shift));
            }
        }
        store.intersect_intervals(self.var, allowed)
    }

    /// Keeps only var values whose array entry is in `keep` (sorted).
    fn restrict(&self, store: &mut Store, keep: &[i64], allowed: &mut Vec<(i64, i64)>) -> Result<bool, Fail> {
        allowed.clear();
        let mut k = 0;
        for &(a, b) in store.dom(self.var).intervals() {
            for (lo, hi, val) in self.array.runs(self.index(a), self.index(b)) {
                let kept = if self.array.sorted {
                    while k < keep.len() && keep[k] < val {
                        k += 1;
                    }
                    k < keep.len() && keep[k] == val
                } else {
                    keep.binary_search(&val).is_ok()
                };
                if kept {
                    let lo = lo as i64 + self.base - self.offset;
                    let hi = hi as i64 + self.base - self.offset;
                    match allowed.last_mut() {
                        Some(last) if last.1 + 1 >= lo => last.1 = hi,
                        _ => allowed.push((lo, hi)),
                    }
                }
            }
        }
        store.intersect_intervals(self.var, allowed)
    }
}

/// Equality of two element expressions.
///
/// Filtering is domain consistent on the index variables: both sides keep
/// only positions whose array value is reachable from the other side. When
/// both sides share one variable the constraint is unary and is solved once
/// by direct value filtering.
#[derive(Debug, Clone)]
pub struct ElementEq {
    a: ElementTerm,
    b: ElementTerm,
    // scratch
    reach: [Vec<i64>; 2],
    common: Vec<i64>,
    spans: [Vec<(i64, i64)>; 3],
    // stamp of each side's domain when its spans were computed
    span_stamps: [Option<u64>; 2],
    allowed: Vec<(i64, i64)>,
}

impl ElementEq {
    pub fn new(a: ElementTerm, b: ElementTerm) -> Self {
        ElementEq {
            a,
            b,
            reach: Default::default(),
            common: Vec::new(),
            spans: Default::default(),
            span_stamps: [None; 2],
            allowed: Vec::new(),
        }
    }

    fn is_unary(&self) -> bool {
        self.a.var == self.b.var
    }

    // walks both sides run by run, so cost is linear in the number of runs
    fn propagate_unary(&self, store: &mut Store) -> PropResult {
        let (alo, ahi) = self.a.var_range();
        let (blo, bhi) = self.b.var_range();
        let v = self.a.var;
        store.set_min(v, alo.max(blo))?;
        store.set_max(v, ahi.min(bhi))?;
        let (ra, rb) = (&self.a.array.run_end, &self.b.array.run_end);
        let mut allowed: Vec<(i64, i64)> = Vec::new();
        for &(lo, hi) in store.dom(v).intervals() {
            let mut x = lo;
            while x <= hi {
                let (ia, ib) = (self.a.index(x), self.b.index(x));
                let step = ((ra[ia] - ia).min(rb[ib] - ib) as i64).min(hi - x);
                if self.a.array.get(ia) == self.b.array.get(ib) {
                    match allowed.last_mut() {
                        Some(last) if last.1 + 1 >= x => last.1 = x + step,
                        _ => allowed.push((x, x + step)),
                    }
                }
                x += step + 1;
            }
        }
        store.intersect_intervals(v, &allowed)?;
        Ok(())
    }
}

impl ElementEq {
    // same filtering as the general path, over value intervals
    fn propagate_spans(&mut self, store: &mut Store) -> PropResult {
        let [ra, rb, common] = &mut self.spans;
        // a side whose domain is unchanged keeps its spans
        for (k, (t, r)) in [(&self.a, &mut *ra), (&self.b, &mut *rb)].into_iter().enumerate() {
            let stamp = store.stamp(t.var);
            if self.span_stamps[k] != Some(stamp) {
                t.reachable_spans(store, r);
                self.span_stamps[k] = Some(stamp);
            }
        }
        intersect_spans(ra, rb, common);
        if common.is_empty() {
            return Err(Fail);
        }
        // after restricting, a side reaches exactly the common spans
        if common != ra {
            self.a.restrict_spans(store, common, &mut self.allowed)?;
            ra.clone_from(common);
            self.span_stamps[0] = Some(store.stamp(self.a.var));
        }
        if common != rb {
            self.b.restrict_spans(store, common, &mut self.allowed)?;
            rb.clone_from(common);
            self.span_stamps[1] = Some(store.stamp(self.b.var));
        }
        Ok(())
    }
}

fn intersect_spans(a: &[(i64, i64)], b: &[(i64, i64)], out: &mut Vec<(i64, i64)>) {
    out.clear();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if lo <= hi {
            out.push((lo, hi));
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
}

fn intersect_sorted(a: &[i64], b: &[i64], out: &mut Vec<i64>) {
    let (mut i, mut j) = (0, 0);
    out.clear();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
}

impl Propagator for ElementEq {
    fn name(&self) -> &'static str {
        "element_eq"
    }

    fn watched(&self) -> Vec<VarId> {
        if self.is_unary() {
            Vec::new()
        } else {
            vec![self.a.var, self.b.var]
        }
    }

    fn propagate(&mut self, store: &mut Store, _delta: Delta<'_>) -> PropResult {
        if self.is_unary() {
            return self.propagate_unary(store);
        }
        for t in [&self.a, &self.b] {
            let (lo, hi) = t.var_range();
            store.set_min(t.var, lo)?;
            store.set_max(t.var, hi)?;
        }
        if self.a.array.dense && self.b.array.dense {
            return self.propagate_spans(store);
        }
        let [ra, rb] = &mut self.reach;
        self.a.reachable(store, ra);
        self.b.reachable(store, rb);
        intersect_sorted(ra, rb, &mut self.common);
        if self.common.is_empty() {
            return Err(Fail);
        }
        // a side whose reachable values all survive loses nothing
        if self.common.len() < ra.len() {
            self.a.restrict(store, &self.common, &mut self.allowed)?;
        }
        if self.common.len() < rb.len() {
            self.b.restrict(store, &self.common, &mut self.allowed)?;
        }
        Ok(())
    }

    fn describe(&self) -> String {
        format!(
            "element(A, v{}{:+}) = element(B, v{}{:+})",
            self.a.var.0, self.a.offset, self.b.var.0, self.b.offset
        )
    }
}
