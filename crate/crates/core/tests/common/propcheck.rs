//! Brute-force soundness checks for the propagators.
//!
//! A random constraint over a handful of small-domain variables is posted to
//! a fresh model. Every assignment of the pre-propagation domains is then
//! enumerated and checked against a direct definition of the constraint; no
//! supported value may be pruned, and failure is only allowed when no
//! assignment satisfies the constraint.

use std::cell::Cell;
use std::collections::HashSet;
use std::rc::Rc;

use hpc_dispatch::cp::propagators::{
    AllDifferent, ConstArray, Cumulative, CumulativeTask, Diffn, DiffnBox, ElementEq, ElementTerm,
    MonotoneSumBound, MonotoneTerm, SumEq,
};
use hpc_dispatch::cp::{Domain, Model, VarId};
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Cumulative,
    Diffn,
    Element,
    AllDifferent,
    SumEq,
    Objective,
}

pub const ALL_KINDS: [Kind; 6] = [
    Kind::Cumulative,
    Kind::Diffn,
    Kind::Element,
    Kind::AllDifferent,
    Kind::SumEq,
    Kind::Objective,
];

#[derive(Debug, Clone)]
pub enum Constraint {
    // (start, duration, demand, presence)
    Cumulative {
        tasks: Vec<(usize, i64, i64, Option<usize>)>,
        cap: i64,
    },
    // (x, x_len, y, y_len)
    Diffn {
        boxes: Vec<(usize, i64, usize, i64)>,
    },
    // array[var + offset - base] on each side
    Element {
        a: Vec<i64>,
        a_var: usize,
        a_off: i64,
        b: Vec<i64>,
        b_var: usize,
        b_off: i64,
        base: i64,
    },
    AllDifferent {
        vars: Vec<usize>,
    },
    SumEq {
        vars: Vec<usize>,
        total: i64,
    },
    // (var, offset, num, den), sum <= bound
    Objective {
        terms: Vec<(usize, i64, i64, i64)>,
        bound: i64,
    },
}

#[derive(Debug, Clone)]
pub struct Case {
    pub domains: Vec<Vec<i64>>,
    pub constraint: Constraint,
    /// Values removed after the first fixpoint, to exercise incremental wakeups.
    pub followup: Vec<(usize, i64)>,
}

fn random_domain(rng: &mut impl Rng, lo: i64, hi: i64, max_size: usize) -> Vec<i64> {
    let mut all: Vec<i64> = (lo..=hi).collect();
    all.shuffle(rng);
    let size = rng.random_range(1..=max_size.min(all.len()));
    let mut d: Vec<i64> = all[..size].to_vec();
    d.sort_unstable();
    d
}

fn round_half_up(r: Ratio<i128>) -> i64 {
    (r + Ratio::new(1, 2)).floor().to_integer() as i64
}

impl Constraint {
    pub fn holds(&self, v: &[i64]) -> bool {
        match self {
            Constraint::Cumulative { tasks, cap } => {
                let present: Vec<_> = tasks
                    .iter()
                    .filter(|t| t.3.is_none_or(|p| v[p] != 0))
                    .collect();
                let times: HashSet<i64> = present.iter().map(|t| v[t.0]).collect();
                // the load can only peak at a task start
                times.iter().all(|&time| {
                    let load: i64 = present
                        .iter()
                        .filter(|t| v[t.0] <= time && time < v[t.0] + t.1)
                        .map(|t| t.2)
                        .sum();
                    load <= *cap
                })
            }
            Constraint::Diffn { boxes } => {
                for i in 0..boxes.len() {
                    for j in i + 1..boxes.len() {
                        let (xi, wi, yi, hi) = boxes[i];
                        let (xj, wj, yj, hj) = boxes[j];
                        if wi == 0 || hi == 0 || wj == 0 || hj == 0 {
                            continue;
                        }
                        let ox = v[xi] < v[xj] + wj && v[xj] < v[xi] + wi;
                        let oy = v[yi] < v[yj] + hj && v[yj] < v[yi] + hi;
                        if ox && oy {
                            return false;
                        }
                    }
                }
                true
            }
            Constraint::Element {
                a,
                a_var,
                a_off,
                b,
                b_var,
                b_off,
                base,
            } => {
                let ia = v[*a_var] + a_off - base;
                let ib = v[*b_var] + b_off - base;
                if ia < 0 || ib < 0 || ia as usize >= a.len() || ib as usize >= b.len() {
                    return false;
                }
                a[ia as usize] == b[ib as usize]
            }
            Constraint::AllDifferent { vars } => {
                let set: HashSet<i64> = vars.iter().map(|&x| v[x]).collect();
                set.len() == vars.len()
            }
            Constraint::SumEq { vars, total } => vars.iter().map(|&x| v[x]).sum::<i64>() == *total,
            Constraint::Objective { terms, bound } => {
                let sum: i64 = terms
                    .iter()
                    .map(|&(x, off, num, den)| {
                        round_half_up(Ratio::new((v[x] + off) as i128 * num as i128, den as i128))
                    })
                    .sum();
                sum <= *bound
            }
        }
    }

    fn post(&self, m: &mut Model, vars: &[VarId]) {
        match self {
            Constraint::Cumulative { tasks, cap } => {
                let ts = tasks
                    .iter()
                    .map(|&(s, d, q, p)| match p {
                        Some(p) => CumulativeTask::optional(vars[s], d, q, vars[p]),
                        None => CumulativeTask::new(vars[s], d, q),
                    })
                    .collect();
                m.post(Cumulative::new(ts, *cap));
            }
            Constraint::Diffn { boxes } => {
                let bs = boxes
                    .iter()
                    .map(|&(x, w, y, h)| DiffnBox::new(vars[x], w, vars[y], h))
                    .collect();
                m.post(Diffn::new(bs));
            }
            Constraint::Element {
                a,
                a_var,
                a_off,
                b,
                b_var,
                b_off,
                base,
            } => {
                let a = Rc::new(ConstArray::new(a.clone()));
                let b = Rc::new(ConstArray::new(b.clone()));
                m.post(ElementEq::new(
                    ElementTerm::new(a, *base, vars[*a_var], *a_off),
                    ElementTerm::new(b, *base, vars[*b_var], *b_off),
                ));
            }
            Constraint::AllDifferent { vars: vs } => {
                m.post(AllDifferent::new(vs.iter().map(|&x| vars[x]).collect()));
            }
            Constraint::SumEq { vars: vs, total } => {
                m.post(SumEq::new(vs.iter().map(|&x| vars[x]).collect(), *total));
            }
            Constraint::Objective { terms, bound } => {
                let ts = terms
                    .iter()
                    .map(|&(x, offset, num, den)| MonotoneTerm {
                        var: vars[x],
                        offset,
                        num,
                        den,
                    })
                    .collect();
                m.post(MonotoneSumBound::new(ts, Rc::new(Cell::new(*bound))));
            }
        }
    }
}

fn sorted_array(rng: &mut impl Rng, len: usize, nodes: i64) -> Vec<i64> {
    let mut a: Vec<i64> = (0..len).map(|_| rng.random_range(1..=nodes)).collect();
    a.sort_unstable();
    a
}

pub fn generate(kind: Kind, rng: &mut impl RngCore) -> Case {
    let mut domains: Vec<Vec<i64>> = Vec::new();
    let constraint = match kind {
        Kind::Cumulative => {
            let n = rng.random_range(1..=4);
            let mut tasks = Vec::new();
            for _ in 0..n {
                let s = domains.len();
                domains.push(random_domain(rng, 0, 9, 8));
                let presence = if rng.random_bool(0.3) {
                    domains.push(random_domain(rng, 0, 1, 2));
                    Some(domains.len() - 1)
                } else {
                    None
                };
                tasks.push((s, rng.random_range(1..=4), rng.random_range(0..=3), presence));
            }
            Constraint::Cumulative {
                tasks,
                cap: rng.random_range(0..=4),
            }
        }
        Kind::Diffn => {
            let n = rng.random_range(2..=4);
            let mut boxes = Vec::new();
            for k in 0..n {
                // units of one job share a start variable
                let x = if k > 0 && rng.random_bool(0.3) {
                    boxes.last().map(|b: &(usize, i64, usize, i64)| b.0).unwrap()
                } else {
                    domains.push(random_domain(rng, 0, 5, 8));
                    domains.len() - 1
                };
                // keep the enumeration small: most boxes get narrow domains
                let wide = rng.random_bool(0.5);
                domains.push(random_domain(rng, 1, 5, if wide { 5 } else { 2 }));
                let y = domains.len() - 1;
                if !wide && domains[x].len() > 3 {
                    domains[x].truncate(3);
                }
                boxes.push((x, rng.random_range(1..=4), y, rng.random_range(0..=3)));
            }
            Constraint::Diffn { boxes }
        }
        Kind::Element => {
            let nodes = rng.random_range(1..=4);
            let len = rng.random_range(1..=8);
            let a = sorted_array(rng, len, nodes);
            let unary = rng.random_bool(0.3);
            let b = if unary {
                a.clone()
            } else {
                let len = rng.random_range(1..=8);
                sorted_array(rng, len, nodes)
            };
            domains.push(random_domain(rng, -1, 9, 8));
            let b_var = if unary {
                0
            } else {
                domains.push(random_domain(rng, -1, 9, 8));
                1
            };
            Constraint::Element {
                a,
                a_var: 0,
                a_off: if unary { 0 } else { rng.random_range(-1..=1) },
                b,
                b_var,
                b_off: rng.random_range(0..=3),
                base: 1,
            }
        }
        Kind::AllDifferent => {
            let n = rng.random_range(2..=4);
            for _ in 0..n {
                let size = if rng.random_bool(0.4) { 1 } else { 4 };
                domains.push(random_domain(rng, 0, 5, size));
            }
            Constraint::AllDifferent {
                vars: (0..n).collect(),
            }
        }
        Kind::SumEq => {
            let n = rng.random_range(1..=4);
            for _ in 0..n {
                domains.push(random_domain(rng, 0, 3, 4));
            }
            Constraint::SumEq {
                vars: (0..n).collect(),
                total: rng.random_range(0..=8),
            }
        }
        Kind::Objective => {
            let n = rng.random_range(1..=4);
            let mut terms = Vec::new();
            for k in 0..n {
                domains.push(random_domain(rng, 0, 9, 8));
                terms.push((
                    k,
                    rng.random_range(0..=5),
                    rng.random_range(0..=7),
                    rng.random_range(1..=6),
                ));
            }
            Constraint::Objective {
                terms,
                bound: rng.random_range(0..=40),
            }
        }
    };
    let followup = (0..rng.random_range(0..=2))
        .map(|_| {
            let v = rng.random_range(0..domains.len());
            let d = &domains[v];
            (v, d[rng.random_range(0..d.len())])
        })
        .collect();
    Case {
        domains,
        constraint,
        followup,
    }
}

/// Per-variable supported values, or None when no assignment satisfies the constraint.
pub fn supports(domains: &[Vec<i64>], c: &Constraint) -> Option<Vec<HashSet<i64>>> {
    let mut sup = vec![HashSet::new(); domains.len()];
    let mut cur = vec![0; domains.len()];
    let mut found = false;
    fn rec(
        k: usize,
        domains: &[Vec<i64>],
        c: &Constraint,
        cur: &mut Vec<i64>,
        sup: &mut Vec<HashSet<i64>>,
        found: &mut bool,
    ) {
        if k == domains.len() {
            if c.holds(cur) {
                *found = true;
                for (s, &v) in sup.iter_mut().zip(cur.iter()) {
                    s.insert(v);
                }
            }
            return;
        }
        for &v in &domains[k] {
            cur[k] = v;
            rec(k + 1, domains, c, cur, sup, found);
        }
    }
    rec(0, domains, c, &mut cur, &mut sup, &mut found);
    found.then_some(sup)
}

fn current_domains(m: &Model, vars: &[VarId]) -> Vec<Vec<i64>> {
    vars.iter().map(|&v| m.store().dom(v).values().collect()).collect()
}

/// Checks one fixpoint against brute force. Err describes the violation.
fn check_step(
    before: &[Vec<i64>],
    result: Result<(), ()>,
    after: Option<&[Vec<i64>]>,
    c: &Constraint,
) -> Result<(), String> {
    let sup = supports(before, c);
    match (result, sup) {
        (Err(()), None) => Ok(()),
        (Err(()), Some(_)) => Err(format!("fail on satisfiable state {before:?}")),
        (Ok(()), None) => Ok(()), // propagation need not detect every inconsistency
        (Ok(()), Some(sup)) => {
            let after = after.unwrap();
            for (k, s) in sup.iter().enumerate() {
                for v in s {
                    if !after[k].contains(v) {
                        return Err(format!(
                            "var {k} lost supported value {v}: before {before:?} after {after:?}"
                        ));
                    }
                }
                if after[k].iter().any(|v| !before[k].contains(v)) {
                    return Err(format!("var {k} grew: {before:?} -> {after:?}"));
                }
            }
            Ok(())
        }
    }
}

/// Posts the case, propagates, applies the follow-up removals and propagates
/// again, checking soundness after each fixpoint.
pub fn run_case(case: &Case) -> Result<(), String> {
    let mut m = Model::new();
    let vars: Vec<VarId> = case
        .domains
        .iter()
        .map(|d| m.new_var(Domain::from_values(d.iter().copied())))
        .collect();
    case.constraint.post(&mut m, &vars);
    let before = case.domains.clone();
    let res = m.propagate().map_err(|_| ());
    let after = res.is_ok().then(|| current_domains(&m, &vars));
    check_step(&before, res, after.as_deref(), &case.constraint)
        .map_err(|e| format!("{:?}: {e}", case.constraint))?;
    if res.is_err() {
        return Ok(());
    }
    let mut before = after.unwrap();
    for &(v, val) in &case.followup {
        if m.store().dom(vars[v]).size() <= 1 {
            continue;
        }
        if m.store_mut().remove(vars[v], val).is_err() {
            return Ok(());
        }
        before = current_domains(&m, &vars);
    }
    let res = m.propagate().map_err(|_| ());
    let after = res.is_ok().then(|| current_domains(&m, &vars));
    check_step(&before, res, after.as_deref(), &case.constraint)
        .map_err(|e| format!("{:?} (after follow-up {:?}): {e}", case.constraint, case.followup))
}

/// On a fully fixed assignment, propagation succeeds exactly when the constraint holds.
pub fn run_fixed(case: &Case, rng: &mut impl RngCore) -> Result<(), String> {
    let point: Vec<i64> = case
        .domains
        .iter()
        .map(|d| d[rng.random_range(0..d.len())])
        .collect();
    let mut m = Model::new();
    let vars: Vec<VarId> = point.iter().map(|&v| m.new_var(Domain::singleton(v))).collect();
    case.constraint.post(&mut m, &vars);
    let ok = m.propagate().is_ok();
    if ok != case.constraint.holds(&point) {
        return Err(format!(
            "{:?} at {:?}: propagate ok={ok}, holds={}",
            case.constraint,
            point,
            !ok
        ));
    }
    Ok(())
}
