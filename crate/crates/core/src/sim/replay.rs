//! Re-running saved instances under two dispatchers side by side.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::dispatch::{dispatch, DispatchConfig, DispatchInstance, DispatcherKind};

#[derive(Debug, Clone)]
pub struct ReplayRow {
    pub id: String,
    pub vars: [usize; 2],
    pub time_ms: [f64; 2],
    pub objective: [Option<f64>; 2],
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    (b != 0.0 && a.is_finite() && b.is_finite()).then(|| a / b)
}

impl ReplayRow {
    pub fn var_ratio(&self) -> Option<f64> {
        ratio(self.vars[0] as f64, self.vars[1] as f64)
    }

    pub fn time_ratio(&self) -> Option<f64> {
        ratio(self.time_ms[0], self.time_ms[1])
    }

    pub fn obj_ratio(&self) -> Option<f64> {
        ratio(self.objective[0]?, self.objective[1]?)
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Runs `pair` on every instance file, in path order. Unreadable files are
/// skipped and reported in the second list.
pub fn replay_instances(
    paths: &[PathBuf],
    pair: [DispatcherKind; 2],
    cfg: &DispatchConfig,
) -> (Vec<ReplayRow>, Vec<(PathBuf, String)>) {
    let mut sorted = paths.to_vec();
    sorted.sort();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for path in sorted {
        let inst = match DispatchInstance::load(&path) {
            Ok(i) => i,
            Err(e) => {
                skipped.push((path, e.to_string()));
                continue;
            }
        };
        let mut row = ReplayRow {
            id: instance_id(&path),
            vars: [0; 2],
            time_ms: [0.0; 2],
            objective: [None; 2],
        };
        for (k, kind) in pair.iter().enumerate() {
            let d = dispatch(*kind, &inst, cfg);
            row.vars[k] = d.stats.vars;
            row.time_ms[k] = d.stats.elapsed.as_secs_f64() * 1000.0;
            row.objective[k] = d.objective;
        }
        rows.push(row);
    }
    (rows, skipped)
}

fn instance_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn write_replay_csv(mut w: impl Write, pair: [DispatcherKind; 2], rows: &[ReplayRow]) -> io::Result<()> {
    let [a, b] = pair;
    writeln!(
        w,
        "instance,vars_{a},vars_{b},var_ratio,time_{a}_ms,time_{b}_ms,time_ratio,obj_ratio"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{:.3},{:.3},{},{}",
            r.id,
            r.vars[0],
            r.vars[1],
            cell(r.var_ratio()),
            r.time_ms[0],
            r.time_ms[1],
            cell(r.time_ratio()),
            cell(r.obj_ratio())
        )?;
    }
    Ok(())
}
