//! Standard Workload Format input and output.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::{JobRecord, WorkloadError};

const KB_PER_GB: i64 = 1 << 20;

/// Per-trace interpretation of SWF fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwfOptions {
    /// Processors per node, used to derive the node count.
    pub cores_per_node: i64,
    pub core_resource: String,
    /// When set, requested memory (KB per processor) becomes a GB demand on this resource.
    pub mem_resource: Option<String>,
}

impl Default for SwfOptions {
    fn default() -> Self {
        SwfOptions {
            cores_per_node: 16,
            core_resource: "core".into(),
            mem_resource: None,
        }
    }
}

/// What happened to each non-empty input line.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SwfStats {
    pub parsed: usize,
    pub comments: usize,
    pub malformed: usize,
    pub bad_runtime: usize,
    pub bad_processors: usize,
}

impl SwfStats {
    pub fn skipped(&self) -> usize {
        self.malformed + self.bad_runtime + self.bad_processors
    }
}

fn parse_line(line: &str, opts: &SwfOptions, stats: &mut SwfStats) -> Option<JobRecord> {
    let fields: Vec<i64> = match line
        .split_whitespace()
        .map(|f| f.parse::<f64>().map(|v| v as i64))
        .collect::<Result<_, _>>()
    {
        Ok(f) => f,
        Err(_) => {
            stats.malformed += 1;
            return None;
        }
    };
    if fields.len() < 12 {
        stats.malformed += 1;
        return None;
    }
    let (id, submit, run) = (fields[0], fields[1], fields[3]);
    let procs = if fields[4] > 0 { fields[4] } else { fields[7] };
    if id < 0 || submit < 0 {
        stats.malformed += 1;
        return None;
    }
    if run <= 0 {
        stats.bad_runtime += 1;
        return None;
    }
    if procs <= 0 {
        stats.bad_processors += 1;
        return None;
    }
    let cpn = opts.cores_per_node.max(1);
    let rn = (procs + cpn - 1) / cpn;
    let mut req = BTreeMap::new();
    req.insert(opts.core_resource.clone(), procs);
    if let Some(mem) = &opts.mem_resource {
        let kb = fields[9];
        if kb > 0 {
            req.insert(mem.clone(), (procs * kb + KB_PER_GB - 1) / KB_PER_GB);
        }
    }
    stats.parsed += 1;
    Some(
        JobRecord {
            job_id: id as u64,
            user_id: fields[11],
            q: submit,
            rn,
            req,
            d_real: run,
            d_expected: 1,
            requested_time: (fields[8] > 0).then_some(fields[8]),
        }
        .normalized(),
    )
}

/// Parses SWF text. Comment lines start with ';'. Jobs with a non-positive
/// run time or processor count, and unparsable lines, are skipped and counted.
pub fn parse_swf(reader: impl BufRead, opts: &SwfOptions) -> Result<(Vec<JobRecord>, SwfStats), WorkloadError> {
    let mut stats = SwfStats::default();
    let mut jobs = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if t.starts_with(';') {
            stats.comments += 1;
            continue;
        }
        if let Some(j) = parse_line(t, opts, &mut stats) {
            jobs.push(j);
        }
    }
    if stats.skipped() > 0 {
        log::warn!(
            "swf: skipped {} lines ({} malformed, {} bad run time, {} bad processors)",
            stats.skipped(),
            stats.malformed,
            stats.bad_runtime,
            stats.bad_processors
        );
    }
    Ok((jobs, stats))
}

/// Writes jobs as 18-field SWF lines; unknown fields are -1.
pub fn render_swf(mut w: impl Write, jobs: &[JobRecord], opts: &SwfOptions) -> std::io::Result<()> {
    writeln!(w, "; Version: 2.2")?;
    writeln!(w, "; Note: cores per node {}", opts.cores_per_node)?;
    for j in jobs {
        let procs = j.req.get(&opts.core_resource).copied().unwrap_or(0);
        let mem_kb = opts
            .mem_resource
            .as_ref()
            .and_then(|m| j.req.get(m))
            .filter(|_| procs > 0)
            .map(|&gb| gb * KB_PER_GB / procs)
            .unwrap_or(-1);
        writeln!(
            w,
            "{} {} -1 {} {} -1 -1 {} {} {} 1 {} -1 -1 -1 -1 -1 -1",
            j.job_id,
            j.q,
            j.d_real,
            procs,
            procs,
            j.requested_time.unwrap_or(-1),
            mem_kb,
            j.user_id
        )?;
    }
    Ok(())
}
