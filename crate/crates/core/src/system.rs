//! Machine description: nodes, per-node capacities and the flattened
//! per-resource position maps.
//!
//! Node ids and resource positions are 1-based. Position `p` of resource `r`
//! belongs to node `map(r)[p - 1]`; positions of one node are contiguous and
//! nodes appear in id order.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub type NodeId = usize;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SystemError {
    #[error("system has no nodes")]
    NoNodes,
    #[error("system has no resource types")]
    NoResources,
    #[error("duplicate resource type '{0}'")]
    DuplicateResource(String),
    #[error("group {group}: negative capacity {value} for '{resource}'")]
    NegativeCapacity {
        group: usize,
        resource: String,
        value: i64,
    },
    #[error("group {group}: unknown resource type '{resource}'")]
    UnknownResource { group: usize, resource: String },
    #[error("position {p} out of range 1..={tcap} for '{resource}'")]
    PositionOutOfRange { resource: String, p: i64, tcap: i64 },
    #[error("unknown system preset '{0}'")]
    UnknownPreset(String),
    #[error("cannot read system config: {0}")]
    Io(String),
    #[error("invalid system config: {0}")]
    Parse(String),
}

/// A run of identical nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeGroup {
    pub count: usize,
    #[serde(default)]
    pub cap: BTreeMap<String, i64>,
}

/// Structured-text system description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub resources: Vec<String>,
    #[serde(rename = "group")]
    pub groups: Vec<NodeGroup>,
}

impl SystemConfig {
    pub fn from_toml(text: &str) -> Result<Self, SystemError> {
        toml::from_str(text).map_err(|e| SystemError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SystemError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SystemError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("system config serializes")
    }

    /// 64 nodes with 16 cores and 16 GB each; nodes 1-32 carry 2 GPUs,
    /// nodes 33-64 carry 2 MICs.
    pub fn eurora() -> Self {
        SystemConfig {
            name: Some("eurora".into()),
            resources: vec!["core".into(), "gpu".into(), "mic".into(), "mem".into()],
            groups: vec![
                group(32, &[("core", 16), ("gpu", 2), ("mem", 16)]),
                group(32, &[("core", 16), ("mic", 2), ("mem", 16)]),
            ],
        }
    }

    /// 1152 thin nodes (20 cores, 64 GB) and 21 fat nodes (48 cores, 4 GPUs, 1000 GB).
    pub fn kit_forhlr2() -> Self {
        SystemConfig {
            name: Some("kit-forhlr2".into()),
            resources: vec!["core".into(), "gpu".into(), "mem".into()],
            groups: vec![
                group(1152, &[("core", 20), ("mem", 64)]),
                group(21, &[("core", 48), ("gpu", 4), ("mem", 1000)]),
            ],
        }
    }

    /// Eurora-sized nodes where only the first quarter carries GPUs.
    pub fn gpu_scarce(nodes: usize) -> Self {
        let with_gpu = (nodes / 4).max(1);
        SystemConfig {
            name: Some(format!("gpu-scarce-{nodes}")),
            resources: vec!["core".into(), "gpu".into(), "mem".into()],
            groups: vec![
                group(with_gpu, &[("core", 16), ("gpu", 2), ("mem", 16)]),
                group(nodes - with_gpu, &[("core", 16), ("mem", 16)]),
            ],
        }
    }

    pub fn preset(name: &str) -> Result<Self, SystemError> {
        match name {
            "eurora" => Ok(Self::eurora()),
            "kit-forhlr2" | "kit" | "forhlr2" => Ok(Self::kit_forhlr2()),
            "gpu-scarce" => Ok(Self::gpu_scarce(64)),
            _ => Err(SystemError::UnknownPreset(name.to_string())),
        }
    }

    /// A preset name, or else a path to a TOML config.
    pub fn preset_or_file(spec: &str) -> Result<Self, SystemError> {
        match Self::preset(spec) {
            Ok(c) => Ok(c),
            Err(SystemError::UnknownPreset(_)) if Path::new(spec).exists() => Self::load(Path::new(spec)),
            Err(e) => Err(e),
        }
    }
}

pub fn group(count: usize, caps: &[(&str, i64)]) -> NodeGroup {
    NodeGroup {
        count,
        cap: caps.iter().map(|&(r, c)| (r.to_string(), c)).collect(),
    }
}

/// Immutable machine model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemModel {
    name: String,
    resources: Vec<String>,
    // caps[n - 1][r]
    caps: Vec<Vec<i64>>,
    tcap: Vec<i64>,
    // maps[r][p - 1] = node id
    maps: Vec<Vec<i64>>,
    // first[r][n - 1] = first position of node n on r (1-based); count is cap
    first: Vec<Vec<i64>>,
    config: SystemConfig,
}

impl SystemModel {
    pub fn build(config: &SystemConfig) -> Result<Self, SystemError> {
        if config.resources.is_empty() {
            return Err(SystemError::NoResources);
        }
        for (k, r) in config.resources.iter().enumerate() {
            if config.resources[..k].contains(r) {
                return Err(SystemError::DuplicateResource(r.clone()));
            }
        }
        let nr = config.resources.len();
        let mut caps = Vec::new();
        for (g, grp) in config.groups.iter().enumerate() {
            let mut row = vec![0i64; nr];
            for (res, &value) in &grp.cap {
                let Some(r) = config.resources.iter().position(|x| x == res) else {
                    return Err(SystemError::UnknownResource {
                        group: g,
                        resource: res.clone(),
                    });
                };
                if value < 0 {
                    return Err(SystemError::NegativeCapacity {
                        group: g,
                        resource: res.clone(),
                        value,
                    });
                }
                row[r] = value;
            }
            caps.extend(std::iter::repeat_n(row, grp.count));
        }
        if caps.is_empty() {
            return Err(SystemError::NoNodes);
        }
        let mut maps = vec![Vec::new(); nr];
        let mut first = vec![Vec::with_capacity(caps.len()); nr];
        for (i, row) in caps.iter().enumerate() {
            for r in 0..nr {
                first[r].push(maps[r].len() as i64 + 1);
                maps[r].extend(std::iter::repeat_n(i as i64 + 1, row[r] as usize));
            }
        }
        let tcap = maps.iter().map(|m| m.len() as i64).collect();
        Ok(SystemModel {
            name: config.name.clone().unwrap_or_else(|| "custom".into()),
            resources: config.resources.clone(),
            caps,
            tcap,
            maps,
            first,
            config: config.clone(),
        })
    }

    pub fn preset(name: &str) -> Result<Self, SystemError> {
        Self::build(&SystemConfig::preset(name)?)
    }

    /// `nodes` copies of one node type.
    pub fn homogeneous(nodes: usize, caps: &[(&str, i64)]) -> Result<Self, SystemError> {
        Self::build(&SystemConfig {
            name: Some(format!("homogeneous-{nodes}")),
            resources: caps.iter().map(|c| c.0.to_string()).collect(),
            groups: vec![group(nodes, caps)],
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn resources(&self) -> &[String] {
        &self.resources
    }

    pub fn num_resources(&self) -> usize {
        self.resources.len()
    }

    pub fn resource_index(&self, name: &str) -> Option<usize> {
        self.resources.iter().position(|r| r == name)
    }

    pub fn num_nodes(&self) -> usize {
        self.caps.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        1..=self.caps.len()
    }

    pub fn cap(&self, n: NodeId, r: usize) -> i64 {
        self.caps[n - 1][r]
    }

    pub fn tcap(&self, r: usize) -> i64 {
        self.tcap[r]
    }

    pub fn max_cap(&self, r: usize) -> i64 {
        self.caps.iter().map(|c| c[r]).max().unwrap_or(0)
    }

    /// Node ids by position, `map(r)[p - 1]`.
    pub fn map(&self, r: usize) -> &[i64] {
        &self.maps[r]
    }

    pub fn position_to_node(&self, r: usize, p: i64) -> Result<NodeId, SystemError> {
        if p < 1 || p > self.tcap[r] {
            return Err(SystemError::PositionOutOfRange {
                resource: self.resources[r].clone(),
                p,
                tcap: self.tcap[r],
            });
        }
        Ok(self.maps[r][(p - 1) as usize] as NodeId)
    }

    /// Positions `[first, last]` of node `n` on `r`, or None when it has none.
    pub fn node_range(&self, n: NodeId, r: usize) -> Option<(i64, i64)> {
        let c = self.caps[n - 1][r];
        (c > 0).then(|| {
            let a = self.first[r][n - 1];
            (a, a + c - 1)
        })
    }

    /// 1-based index of position `p` inside its node.
    pub fn slot_in_node(&self, r: usize, p: i64) -> Result<i64, SystemError> {
        let n = self.position_to_node(r, p)?;
        Ok(p - self.first[r][n - 1] + 1)
    }
}

impl fmt::Display for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} nodes;", self.name, self.num_nodes())?;
        for (r, name) in self.resources.iter().enumerate() {
            write!(f, " {}={}", name, self.tcap[r])?;
        }
        write!(f, ")")
    }
}

/// A contiguous block of positions held by one unit of a job on one resource type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Segment {
    pub unit: usize,
    pub r: usize,
    /// First position (1-based).
    pub y: i64,
    /// Number of positions.
    pub q: i64,
}

impl Segment {
    pub fn last(&self) -> i64 {
        self.y + self.q - 1
    }
}

/// Where and when a job runs. One unit may hold several segments of the same
/// resource type when its positions on a node are not contiguous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    pub job_id: u64,
    pub start: i64,
    /// Reserved duration; the job occupies `[start, start + duration)`.
    pub duration: i64,
    pub segments: Vec<Segment>,
}

impl Allocation {
    pub fn end(&self) -> i64 {
        self.start + self.duration
    }

    pub fn units(&self) -> usize {
        self.segments.iter().map(|s| s.unit + 1).max().unwrap_or(0)
    }

    /// Node of each unit, if the allocation is well formed.
    pub fn unit_nodes(&self, system: &SystemModel) -> Vec<Option<NodeId>> {
        let mut out = vec![None; self.units()];
        for s in &self.segments {
            if let Ok(n) = system.position_to_node(s.r, s.y) {
                out[s.unit].get_or_insert(n);
            }
        }
        out
    }

    /// Amount of resource `r` held on node `n`.
    pub fn usage(&self, system: &SystemModel, n: NodeId, r: usize) -> i64 {
        self.segments
            .iter()
            .filter(|s| s.r == r && system.position_to_node(r, s.y) == Ok(n))
            .map(|s| s.q)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    /// Segment reaches outside `[1, Tcap]` or has a non-positive extent.
    OutOfRange,
    /// A unit's positions span more than one node.
    CrossNode,
    /// Two time-overlapping units use the same position.
    DoubleBooking,
    /// A unit's resource types landed on different nodes.
    SplitUnit,
}

/// A structured report of the first violated rule.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{kind:?}: jobs {jobs:?}, resource {r}, position {position}, time {time}")]
pub struct Violation {
    pub kind: ViolationKind,
    pub jobs: Vec<u64>,
    pub r: usize,
    pub position: i64,
    pub time: i64,
}

fn check_shape(system: &SystemModel, a: &Allocation) -> Result<(), Violation> {
    let violation = |kind, r, position| Violation {
        kind,
        jobs: vec![a.job_id],
        r,
        position,
        time: a.start,
    };
    let mut unit_node: BTreeMap<usize, NodeId> = BTreeMap::new();
    for s in &a.segments {
        if s.r >= system.num_resources() || s.q < 1 || s.y < 1 || s.last() > system.tcap(s.r) {
            return Err(violation(ViolationKind::OutOfRange, s.r, s.y));
        }
        let map = system.map(s.r);
        let node = map[(s.y - 1) as usize];
        // contiguous node ranges: checking the last cell is enough
        if map[(s.last() - 1) as usize] != node {
            let p = (s.y..=s.last())
                .find(|&p| map[(p - 1) as usize] != node)
                .unwrap();
            return Err(violation(ViolationKind::CrossNode, s.r, p));
        }
        match unit_node.get(&s.unit) {
            Some(&n) if n != node as NodeId => {
                return Err(violation(ViolationKind::SplitUnit, s.r, s.y));
            }
            Some(_) => {}
            None => {
                unit_node.insert(s.unit, node as NodeId);
            }
        }
    }
    Ok(())
}

fn time_overlap(a: &Allocation, b: &Allocation) -> bool {
    a.start < b.end() && b.start < a.end()
}

fn position_clash(a: &Allocation, b: &Allocation, same_job: bool) -> Option<(usize, i64)> {
    for (i, sa) in a.segments.iter().enumerate() {
        for (j, sb) in b.segments.iter().enumerate() {
            if same_job && i >= j {
                continue;
            }
            if sa.r == sb.r && sa.y <= sb.last() && sb.y <= sa.last() {
                return Some((sa.r, sa.y.max(sb.y)));
            }
        }
    }
    None
}

/// Checks `candidate` on its own and against every allocation in `running`.
pub fn validate_allocation(
    system: &SystemModel,
    running: &[Allocation],
    candidate: &Allocation,
) -> Result<(), Violation> {
    check_shape(system, candidate)?;
    if let Some((r, p)) = position_clash(candidate, candidate, true) {
        return Err(Violation {
            kind: ViolationKind::DoubleBooking,
            jobs: vec![candidate.job_id],
            r,
            position: p,
            time: candidate.start,
        });
    }
    for other in running {
        if !time_overlap(candidate, other) {
            continue;
        }
        if let Some((r, p)) = position_clash(candidate, other, false) {
            return Err(Violation {
                kind: ViolationKind::DoubleBooking,
                jobs: vec![other.job_id, candidate.job_id],
                r,
                position: p,
                time: candidate.start.max(other.start),
            });
        }
    }
    Ok(())
}

/// Validates every allocation against all the others.
pub fn validate_all(system: &SystemModel, allocs: &[Allocation]) -> Result<(), Violation> {
    for (k, a) in allocs.iter().enumerate() {
        validate_allocation(system, &allocs[..k], a)?;
    }
    Ok(())
}
