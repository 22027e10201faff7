//! Snapshot-structured temporal networks.
//!
//! A [`TemporalGraph`] is a fixed node universe together with one undirected
//! [`EdgeSet`] per time step. Snapshots are addressed with 1-based indices,
//! `1..=T`, to line up with the time steps used everywhere else in the crate.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use thiserror::Error;

/// Dense internal node identifier.
pub type NodeId = u32;

/// Floor applied to structural drift when it is used as a denominator.
pub const DEFAULT_DRIFT_EPS: f64 = 1e-3;

/// Exponent of the degree-based negative sampling distribution.
pub const DEFAULT_NEG_POWER: f64 = 0.75;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("no edges left after filtering")]
    EmptyGraph,
    #[error("snapshot {t} out of range 1..={count}")]
    SnapshotOutOfRange { t: usize, count: usize },
    #[error("snapshot {t} has no edges to sample negatives from")]
    EmptyTable { t: usize },
    #[error("interval width must be positive, got {0}")]
    BadInterval(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How the time column of an edge list becomes a snapshot index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SnapshotSpec {
    /// The time column already is a snapshot index.
    ById,
    /// Floor-divide raw timestamps into bins of the given width.
    ByInterval(f64),
}

/// Undirected, unweighted adjacency for one snapshot.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EdgeSet {
    adjacency: Vec<Vec<NodeId>>,
    edge_count: usize,
}

impl EdgeSet {
    /// Builds an edge set over `node_count` nodes. Self-loops and duplicates
    /// are dropped; both orientations of an edge collapse to one.
    pub fn from_edges<I>(node_count: usize, edges: I) -> Self
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut adjacency = vec![Vec::new(); node_count];
        for (a, b) in edges {
            if a == b {
                continue;
            }
            adjacency[a as usize].push(b);
            adjacency[b as usize].push(a);
        }
        let mut edge_count = 0;
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
            edge_count += list.len();
        }
        EdgeSet {
            adjacency,
            edge_count: edge_count / 2,
        }
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Sorted, duplicate-free neighbors of `v`.
    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.adjacency[v as usize]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency[v as usize].len()
    }

    pub fn contains(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency[a as usize].binary_search(&b).is_ok()
    }

    /// Each undirected edge once, as `(min, max)`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(a, list)| {
            let a = a as NodeId;
            list.iter().filter(move |&&b| b > a).map(move |&b| (a, b))
        })
    }
}

/// Bidirectional mapping between external labels and dense ids.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NodeNames {
    names: Vec<String>,
    index: HashMap<String, NodeId>,
}

impl NodeNames {
    /// Names `0..n` by their decimal index.
    pub fn numeric(n: usize) -> Self {
        let mut names = NodeNames::default();
        for i in 0..n {
            names.intern(&i.to_string());
        }
        names
    }

    pub fn intern(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as NodeId;
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<NodeId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Counters reported by [`load_edge_list`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub records: usize,
    pub self_loops: usize,
    pub duplicates: usize,
}

/// A fixed node set observed through an ordered list of snapshots.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalGraph {
    names: NodeNames,
    snapshots: Vec<EdgeSet>,
}

impl TemporalGraph {
    /// Assembles a graph from per-snapshot edge lists (index 0 is snapshot 1).
    pub fn from_snapshots(names: NodeNames, snapshots: Vec<Vec<(NodeId, NodeId)>>) -> Result<Self, GraphError> {
        let n = names.len();
        let snapshots: Vec<EdgeSet> = snapshots
            .into_iter()
            .map(|edges| EdgeSet::from_edges(n, edges))
            .collect();
        if snapshots.is_empty() || snapshots.iter().all(|s| s.edge_count() == 0) {
            return Err(GraphError::EmptyGraph);
        }
        Ok(TemporalGraph { names, snapshots })
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    /// Number of snapshots `T`.
    pub fn snapshot_count(&self) -> usize {
        self.snapshots.len()
    }

    pub fn names(&self) -> &NodeNames {
        &self.names
    }

    /// Edge set at time step `t` (1-based).
    pub fn snapshot(&self, t: usize) -> Result<&EdgeSet, GraphError> {
        if t == 0 || t > self.snapshots.len() {
            return Err(GraphError::SnapshotOutOfRange {
                t,
                count: self.snapshots.len(),
            });
        }
        Ok(&self.snapshots[t - 1])
    }

    pub fn snapshots(&self) -> &[EdgeSet] {
        &self.snapshots
    }

    /// Union of all snapshots: every edge that exists at least once.
    pub fn static_edges(&self) -> EdgeSet {
        let n = self.node_count();
        EdgeSet::from_edges(n, self.snapshots.iter().flat_map(|s| s.edges()))
    }

    /// Jaccard distance between the neighbor sets of `v` at `t - 1` and `t`.
    ///
    /// Zero when both sets are empty. Requires `2 <= t <= T`.
    pub fn structural_drift(&self, t: usize, v: NodeId) -> Result<f64, GraphError> {
        if t < 2 {
            return Err(GraphError::SnapshotOutOfRange {
                t,
                count: self.snapshots.len(),
            });
        }
        let before = self.snapshot(t - 1)?.neighbors(v);
        let after = self.snapshot(t)?.neighbors(v);
        Ok(jaccard_distance(before, after))
    }

    /// Structural drift floored at `eps`, for use as a denominator.
    pub fn drift_denominator(&self, t: usize, v: NodeId, eps: f64) -> Result<f64, GraphError> {
        Ok(self.structural_drift(t, v)?.max(eps))
    }
}

fn jaccard_distance(a: &[NodeId], b: &[NodeId]) -> f64 {
    let (mut i, mut j, mut common) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - common;
    if union == 0 {
        0.0
    } else {
        1.0 - common as f64 / union as f64
    }
}

/// Reads a `src TAB dst TAB time` edge list from disk.
pub fn load_edge_list(path: &Path, slicing: SnapshotSpec) -> Result<(TemporalGraph, LoadReport), GraphError> {
    let file = File::open(path)?;
    parse_edge_list(BufReader::new(file), slicing)
}

/// Parses an edge list from any reader. Lines starting with `#` and blank
/// lines are ignored. Snapshot bins are compacted: the `T` distinct
/// non-empty bins become snapshots `1..=T` in ascending order.
pub fn parse_edge_list<R: BufRead>(reader: R, slicing: SnapshotSpec) -> Result<(TemporalGraph, LoadReport), GraphError> {
    if let SnapshotSpec::ByInterval(width) = slicing {
        if !(width > 0.0 && width.is_finite()) {
            return Err(GraphError::BadInterval(width));
        }
    }
    let mut names = NodeNames::default();
    let mut report = LoadReport::default();
    let mut records: Vec<(NodeId, NodeId, i64)> = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(GraphError::Parse {
                line: lineno,
                reason: format!("expected `src<TAB>dst<TAB>time`, got {} field(s)", fields.len()),
            });
        }
        let bin = parse_bin(fields[2], slicing).ok_or_else(|| GraphError::Parse {
            line: lineno,
            reason: format!("bad time value `{}`", fields[2]),
        })?;
        report.records += 1;
        if fields[0] == fields[1] {
            report.self_loops += 1;
            continue;
        }
        let a = names.intern(fields[0]);
        let b = names.intern(fields[1]);
        records.push((a, b, bin));
    }

    if report.self_loops > 0 {
        log::warn!("dropped {} self-loop record(s)", report.self_loops);
    }
    if records.is_empty() {
        return Err(GraphError::EmptyGraph);
    }

    let mut bins: Vec<i64> = records.iter().map(|r| r.2).collect();
    bins.sort_unstable();
    bins.dedup();
    let mut per_snapshot = vec![Vec::new(); bins.len()];
    for (a, b, bin) in records {
        let t = bins.binary_search(&bin).expect("bin was collected above");
        per_snapshot[t].push((a, b));
    }
    let graph = TemporalGraph::from_snapshots(names, per_snapshot)?;
    let stored: usize = graph.snapshots.iter().map(EdgeSet::edge_count).sum();
    report.duplicates = report.records - report.self_loops - stored;
    Ok((graph, report))
}

fn parse_bin(raw: &str, slicing: SnapshotSpec) -> Option<i64> {
    match slicing {
        SnapshotSpec::ById => raw.parse::<i64>().ok(),
        SnapshotSpec::ByInterval(width) => {
            if let Ok(v) = raw.parse::<i64>() {
                if width.fract() == 0.0 {
                    return Some(v.div_euclid(width as i64));
                }
            }
            let v: f64 = raw.parse().ok()?;
            v.is_finite().then(|| (v / width).floor() as i64)
        }
    }
}

/// Cumulative-weight table for drawing negatives with probability
/// proportional to `degree^power` in one snapshot.
#[derive(Clone, Debug)]
pub struct SamplingTable {
    nodes: Vec<NodeId>,
    cumulative: Vec<f64>,
    snapshot: usize,
}

impl SamplingTable {
    pub fn build(g: &TemporalGraph, t: usize, power: f64) -> Result<Self, GraphError> {
        let edges = g.snapshot(t)?;
        let mut nodes = Vec::new();
        let mut cumulative = Vec::new();
        let mut total = 0.0;
        for v in 0..edges.node_count() as NodeId {
            let deg = edges.degree(v);
            if deg == 0 {
                continue;
            }
            total += (deg as f64).powf(power);
            nodes.push(v);
            cumulative.push(total);
        }
        if nodes.is_empty() || !(total > 0.0 && total.is_finite()) {
            return Err(GraphError::EmptyTable { t });
        }
        Ok(SamplingTable {
            nodes,
            cumulative,
            snapshot: t,
        })
    }

    pub fn snapshot(&self) -> usize {
        self.snapshot
    }

    /// Nodes that can be drawn.
    pub fn support(&self) -> &[NodeId] {
        &self.nodes
    }

    fn total(&self) -> f64 {
        *self.cumulative.last().expect("table is never empty")
    }

    /// Probability of drawing `v`.
    pub fn probability(&self, v: NodeId) -> f64 {
        match self.nodes.binary_search(&v) {
            Ok(i) => {
                let lo = if i == 0 { 0.0 } else { self.cumulative[i - 1] };
                (self.cumulative[i] - lo) / self.total()
            }
            Err(_) => 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> NodeId {
        let r = rng.random::<f64>() * self.total();
        let i = self.cumulative.partition_point(|&c| c <= r);
        self.nodes[i.min(self.nodes.len() - 1)]
    }
}
