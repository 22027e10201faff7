//! Synthetic temporal networks with planted evolutionary patterns.
//!
//! [`synth_sbm`] draws every snapshot independently from one stochastic block
//! model: a static community structure with nothing temporal in it.
//!
//! [`synth_periodic`] plants three kinds of intra-community behaviour. Each
//! node is given a temporal role, and an intra-community pair takes the
//! strongest role of its two endpoints (periodic over trend over stable):
//!
//! * stable pairs are present in every snapshot with probability `p_in`;
//! * periodic pairs are present with probability `p_in` while
//!   `t mod P < duty * P`, and absent otherwise;
//! * trend pairs are present with probability `p_in * t / T`.
//!
//! Because roles belong to nodes, a node's whole neighbourhood follows its
//! pattern, which is what the embedding history of that node can reveal.
//! Inter-community pairs are unlabeled noise, present with probability `p_out`.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{EdgeLabels, NodeLabels};
use crate::graph::{GraphError, NodeId, NodeNames, TemporalGraph};
use crate::seed;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub nodes: usize,
    pub communities: usize,
    pub snapshots: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Fraction of nodes with the periodic role.
    pub periodic_fraction: f64,
    pub period: usize,
    /// Fraction of each period during which periodic pairs can be present.
    pub duty: f64,
    /// Fraction of the non-periodic nodes with the trend role.
    pub trend_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            nodes: 200,
            communities: 4,
            snapshots: 24,
            p_in: 0.3,
            p_out: 0.01,
            periodic_fraction: 0.5,
            period: 4,
            duty: 0.5,
            trend_fraction: 0.5,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::Invalid(m));
        if !(0.0 <= self.p_out && self.p_out < self.p_in && self.p_in <= 1.0) {
            return fail(format!("need 0 <= p_out < p_in <= 1, got p_in={} p_out={}", self.p_in, self.p_out));
        }
        if self.period < 2 {
            return fail(format!("period must be at least 2, got {}", self.period));
        }
        if !(0.0..=1.0).contains(&self.periodic_fraction) {
            return fail(format!("periodic_fraction must lie in [0, 1], got {}", self.periodic_fraction));
        }
        if !(0.0..=1.0).contains(&self.trend_fraction) {
            return fail(format!("trend_fraction must lie in [0, 1], got {}", self.trend_fraction));
        }
        if !(self.duty > 0.0 && self.duty <= 1.0) {
            return fail(format!("duty must lie in (0, 1], got {}", self.duty));
        }
        if self.communities == 0 || self.nodes < 2 * self.communities {
            return fail(format!(
                "need at least two nodes per community, got {} nodes in {} communities",
                self.nodes, self.communities
            ));
        }
        if self.snapshots == 0 {
            return fail("snapshots must be at least 1".into());
        }
        Ok(())
    }
}

/// Temporal role of a node, and the class of a labeled edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeClass {
    Stable,
    Trend,
    Periodic,
}

impl EdgeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeClass::Stable => "stable",
            EdgeClass::Trend => "trend",
            EdgeClass::Periodic => "periodic",
        }
    }
}

impl fmt::Display for EdgeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A generated network with its ground truth.
#[derive(Clone, Debug)]
pub struct SynthData {
    pub graph: TemporalGraph,
    /// Community of every node.
    pub communities: Vec<usize>,
    /// Labeled static-union edges, `(min, max, class)`, sorted.
    pub edge_labels: Vec<(NodeId, NodeId, EdgeClass)>,
    /// Expected degree of a node in an average snapshot.
    pub expected_degree: f64,
}

impl SynthData {
    /// Communities as node labels, class names `"0"`, `"1"`, ...
    pub fn node_labels(&self) -> NodeLabels {
        let classes = self.communities.iter().max().map_or(0, |m| m + 1);
        NodeLabels {
            items: (0..self.communities.len() as NodeId).collect(),
            labels: self.communities.clone(),
            class_names: (0..classes).map(|c| c.to_string()).collect(),
            missing: 0,
        }
    }

    /// Edge classes as labels, indexed in sorted class-name order like
    /// labels read from a file. Only classes that occur are listed.
    pub fn edge_class_labels(&self) -> EdgeLabels {
        let names: Vec<&str> = self
            .edge_labels
            .iter()
            .map(|&(_, _, c)| c.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index = |c: EdgeClass| names.iter().position(|&n| n == c.as_str()).expect("class present");
        EdgeLabels {
            items: self.edge_labels.iter().map(|&(i, j, _)| (i, j)).collect(),
            labels: self.edge_labels.iter().map(|&(_, _, c)| index(c)).collect(),
            class_names: names.into_iter().map(String::from).collect(),
            missing: 0,
        }
    }
}

fn community_of(v: usize, n: usize, c: usize) -> usize {
    v * c / n
}

fn draw_snapshots<R, F>(n: usize, snapshots: usize, rng: &mut R, mut prob: F) -> (Vec<Vec<(NodeId, NodeId)>>, f64)
where
    R: Rng,
    F: FnMut(usize, usize, usize) -> f64,
{
    let mut out = vec![Vec::new(); snapshots];
    let mut expected = 0.0;
    for (ti, edges) in out.iter_mut().enumerate() {
        let t = ti + 1;
        for i in 0..n {
            for j in i + 1..n {
                let p = prob(i, j, t);
                expected += p;
                if p > 0.0 && rng.random::<f64>() < p {
                    edges.push((i as NodeId, j as NodeId));
                }
            }
        }
    }
    (out, 2.0 * expected / (n * snapshots) as f64)
}

/// Independent stochastic-block-model snapshots; node label = community.
pub fn synth_sbm(n: usize, c: usize, p_in: f64, p_out: f64, snapshots: usize, seed: u64) -> Result<SynthData, SynthError> {
    let spec = SynthSpec {
        nodes: n,
        communities: c,
        snapshots,
        p_in,
        p_out,
        periodic_fraction: 0.0,
        trend_fraction: 0.0,
        seed,
        ..SynthSpec::default()
    };
    spec.validate()?;
    let mut rng = seed::rng(seed, &[seed::STREAM_SYNTH, 0]);
    let (snaps, expected_degree) = draw_snapshots(n, snapshots, &mut rng, |i, j, _| {
        if community_of(i, n, c) == community_of(j, n, c) {
            p_in
        } else {
            p_out
        }
    });
    finish(n, c, snaps, Vec::new(), expected_degree)
}

/// Snapshots with planted stable, periodic and trend patterns.
pub fn synth_periodic(spec: &SynthSpec) -> Result<SynthData, SynthError> {
    spec.validate()?;
    let (n, c, big_t) = (spec.nodes, spec.communities, spec.snapshots);
    let mut rng = seed::rng(spec.seed, &[seed::STREAM_SYNTH, 1]);

    // exact role counts per community, randomly placed
    let mut roles = vec![EdgeClass::Stable; n];
    for comm in 0..c {
        let mut members: Vec<usize> = (0..n).filter(|&v| community_of(v, n, c) == comm).collect();
        members.shuffle(&mut rng);
        let periodic = (spec.periodic_fraction * members.len() as f64).round() as usize;
        let trend = (spec.trend_fraction * (members.len() - periodic) as f64).round() as usize;
        for (k, &v) in members.iter().enumerate() {
            roles[v] = if k < periodic {
                EdgeClass::Periodic
            } else if k < periodic + trend {
                EdgeClass::Trend
            } else {
                EdgeClass::Stable
            };
        }
    }

    let on_steps = spec.duty * spec.period as f64;
    let (snaps, expected_degree) = draw_snapshots(n, big_t, &mut rng, |i, j, t| {
        if community_of(i, n, c) != community_of(j, n, c) {
            return spec.p_out;
        }
        match roles[i].max(roles[j]) {
            EdgeClass::Stable => spec.p_in,
            EdgeClass::Periodic => {
                if ((t % spec.period) as f64) < on_steps {
                    spec.p_in
                } else {
                    0.0
                }
            }
            EdgeClass::Trend => spec.p_in * t as f64 / big_t as f64,
        }
    });

    let mut labeled = std::collections::BTreeSet::new();
    for edges in &snaps {
        for &(i, j) in edges {
            if community_of(i as usize, n, c) == community_of(j as usize, n, c) {
                labeled.insert((i, j));
            }
        }
    }
    let edge_labels = labeled
        .into_iter()
        .map(|(i, j)| (i, j, roles[i as usize].max(roles[j as usize])))
        .collect();
    finish(n, c, snaps, edge_labels, expected_degree)
}

fn finish(
    n: usize,
    c: usize,
    snaps: Vec<Vec<(NodeId, NodeId)>>,
    edge_labels: Vec<(NodeId, NodeId, EdgeClass)>,
    expected_degree: f64,
) -> Result<SynthData, SynthError> {
    if expected_degree < 1.0 {
        log::warn!("expected degree per snapshot is {expected_degree:.2}; embeddings will be noisy");
    }
    let graph = TemporalGraph::from_snapshots(NodeNames::numeric(n), snaps)?;
    Ok(SynthData {
        graph,
        communities: (0..n).map(|v| community_of(v, n, c)).collect(),
        edge_labels,
        expected_degree,
    })
}

/// File names written by [`write_dataset`].
pub const EDGES_FILE: &str = "edges.tsv";
pub const NODE_LABELS_FILE: &str = "node_labels.tsv";
pub const EDGE_LABELS_FILE: &str = "edge_labels.tsv";
pub const SPEC_FILE: &str = "spec.toml";

/// Writes the edge list, both label files and the spec into `dir`.
pub fn write_dataset(data: &SynthData, spec: &SynthSpec, dir: &Path) -> Result<(), SynthError> {
    fs::create_dir_all(dir)?;
    let names = data.graph.names();

    let mut edges = BufWriter::new(fs::File::create(dir.join(EDGES_FILE))?);
    for (ti, snapshot) in data.graph.snapshots().iter().enumerate() {
        for (i, j) in snapshot.edges() {
            writeln!(edges, "{}\t{}\t{}", names.name(i), names.name(j), ti + 1)?;
        }
    }
    edges.flush()?;

    let mut nodes = BufWriter::new(fs::File::create(dir.join(NODE_LABELS_FILE))?);
    for (v, comm) in data.communities.iter().enumerate() {
        writeln!(nodes, "{}\t{}", names.name(v as NodeId), comm)?;
    }
    nodes.flush()?;

    let mut labels = BufWriter::new(fs::File::create(dir.join(EDGE_LABELS_FILE))?);
    for &(i, j, class) in &data.edge_labels {
        writeln!(labels, "{}\t{}\t{}", names.name(i), names.name(j), class)?;
    }
    labels.flush()?;

    let text = toml::to_string(spec).map_err(|e| SynthError::Invalid(e.to_string()))?;
    fs::write(dir.join(SPEC_FILE), text)?;
    Ok(())
}
