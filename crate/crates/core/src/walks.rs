//! Truncated uniform random walks over a single snapshot, and the
//! `(center, context)` pairs they induce.

use rand::Rng;
use rayon::prelude::*;

use crate::graph::{EdgeSet, GraphError, NodeId, TemporalGraph};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Walk {
    pub nodes: Vec<NodeId>,
    pub snapshot: usize,
}

impl Walk {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Calls `f(center, context)` for every pair within `window` positions.
    /// Pairs whose two entries are the same node are skipped.
    pub fn for_each_context<F: FnMut(NodeId, NodeId)>(&self, window: usize, mut f: F) {
        let nodes = &self.nodes;
        for (p, &center) in nodes.iter().enumerate() {
            let lo = p.saturating_sub(window);
            let hi = (p + window).min(nodes.len() - 1);
            for (q, &ctx) in nodes.iter().enumerate().take(hi + 1).skip(lo) {
                if q != p && ctx != center {
                    f(center, ctx);
                }
            }
        }
    }
}

/// All `(center, context)` pairs of a walk, in position order.
pub fn contexts(walk: &Walk, window: usize) -> Vec<(NodeId, NodeId)> {
    let mut out = Vec::new();
    walk.for_each_context(window, |c, x| out.push((c, x)));
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalkSet {
    pub walks: Vec<Walk>,
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub seed: u64,
}

fn walk_from<R: Rng>(edges: &EdgeSet, start: NodeId, length: usize, rng: &mut R) -> Vec<NodeId> {
    let mut nodes = Vec::with_capacity(length);
    nodes.push(start);
    let mut cur = start;
    while nodes.len() < length {
        let nbrs = edges.neighbors(cur);
        if nbrs.is_empty() {
            break;
        }
        cur = nbrs[rng.random_range(0..nbrs.len())];
        nodes.push(cur);
    }
    nodes
}

/// Generates `walks_per_node` walks of up to `walk_length` nodes from every
/// node that has at least one edge in snapshot `t`.
///
/// Each start node draws from its own stream derived from `(seed, node)`, so
/// the result does not depend on how many threads run the generation.
pub fn generate_walks(
    g: &TemporalGraph,
    t: usize,
    walks_per_node: usize,
    walk_length: usize,
    seed: u64,
) -> Result<WalkSet, GraphError> {
    let edges = g.snapshot(t)?;
    let starts: Vec<NodeId> = (0..g.node_count() as NodeId)
        .filter(|&v| edges.degree(v) > 0)
        .collect();
    let walks: Vec<Walk> = starts
        .par_iter()
        .flat_map_iter(|&v| {
            let mut rng = seed::rng(seed, &[seed::STREAM_WALKS, v as u64]);
            (0..walks_per_node)
                .map(|_| Walk {
                    nodes: walk_from(edges, v, walk_length.max(1), &mut rng),
                    snapshot: t,
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(WalkSet {
        walks,
        walks_per_node,
        walk_length,
        seed,
    })
}
