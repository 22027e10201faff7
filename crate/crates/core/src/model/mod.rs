//! Per-snapshot embeddings, the relative-position decoder, the three loss
//! terms and the incremental snapshot trainer.

mod hogwild;
pub mod loss;
pub mod train;

use rand::Rng;
use thiserror::Error;

use crate::graph::{GraphError, NodeId};
use crate::kernels::{FeatureMode, HistoryWindow, KernelError, Scales};

pub use loss::{
    decode_relpos, draw_negatives, smooth_loss, struct_loss, temporal_loss, LossGrad, Slab, TemporalGrad,
};
pub use train::{train_all, train_snapshot, EpochLoss, SnapshotReport, Trained};

/// Norm below which a cosine is treated as undefined.
pub const NORM_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("snapshot {t} trained out of order (next expected {expected})")]
    OutOfOrder { t: usize, expected: usize },
    #[error(
        "non-finite loss at snapshot {t}, epoch {epoch} (learning rate {learning_rate}, pair {pair:?})"
    )]
    NonFinite {
        t: usize,
        epoch: usize,
        learning_rate: f64,
        pair: (NodeId, NodeId),
    },
}

/// The distance between a relative position and its decoded prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distance {
    /// `1 - cos(x, y)`: zero when aligned, two when opposite.
    #[default]
    OneMinusCos,
    /// Plain `cos(x, y)`; minimizing it anti-aligns. Kept for ablations.
    RawCos,
}

/// When the smoothness penalty is applied during an epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmoothSchedule {
    /// Once per node after each pass over the walks.
    #[default]
    PerEpoch,
    /// After every walk, to the nodes that walk touched.
    PerSequence,
}

/// Hyperparameters of [`train_all`].
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub history_len: usize,
    pub scales: Scales,
    pub decay_rate: f64,
    pub features: FeatureMode,
    /// Weight of the temporal objective.
    pub temporal_weight: f64,
    /// Weight of the smoothness penalty.
    pub smooth_weight: f64,
    /// Negatives per positive pair.
    pub negatives: usize,
    pub neg_power: f64,
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub window: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub workers: usize,
    pub distance: Distance,
    pub smooth_schedule: SmoothSchedule,
    /// Reuse one walk set for every epoch of a snapshot.
    pub freeze_walks: bool,
    pub drift_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 32,
            history_len: 8,
            scales: Scales::Dyadic(3),
            decay_rate: 0.5,
            features: FeatureMode::Full,
            temporal_weight: 1.0,
            smooth_weight: 0.01,
            negatives: 5,
            neg_power: crate::graph::DEFAULT_NEG_POWER,
            walks_per_node: 10,
            walk_length: 10,
            window: 5,
            epochs: 10,
            learning_rate: 0.025,
            seed: 0,
            workers: 1,
            distance: Distance::OneMinusCos,
            smooth_schedule: SmoothSchedule::PerEpoch,
            freeze_walks: false,
            drift_eps: crate::graph::DEFAULT_DRIFT_EPS,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: &str| Err(ModelError::Config(msg.to_owned()));
        if self.dim == 0 {
            return fail("dim must be at least 1");
        }
        if !(self.temporal_weight >= 0.0 && self.temporal_weight.is_finite()) {
            return fail("temporal_weight must be finite and >= 0");
        }
        if !(self.smooth_weight >= 0.0 && self.smooth_weight.is_finite()) {
            return fail("smooth_weight must be finite and >= 0");
        }
        if self.negatives == 0 {
            return fail("negatives must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be finite and > 0");
        }
        if !(self.neg_power >= 0.0 && self.neg_power.is_finite()) {
            return fail("neg_power must be finite and >= 0");
        }
        if !(self.drift_eps > 0.0 && self.drift_eps.is_finite()) {
            return fail("drift_eps must be finite and > 0");
        }
        if self.walks_per_node == 0 || self.walk_length == 0 || self.window == 0 || self.epochs == 0 {
            return fail("walks_per_node, walk_length, window and epochs must be at least 1");
        }
        if self.workers == 0 {
            return fail("workers must be at least 1");
        }
        self.scales.validate(self.history_len)?;
        crate::kernels::decay_kernel(1, self.decay_rate)?;
        Ok(())
    }

    /// True when neither the temporal nor the smoothness term is active,
    /// which reduces training to per-snapshot skip-gram over random walks.
    pub fn is_deepwalk_equivalent(&self) -> bool {
        self.temporal_weight == 0.0 && self.smooth_weight == 0.0
    }
}

/// Node vectors for every snapshot, `u[t][v]`, laid out contiguously.
///
/// Snapshots are trained in order; once snapshot `t` is marked trained it
/// is read-only history for later snapshots.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    nodes: usize,
    dim: usize,
    snapshots: usize,
    trained: usize,
    data: Vec<f64>,
}

impl EmbeddingStore {
    pub fn new(nodes: usize, dim: usize, snapshots: usize) -> Self {
        EmbeddingStore {
            nodes,
            dim,
            snapshots,
            trained: 0,
            data: vec![0.0; nodes * dim * snapshots],
        }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn snapshots(&self) -> usize {
        self.snapshots
    }

    /// Number of snapshots completed so far.
    pub fn trained(&self) -> usize {
        self.trained
    }

    fn offset(&self, t: usize) -> usize {
        assert!(t >= 1 && t <= self.snapshots, "snapshot {t} out of range");
        (t - 1) * self.nodes * self.dim
    }

    /// All vectors of snapshot `t`, node-major.
    pub fn slice(&self, t: usize) -> &[f64] {
        let start = self.offset(t);
        &self.data[start..start + self.nodes * self.dim]
    }

    /// Mutable vectors of snapshot `t`.
    ///
    /// # Panics
    ///
    /// If `t` was already marked trained.
    pub fn slice_mut(&mut self, t: usize) -> &mut [f64] {
        assert!(t > self.trained, "snapshot {t} is frozen history");
        let start = self.offset(t);
        let len = self.nodes * self.dim;
        &mut self.data[start..start + len]
    }

    pub fn vector(&self, t: usize, v: NodeId) -> &[f64] {
        let start = self.offset(t) + v as usize * self.dim;
        &self.data[start..start + self.dim]
    }

    pub(crate) fn mark_trained(&mut self, t: usize) {
        self.trained = self.trained.max(t);
    }

    /// Restores a store from checkpoints of snapshots `1..=vectors.len()`.
    pub fn from_snapshots(nodes: usize, dim: usize, slices: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let mut store = EmbeddingStore::new(nodes, dim, slices.len());
        for (i, slice) in slices.into_iter().enumerate() {
            if slice.len() != nodes * dim {
                return Err(ModelError::Shape {
                    expected: nodes * dim,
                    got: slice.len(),
                });
            }
            store.slice_mut(i + 1).copy_from_slice(&slice);
        }
        store.trained = store.snapshots;
        Ok(store)
    }

    /// The `min(h, t - 1)` vectors of `v` preceding snapshot `t`, oldest first.
    pub fn history(&self, v: NodeId, t: usize, h: usize) -> HistoryWindow<'_> {
        let first = t.saturating_sub(h).max(1);
        HistoryWindow::new((first..t).map(|s| self.vector(s, v)).collect())
    }

    /// Mean over nodes and over `t = 2..=T` of `|u^t - u^(t-1)|`.
    pub fn mean_displacement(&self) -> f64 {
        if self.snapshots < 2 || self.nodes == 0 {
            return 0.0;
        }
        let mut total = 0.0;
        for t in 2..=self.snapshots {
            for v in 0..self.nodes as NodeId {
                total += loss::distance(self.vector(t, v), self.vector(t - 1, v));
            }
        }
        total / ((self.snapshots - 1) * self.nodes) as f64
    }
}

/// Maps the concatenated temporal features of a node pair to a predicted
/// relative position, `sigmoid(W [s_i ; s_j])`.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoder {
    out_dim: usize,
    feature_len: usize,
    /// Row-major, `out_dim x 2*feature_len`.
    weights: Vec<f64>,
}

impl Decoder {
    pub fn zeros(out_dim: usize, feature_len: usize) -> Self {
        Decoder {
            out_dim,
            feature_len,
            weights: vec![0.0; out_dim * 2 * feature_len],
        }
    }

    /// Uniform in `+-scale / sqrt(2 * feature_len)`.
    pub fn random<R: Rng + ?Sized>(out_dim: usize, feature_len: usize, scale: f64, rng: &mut R) -> Self {
        let bound = scale / ((2 * feature_len.max(1)) as f64).sqrt();
        let weights = (0..out_dim * 2 * feature_len)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Decoder {
            out_dim,
            feature_len,
            weights,
        }
    }

    pub fn from_weights(out_dim: usize, feature_len: usize, weights: Vec<f64>) -> Result<Self, ModelError> {
        if weights.len() != out_dim * 2 * feature_len {
            return Err(ModelError::Shape {
                expected: out_dim * 2 * feature_len,
                got: weights.len(),
            });
        }
        Ok(Decoder {
            out_dim,
            feature_len,
            weights,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Length of one node's feature vector (`W` has twice as many columns).
    pub fn feature_len(&self) -> usize {
        self.feature_len
    }

    pub fn cols(&self) -> usize {
        2 * self.feature_len
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.weights[r * c..(r + 1) * c]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = TrainConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.dim, 32);
        assert_eq!((cfg.walks_per_node, cfg.walk_length, cfg.window), (10, 10, 5));
        assert_eq!((cfg.temporal_weight, cfg.smooth_weight), (1.0, 0.01));
        assert!(!cfg.is_deepwalk_equivalent());
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = [
            TrainConfig { temporal_weight: -1.0, ..Default::default() },
            TrainConfig { smooth_weight: -0.1, ..Default::default() },
            TrainConfig { negatives: 0, ..Default::default() },
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { scales: Scales::Dyadic(4), ..Default::default() },
            TrainConfig { decay_rate: 0.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn history_windows_truncate() {
        let mut store = EmbeddingStore::new(2, 1, 5);
        for t in 1..=5 {
            store.slice_mut(t).copy_from_slice(&[t as f64, -(t as f64)]);
            store.mark_trained(t);
        }
        let w = store.history(1, 5, 3);
        let rows: Vec<f64> = w.rows().iter().map(|r| r[0]).collect();
        assert_eq!(rows, vec![-2.0, -3.0, -4.0]);
        assert_eq!(store.history(0, 2, 3).len(), 1);
        assert!(store.history(0, 1, 3).is_empty());
    }

    #[test]
    #[should_panic(expected = "frozen")]
    fn trained_snapshots_are_frozen() {
        let mut store = EmbeddingStore::new(2, 2, 3);
        store.mark_trained(1);
        store.slice_mut(1);
    }
}
