//! Incremental training: one snapshot at a time, each initialized from the
//! previous one, with history frozen once a snapshot is done.
//!
//! Within a snapshot every epoch walks the graph, and each walk is one SGD
//! step on `L_struct + alpha * L_temporal` over that walk's context pairs.
//! The smoothness penalty is applied as a proximal step (once per node per
//! epoch by default), which pulls a vector toward its previous-snapshot
//! value by at most the distance separating them.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::hogwild::SharedParams;
use super::loss::{self, draw_negatives, smooth_prox, struct_loss, temporal_loss, Slab};
use super::{Decoder, EmbeddingStore, ModelError, SmoothSchedule, TrainConfig};
use crate::graph::{NodeId, SamplingTable, TemporalGraph};
use crate::kernels::FeatureExtractor;
use crate::seed;
use crate::walks::{generate_walks, Walk};

/// Standard deviation of the noise added when warm-starting a snapshot.
const WARM_START_NOISE: f64 = 1e-3;

/// Loss summary of one epoch. `structural` and `temporal` are means per
/// pair, `smooth` is the mean per node at the end of the epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLoss {
    pub t: usize,
    pub epoch: usize,
    pub learning_rate: f64,
    pub structural: f64,
    pub temporal: f64,
    pub smooth: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SnapshotReport {
    pub t: usize,
    pub epochs: Vec<EpochLoss>,
    pub pairs: usize,
    pub temporal_evaluated: usize,
    pub temporal_degenerate: usize,
    pub temporal_skipped: usize,
}

impl SnapshotReport {
    /// Fraction of temporal pairs dropped by the norm guard.
    pub fn skip_rate(&self) -> f64 {
        let seen = self.temporal_evaluated + self.temporal_skipped;
        if seen == 0 {
            0.0
        } else {
            self.temporal_skipped as f64 / seen as f64
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub store: EmbeddingStore,
    pub decoder: Decoder,
    pub reports: Vec<SnapshotReport>,
}

/// Trains every snapshot in order with a shared decoder.
pub fn train_all(g: &TemporalGraph, cfg: &TrainConfig) -> Result<Trained, ModelError> {
    cfg.validate()?;
    let extractor = FeatureExtractor::new(cfg.history_len, &cfg.scales, cfg.decay_rate, cfg.features)?;
    let mut decoder = initial_decoder(cfg, &extractor);
    let mut store = EmbeddingStore::new(g.node_count(), cfg.dim, g.snapshot_count());
    let mut reports = Vec::with_capacity(g.snapshot_count());
    for t in 1..=g.snapshot_count() {
        reports.push(run_snapshot(g, t, &mut store, &mut decoder, cfg, &extractor)?);
    }
    Ok(Trained {
        store,
        decoder,
        reports,
    })
}

/// Decoder with small random weights drawn from the decoder stream of the seed.
pub fn initial_decoder(cfg: &TrainConfig, extractor: &FeatureExtractor) -> Decoder {
    let mut rng = seed::rng(cfg.seed, &[seed::STREAM_DECODER]);
    Decoder::random(cfg.dim, extractor.feature_len(cfg.dim), 0.1, &mut rng)
}

/// Trains snapshot `t`; snapshots before `t` must already be trained.
pub fn train_snapshot(
    g: &TemporalGraph,
    t: usize,
    store: &mut EmbeddingStore,
    dec: &mut Decoder,
    cfg: &TrainConfig,
) -> Result<SnapshotReport, ModelError> {
    cfg.validate()?;
    let extractor = FeatureExtractor::new(cfg.history_len, &cfg.scales, cfg.decay_rate, cfg.features)?;
    run_snapshot(g, t, store, dec, cfg, &extractor)
}

/// Read-only state shared by the workers of one snapshot.
struct SnapshotContext<'a> {
    t: usize,
    cfg: &'a TrainConfig,
    n: usize,
    dim: usize,
    table: Option<SamplingTable>,
    /// Node-major temporal features, `None` when degenerate or inactive.
    features: Vec<Option<Vec<f64>>>,
    temporal_on: bool,
    smooth_on: bool,
    denominators: Vec<f64>,
    previous: Option<&'a [f64]>,
}

fn run_snapshot(
    g: &TemporalGraph,
    t: usize,
    store: &mut EmbeddingStore,
    dec: &mut Decoder,
    cfg: &TrainConfig,
    extractor: &FeatureExtractor,
) -> Result<SnapshotReport, ModelError> {
    if t != store.trained() + 1 {
        return Err(ModelError::OutOfOrder {
            t,
            expected: store.trained() + 1,
        });
    }
    let expected = extractor.feature_len(cfg.dim);
    if dec.feature_len() != expected || dec.out_dim() != cfg.dim {
        return Err(ModelError::Shape {
            expected,
            got: dec.feature_len(),
        });
    }
    let (n, dim) = (store.nodes(), store.dim());
    let edges = g.snapshot(t)?;

    init_snapshot(store, t, cfg);

    let temporal_on = t >= 2 && cfg.temporal_weight > 0.0;
    let smooth_on = t >= 2 && cfg.smooth_weight > 0.0;
    let features: Vec<Option<Vec<f64>>> = if temporal_on {
        (0..n as NodeId)
            .map(|v| {
                let f = extractor.extract(&store.history(v, t, cfg.history_len));
                (!f.degenerate).then_some(f.values)
            })
            .collect()
    } else {
        vec![None; n]
    };
    let denominators: Vec<f64> = if smooth_on {
        (0..n as NodeId)
            .map(|v| g.drift_denominator(t, v, cfg.drift_eps))
            .collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };
    let table = if edges.edge_count() > 0 {
        Some(SamplingTable::build(g, t, cfg.neg_power)?)
    } else {
        None
    };

    let current = SharedParams::from_slice(store.slice(t));
    let weights = SharedParams::from_slice(dec.weights());
    let ctx = SnapshotContext {
        t,
        cfg,
        n,
        dim,
        table,
        features,
        temporal_on,
        smooth_on,
        denominators,
        previous: (t >= 2).then(|| store.slice(t - 1)),
    };

    let mut report = SnapshotReport {
        t,
        ..Default::default()
    };
    let epochs = cfg.epochs;
    for epoch in 0..epochs {
        let lr = learning_rate(cfg.learning_rate, epoch, epochs);
        let walk_seed = seed::derive(
            cfg.seed,
            &[seed::STREAM_WALKS, t as u64, if cfg.freeze_walks { 0 } else { epoch as u64 + 1 }],
        );
        let mut walks = generate_walks(g, t, cfg.walks_per_node, cfg.walk_length, walk_seed)?.walks;
        walks.shuffle(&mut seed::rng(cfg.seed, &[seed::STREAM_SHUFFLE, t as u64, epoch as u64]));

        let stats = run_epoch(&ctx, &walks, &current, &weights, dec, epoch, lr)?;

        if ctx.smooth_on && cfg.smooth_schedule == SmoothSchedule::PerEpoch {
            let prev = ctx.previous.expect("t >= 2");
            let mut row = vec![0.0; dim];
            for v in 0..n {
                current.read(v * dim, &mut row);
                smooth_prox(&mut row, &prev[v * dim..(v + 1) * dim], lr * cfg.smooth_weight / ctx.denominators[v]);
                current.write(v * dim, &row);
            }
        }

        let smooth = if ctx.smooth_on {
            let now = current.to_vec();
            let prev = ctx.previous.expect("t >= 2");
            loss::smooth_loss(Slab::new(&now, dim), Slab::new(prev, dim), &ctx.denominators).loss / n as f64
        } else {
            0.0
        };
        let structural = mean(stats.struct_sum, stats.pairs);
        let temporal = mean(stats.temporal_sum, stats.temporal_evaluated);
        let mut total = structural;
        if ctx.temporal_on {
            total += cfg.temporal_weight * temporal;
        }
        if ctx.smooth_on {
            total += cfg.smooth_weight * smooth;
        }
        report.epochs.push(EpochLoss {
            t,
            epoch,
            learning_rate: lr,
            structural,
            temporal,
            smooth,
            total,
        });
        report.pairs += stats.pairs;
        report.temporal_evaluated += stats.temporal_evaluated;
        report.temporal_degenerate += stats.temporal_degenerate;
        report.temporal_skipped += stats.temporal_skipped;
    }

    if report.skip_rate() > 0.1 {
        log::warn!(
            "snapshot {t}: {:.1}% of temporal pairs skipped by the norm guard",
            100.0 * report.skip_rate()
        );
    }

    let trained = current.to_vec();
    let new_weights = weights.to_vec();
    drop(ctx);
    store.slice_mut(t).copy_from_slice(&trained);
    store.mark_trained(t);
    dec.weights_mut().copy_from_slice(&new_weights);
    Ok(report)
}

/// Linear decay from `base` in the first epoch to `base / 10` in the last.
fn learning_rate(base: f64, epoch: usize, epochs: usize) -> f64 {
    if epochs <= 1 {
        return base;
    }
    base * (1.0 - 0.9 * epoch as f64 / (epochs - 1) as f64)
}

fn mean(sum: f64, count: usize) -> f64 {
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

fn init_snapshot(store: &mut EmbeddingStore, t: usize, cfg: &TrainConfig) {
    let dim = store.dim();
    let mut rng = seed::rng(cfg.seed, &[seed::STREAM_INIT, t as u64]);
    if t == 1 {
        let bound = 0.5 / dim as f64;
        for x in store.slice_mut(1) {
            *x = rng.random_range(-bound..bound);
        }
    } else {
        let prev = store.slice(t - 1).to_vec();
        let noise = Normal::new(0.0, WARM_START_NOISE).expect("valid normal");
        for (x, p) in store.slice_mut(t).iter_mut().zip(prev) {
            *x = p + noise.sample(&mut rng);
        }
    }
}

#[derive(Default)]
struct EpochStats {
    pairs: usize,
    struct_sum: f64,
    temporal_sum: f64,
    temporal_evaluated: usize,
    temporal_degenerate: usize,
    temporal_skipped: usize,
}

impl EpochStats {
    fn merge(&mut self, other: EpochStats) {
        self.pairs += other.pairs;
        self.struct_sum += other.struct_sum;
        self.temporal_sum += other.temporal_sum;
        self.temporal_evaluated += other.temporal_evaluated;
        self.temporal_degenerate += other.temporal_degenerate;
        self.temporal_skipped += other.temporal_skipped;
    }
}

fn run_epoch(
    ctx: &SnapshotContext<'_>,
    walks: &[Walk],
    current: &SharedParams,
    weights: &SharedParams,
    dec: &Decoder,
    epoch: usize,
    lr: f64,
) -> Result<EpochStats, ModelError> {
    let workers = ctx.cfg.workers.min(walks.len()).max(1);
    if workers == 1 {
        let mut worker = Worker::new(ctx, dec.clone(), 0, epoch, false);
        worker.run(walks, current, weights, lr)?;
        return Ok(worker.stats);
    }
    let chunk = walks.len().div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = walks
            .chunks(chunk)
            .enumerate()
            .map(|(w, part)| {
                let local = dec.clone();
                scope.spawn(move || {
                    let mut worker = Worker::new(ctx, local, w, epoch, true);
                    worker.run(part, current, weights, lr).map(|_| worker.stats)
                })
            })
            .collect();
        let mut total = EpochStats::default();
        for h in handles {
            total.merge(h.join().expect("training worker panicked")?);
        }
        Ok(total)
    })
}

/// Per-thread scratch space. Each walk is copied into a compact working set
/// (walk nodes plus their negatives), differentiated there, and the scaled
/// gradient is written back to the shared parameters.
struct Worker<'a> {
    ctx: &'a SnapshotContext<'a>,
    rng: rand_chacha::ChaCha8Rng,
    decoder: Decoder,
    /// Re-read the shared decoder before each walk (other threads write it).
    refresh_decoder: bool,
    epoch: usize,
    slot: Vec<u32>,
    members: Vec<NodeId>,
    vectors: Vec<f64>,
    stats: EpochStats,
}

const NO_SLOT: u32 = u32::MAX;

impl<'a> Worker<'a> {
    fn new(ctx: &'a SnapshotContext<'a>, decoder: Decoder, worker: usize, epoch: usize, refresh: bool) -> Self {
        let rng = seed::rng(
            ctx.cfg.seed,
            &[seed::STREAM_NEGATIVES, ctx.t as u64, epoch as u64, worker as u64],
        );
        Worker {
            ctx,
            rng,
            decoder,
            refresh_decoder: refresh,
            epoch,
            slot: vec![NO_SLOT; ctx.n],
            members: Vec::new(),
            vectors: Vec::new(),
            stats: EpochStats::default(),
        }
    }

    fn local(&mut self, v: NodeId) -> usize {
        let s = &mut self.slot[v as usize];
        if *s == NO_SLOT {
            *s = self.members.len() as u32;
            self.members.push(v);
        }
        *s as usize
    }

    fn run(&mut self, walks: &[Walk], current: &SharedParams, weights: &SharedParams, lr: f64) -> Result<(), ModelError> {
        let ctx = self.ctx;
        let cfg = ctx.cfg;
        let (dim, k) = (ctx.dim, cfg.negatives);
        let Some(table) = ctx.table.as_ref() else {
            return Ok(());
        };
        let mut pairs: Vec<(NodeId, NodeId)> = Vec::new();
        for walk in walks {
            pairs.clear();
            walk.for_each_context(cfg.window, |c, x| pairs.push((c, x)));
            if pairs.is_empty() {
                continue;
            }
            let negatives = draw_negatives(&pairs, table, k, &mut self.rng);

            for &v in &self.members {
                self.slot[v as usize] = NO_SLOT;
            }
            self.members.clear();
            let local_pairs: Vec<(usize, usize)> = pairs.iter().map(|&(i, j)| (self.local(i), self.local(j))).collect();
            let walk_members = self.members.len();
            let local_negs: Vec<Option<usize>> = negatives.iter().map(|n| n.map(|v| self.local(v))).collect();

            self.vectors.resize(self.members.len() * dim, 0.0);
            for (r, &v) in self.members.iter().enumerate() {
                current.read(v as usize * dim, &mut self.vectors[r * dim..(r + 1) * dim]);
            }
            let slab = Slab::new(&self.vectors, dim);

            let st = struct_loss(&local_pairs, &local_negs, k, slab);
            let mut grad = st.grad;
            let mut temporal = None;
            if ctx.temporal_on {
                if self.refresh_decoder {
                    weights.read(0, self.decoder.weights_mut());
                }
                let feats: Vec<Option<&[f64]>> = self.members[..walk_members]
                    .iter()
                    .map(|&v| ctx.features[v as usize].as_deref())
                    .chain(std::iter::repeat(None))
                    .take(self.members.len())
                    .collect();
                let tg = temporal_loss(&local_pairs, slab, &feats, &self.decoder, cfg.distance);
                for (g, t) in grad.iter_mut().zip(&tg.grad_u) {
                    *g += cfg.temporal_weight * t;
                }
                temporal = Some(tg);
            }

            let temporal_loss_value = temporal.as_ref().map_or(0.0, |t| t.loss);
            if !(st.loss.is_finite() && temporal_loss_value.is_finite()) {
                return Err(ModelError::NonFinite {
                    t: ctx.t,
                    epoch: self.epoch,
                    learning_rate: lr,
                    pair: pairs[0],
                });
            }

            for (r, &v) in self.members.iter().enumerate() {
                current.add_scaled(v as usize * dim, &grad[r * dim..(r + 1) * dim], -lr);
            }
            if let Some(tg) = temporal {
                let step = -lr * cfg.temporal_weight;
                weights.add_scaled(0, &tg.grad_w, step);
                if !self.refresh_decoder {
                    for (w, g) in self.decoder.weights_mut().iter_mut().zip(&tg.grad_w) {
                        *w += step * g;
                    }
                }
                self.stats.temporal_sum += tg.loss;
                self.stats.temporal_evaluated += tg.evaluated;
                self.stats.temporal_degenerate += tg.degenerate;
                self.stats.temporal_skipped += tg.skipped;
            }
            self.stats.pairs += pairs.len();
            self.stats.struct_sum += st.loss;

            if ctx.smooth_on && cfg.smooth_schedule == SmoothSchedule::PerSequence {
                let prev = ctx.previous.expect("t >= 2");
                let mut row = vec![0.0; dim];
                for &v in &self.members[..walk_members] {
                    let v = v as usize;
                    current.read(v * dim, &mut row);
                    smooth_prox(
                        &mut row,
                        &prev[v * dim..(v + 1) * dim],
                        lr * cfg.smooth_weight / ctx.denominators[v],
                    );
                    current.write(v * dim, &row);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learning_rate_decays_linearly() {
        assert_eq!(learning_rate(0.025, 0, 10), 0.025);
        assert!((learning_rate(0.025, 9, 10) - 0.0025).abs() < 1e-15);
        assert_eq!(learning_rate(0.1, 0, 1), 0.1);
        let rates: Vec<f64> = (0..5).map(|e| learning_rate(1.0, e, 5)).collect();
        assert!(rates.windows(2).all(|w| w[0] > w[1]));
    }
}
