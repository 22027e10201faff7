mod common;

use epne::eval::{node_task, EvalSettings};
use epne::graph::{NodeNames, TemporalGraph};
use epne::kernels::FeatureExtractor;
use epne::model::train::initial_decoder;
use epne::model::{train_all, train_snapshot, EmbeddingStore, ModelError, SmoothSchedule, TrainConfig};
use epne::synth::{synth_periodic, synth_sbm, SynthSpec};

fn small_cfg() -> TrainConfig {
    TrainConfig {
        dim: 8,
        epochs: 4,
        walks_per_node: 4,
        ..TrainConfig::default()
    }
}

fn toy() -> TemporalGraph {
    synth_sbm(40, 2, 0.3, 0.02, 3, 1).unwrap().graph
}

#[test]
fn epoch_losses_do_not_increase() {
    let cfg = TrainConfig {
        epochs: 8,
        ..small_cfg()
    };
    let trained = train_all(&toy(), &cfg).unwrap();
    for report in &trained.reports {
        for pair in report.epochs.windows(2) {
            assert!(
                pair[1].total <= pair[0].total * 1.02,
                "t={} epoch {}: {} -> {}",
                report.t,
                pair[1].epoch,
                pair[0].total,
                pair[1].total
            );
        }
    }
}

#[test]
fn single_worker_runs_are_bit_identical() {
    let g = toy();
    let a = train_all(&g, &small_cfg()).unwrap();
    let b = train_all(&g, &small_cfg()).unwrap();
    assert_eq!(a.store, b.store);
    assert_eq!(a.decoder, b.decoder);
    assert_eq!(a.reports, b.reports);
    let c = train_all(&g, &TrainConfig { seed: 9, ..small_cfg() }).unwrap();
    assert_ne!(a.store, c.store);
}

#[test]
fn one_snapshot_run_equals_a_single_snapshot_step() {
    let g = synth_sbm(30, 2, 0.3, 0.02, 1, 4).unwrap().graph;
    let cfg = small_cfg();
    let all = train_all(&g, &cfg).unwrap();

    let extractor = FeatureExtractor::new(cfg.history_len, &cfg.scales, cfg.decay_rate, cfg.features).unwrap();
    let mut decoder = initial_decoder(&cfg, &extractor);
    let mut store = EmbeddingStore::new(g.node_count(), cfg.dim, 1);
    let report = train_snapshot(&g, 1, &mut store, &mut decoder, &cfg).unwrap();
    assert_eq!(store, all.store);
    assert_eq!(decoder, all.decoder);
    assert_eq!(report, all.reports[0]);
}

#[test]
fn without_temporal_terms_the_decoder_is_untouched() {
    let g = toy();
    let cfg = TrainConfig {
        temporal_weight: 0.0,
        smooth_weight: 0.0,
        ..small_cfg()
    };
    assert!(cfg.is_deepwalk_equivalent());
    let trained = train_all(&g, &cfg).unwrap();
    let extractor = FeatureExtractor::new(cfg.history_len, &cfg.scales, cfg.decay_rate, cfg.features).unwrap();
    assert_eq!(trained.decoder, initial_decoder(&cfg, &extractor));
    for r in &trained.reports {
        assert_eq!(r.temporal_evaluated, 0);
        assert!(r.epochs.iter().all(|e| e.temporal == 0.0 && e.smooth == 0.0 && e.total == e.structural));
    }
}

#[test]
fn temporal_terms_wait_for_a_usable_history() {
    // one past snapshot is too short for any Haar kernel, two fit the finest one
    let trained = train_all(&toy(), &small_cfg()).unwrap();
    assert_eq!(trained.reports[0].temporal_evaluated, 0);
    assert_eq!(trained.reports[1].temporal_evaluated, 0);
    assert!(trained.reports[1].temporal_degenerate > 0);
    assert!(trained.reports[2].temporal_evaluated > 0);
    assert!(trained.reports.iter().all(|r| r.skip_rate() < 0.01));
}

#[test]
fn every_node_gets_a_finite_vector_per_snapshot() {
    let g = toy();
    let trained = train_all(&g, &small_cfg()).unwrap();
    let store = &trained.store;
    assert_eq!(store.trained(), g.snapshot_count());
    let mut count = 0;
    for t in 1..=g.snapshot_count() {
        let slice = store.slice(t);
        assert!(slice.iter().all(|x| x.is_finite()));
        count += slice.len() / store.dim();
    }
    assert_eq!(count, g.node_count() * g.snapshot_count());
}

#[test]
fn snapshots_train_in_order_and_stay_frozen() {
    let g = toy();
    let cfg = small_cfg();
    let extractor = FeatureExtractor::new(cfg.history_len, &cfg.scales, cfg.decay_rate, cfg.features).unwrap();
    let mut decoder = initial_decoder(&cfg, &extractor);
    let mut store = EmbeddingStore::new(g.node_count(), cfg.dim, g.snapshot_count());
    let err = train_snapshot(&g, 2, &mut store, &mut decoder, &cfg).unwrap_err();
    assert!(matches!(err, ModelError::OutOfOrder { t: 2, expected: 1 }));
    train_snapshot(&g, 1, &mut store, &mut decoder, &cfg).unwrap();
    let first = store.slice(1).to_vec();
    train_snapshot(&g, 2, &mut store, &mut decoder, &cfg).unwrap();
    assert_eq!(store.slice(1), first.as_slice());
}

#[test]
fn parallel_workers_still_learn_communities() {
    let data = synth_sbm(100, 2, 0.3, 0.01, 1, 2).unwrap();
    let cfg = TrainConfig {
        workers: 3,
        dim: 16,
        temporal_weight: 0.0,
        smooth_weight: 0.0,
        ..TrainConfig::default()
    };
    let trained = train_all(&data.graph, &cfg).unwrap();
    assert!(trained.store.slice(1).iter().all(|x| x.is_finite()));
    let settings = EvalSettings {
        repeats: 3,
        ..EvalSettings::default()
    };
    let result = node_task(&trained.store, 1, &data.node_labels(), 0.5, &settings).unwrap();
    assert!(result.macro_mean > 0.9, "{result:?}");
}

#[test]
fn divergence_is_reported() {
    let g = toy();
    let cfg = TrainConfig {
        learning_rate: 1e300,
        ..small_cfg()
    };
    match train_all(&g, &cfg) {
        Err(ModelError::NonFinite { t, learning_rate, .. }) => {
            assert!(t >= 1);
            assert!(learning_rate > 0.0);
        }
        other => panic!("expected a non-finite error, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn per_sequence_smoothing_pulls_harder_than_none() {
    let data = synth_periodic(&SynthSpec {
        nodes: 40,
        communities: 2,
        snapshots: 5,
        ..SynthSpec::default()
    })
    .unwrap();
    let run = |beta: f64| {
        let cfg = TrainConfig {
            smooth_weight: beta,
            smooth_schedule: SmoothSchedule::PerSequence,
            ..small_cfg()
        };
        train_all(&data.graph, &cfg).unwrap().store.mean_displacement()
    };
    assert!(run(1.0) < run(0.0));
}

#[test]
fn isolated_snapshot_keeps_warm_start() {
    let names = NodeNames::numeric(4);
    let g = TemporalGraph::from_snapshots(names, vec![vec![(0, 1), (2, 3), (1, 2)], vec![]]).unwrap();
    let trained = train_all(&g, &small_cfg()).unwrap();
    let shift = trained.store.mean_displacement();
    assert!(shift < 0.01, "{shift}");
}
