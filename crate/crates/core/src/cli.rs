//! The command implementations behind the `epne` binary.
//!
//! Every command validates all of its inputs before it writes anything, so
//! a rejected run leaves no partial output behind.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::checkpoint::{self, Manifest};
use crate::config::RunConfig;
use crate::eval::{self, TaskResult};
use crate::graph::{load_edge_list, NodeId, TemporalGraph};
use crate::kernels::FeatureExtractor;
use crate::model::{train_all, EmbeddingStore, ModelError, Trained};
use crate::synth::{self, SynthSpec};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or input data.
    #[error("{0}")]
    Input(String),
    /// Training diverged.
    #[error("{0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) | CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

fn input<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Input(e.to_string())
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

fn load_config(path: &Path, workers: Option<usize>) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path).map_err(input)?;
    if let Some(w) = workers {
        cfg.train.workers = w;
        cfg.validate().map_err(input)?;
    }
    Ok(cfg)
}

fn load_graph(cfg: &RunConfig) -> Result<TemporalGraph, CliError> {
    let (graph, report) = load_edge_list(&cfg.input.edges, cfg.snapshot_spec())
        .map_err(|e| CliError::Input(format!("{}: {e}", cfg.input.edges.display())))?;
    log::info!(
        "loaded {} records into {} snapshots over {} nodes ({} self-loops, {} duplicates dropped)",
        report.records,
        graph.snapshot_count(),
        graph.node_count(),
        report.self_loops,
        report.duplicates
    );
    Ok(graph)
}

/// Trains every snapshot and writes embeddings, decoder, loss trace,
/// manifest and the canonical config into the output directory.
pub fn cmd_train(config: &Path, workers: Option<usize>) -> Result<Trained, CliError> {
    let cfg = load_config(config, workers)?;
    let graph = load_graph(&cfg)?;
    let train_cfg = cfg.train_config();
    train_cfg.validate()?;

    let trained = train_all(&graph, &train_cfg)?;

    let dir = &cfg.output.dir;
    fs::create_dir_all(dir)?;
    for t in 1..=graph.snapshot_count() {
        let file = fs::File::create(checkpoint::embedding_path(dir, t))?;
        checkpoint::write_embeddings(file, &trained.store, graph.names(), t)?;
    }
    checkpoint::write_decoder(fs::File::create(dir.join(checkpoint::DECODER_FILE))?, &trained.decoder)?;
    checkpoint::write_losses(
        fs::File::create(dir.join(checkpoint::LOSSES_FILE))?,
        trained.reports.iter().flat_map(|r| &r.epochs),
    )?;
    fs::write(dir.join(checkpoint::CONFIG_FILE), cfg.to_toml())?;
    Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: train_cfg.seed,
        config_sha256: cfg.hash(),
        deepwalk_equivalent: train_cfg.is_deepwalk_equivalent(),
        workers: train_cfg.workers,
        nodes: graph.node_count(),
        snapshots: graph.snapshot_count(),
    }
    .write(fs::File::create(dir.join(checkpoint::MANIFEST_FILE))?)?;
    Ok(trained)
}

/// Loads the checkpoints of snapshots `1..=t` written by [`cmd_train`].
pub fn load_store(dir: &Path, graph: &TemporalGraph, t: usize) -> Result<EmbeddingStore, CliError> {
    let mut slices = Vec::with_capacity(t);
    let mut dim = 0;
    for s in 1..=t {
        let path = checkpoint::embedding_path(dir, s);
        let snap = checkpoint::read_embeddings(&path).map_err(input)?;
        let same_names = snap.names.len() == graph.node_count()
            && snap.names.iter().enumerate().all(|(v, n)| graph.names().name(v as NodeId) == n);
        if !same_names || snap.t != s {
            return Err(CliError::Input(format!(
                "{} does not match the node list of the configured graph",
                path.display()
            )));
        }
        dim = snap.dim;
        slices.push(snap.vectors);
    }
    Ok(EmbeddingStore::from_snapshots(graph.node_count(), dim, slices)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Node,
    Edge,
}

/// Classification on trained checkpoints; writes `results_<task>.tsv` in the
/// output directory and returns the rows.
pub fn cmd_eval(config: &Path, task: Task) -> Result<Vec<TaskResult>, CliError> {
    let cfg = load_config(config, None)?;
    let graph = load_graph(&cfg)?;
    let t = cfg.eval.snapshot.unwrap_or(graph.snapshot_count());
    if t > graph.snapshot_count() {
        return Err(CliError::Input(format!(
            "eval.snapshot {t} exceeds the {} snapshots of the graph",
            graph.snapshot_count()
        )));
    }
    let settings = cfg.eval_settings();
    let (results, name) = match task {
        Task::Node => {
            let path = cfg
                .input
                .node_labels
                .as_ref()
                .ok_or_else(|| CliError::Input("config field `input.node_labels`: required for node eval".into()))?;
            let labels = eval::read_node_labels(path, graph.names()).map_err(input)?;
            let store = load_store(&cfg.output.dir, &graph, t)?;
            let results = cfg
                .eval
                .train_ratios
                .iter()
                .map(|&r| eval::node_task(&store, t, &labels, r, &settings))
                .collect::<Result<Vec<_>, _>>()
                .map_err(input)?;
            (results, "results_node.tsv")
        }
        Task::Edge => {
            let path = cfg
                .input
                .edge_labels
                .as_ref()
                .ok_or_else(|| CliError::Input("config field `input.edge_labels`: required for edge eval".into()))?;
            let labels = eval::read_edge_labels(path, graph.names(), &graph.static_edges()).map_err(input)?;
            let store = load_store(&cfg.output.dir, &graph, t)?;
            let result = eval::edge_task(&store, t, &labels, cfg.eval.edge_train_ratio, &settings).map_err(input)?;
            (vec![result], "results_edge.tsv")
        }
    };
    eval::write_results(fs::File::create(cfg.output.dir.join(name))?, &results)?;
    Ok(results)
}

/// Generates a planted-pattern dataset into `out`.
pub fn cmd_synth(spec: &SynthSpec, out: &Path) -> Result<(), CliError> {
    spec.validate().map_err(input)?;
    let data = synth::synth_periodic(spec).map_err(input)?;
    synth::write_dataset(&data, spec, out).map_err(input)
}

/// PCA of one checkpoint to `node,x,y,label` rows.
pub fn cmd_project(checkpoint_path: &Path, labels: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let snap = checkpoint::read_embeddings(checkpoint_path).map_err(input)?;
    let mut names = crate::graph::NodeNames::default();
    for n in &snap.names {
        names.intern(n);
    }
    let label_map: BTreeMap<NodeId, String> = match labels {
        Some(path) => {
            let l = eval::read_node_labels(path, &names).map_err(input)?;
            l.items
                .iter()
                .zip(&l.labels)
                .map(|(&v, &c)| (v, l.class_names[c].clone()))
                .collect()
        }
        None => BTreeMap::new(),
    };
    let projection = eval::project_2d(&snap.vectors, snap.dim).map_err(input)?;
    let nodes: Vec<NodeId> = (0..snap.names.len() as NodeId).collect();
    eval::write_projection(fs::File::create(out)?, &nodes, &names, &projection, &label_map)?;
    Ok(())
}

/// Temporal features of every node at snapshot `t`, computed from the
/// trained checkpoints of the snapshots before it.
pub fn cmd_features_dump<W: Write>(config: &Path, t: usize, out: W) -> Result<(), CliError> {
    let cfg = load_config(config, None)?;
    let graph = load_graph(&cfg)?;
    if t < 2 || t > graph.snapshot_count() {
        return Err(CliError::Input(format!(
            "features need a snapshot in 2..={}, got {t}",
            graph.snapshot_count()
        )));
    }
    let train_cfg = cfg.train_config();
    let extractor = FeatureExtractor::new(train_cfg.history_len, &train_cfg.scales, train_cfg.decay_rate, train_cfg.features)
        .map_err(input)?;
    let loaded = load_store(&cfg.output.dir, &graph, t - 1)?;
    // room for snapshot t so history windows ending at t resolve
    let mut slices: Vec<Vec<f64>> = (1..t).map(|s| loaded.slice(s).to_vec()).collect();
    slices.push(vec![0.0; graph.node_count() * loaded.dim()]);
    let store = EmbeddingStore::from_snapshots(graph.node_count(), loaded.dim(), slices)?;

    let mut out = io::BufWriter::new(out);
    writeln!(out, "node\tdegenerate\tfeatures")?;
    for v in 0..graph.node_count() as NodeId {
        let f = extractor.extract(&store.history(v, t, train_cfg.history_len));
        write!(out, "{}\t{}\t", graph.names().name(v), f.degenerate)?;
        let values: Vec<String> = f.values.iter().map(f64::to_string).collect();
        writeln!(out, "{}", values.join(" "))?;
    }
    out.flush()?;
    Ok(())
}

/// Output directory of a config, for callers that report file locations.
pub fn output_dir(config: &Path) -> Result<PathBuf, CliError> {
    Ok(RunConfig::load(config).map_err(input)?.output.dir)
}
