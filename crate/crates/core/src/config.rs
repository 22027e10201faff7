//! Run configuration: one TOML file with flat `[input]`, `[output]`,
//! `[train]`, `[kernels]` and `[eval]` sections. Unknown keys are rejected.
//!
//! ```toml
//! [input]
//! edges = "data/edges.tsv"
//! node_labels = "data/node_labels.tsv"
//!
//! [output]
//! dir = "runs/example"
//!
//! [train]
//! dim = 32
//! temporal_weight = 1.0
//! smooth_weight = 0.01
//!
//! [kernels]
//! history_len = 8
//! levels = 3
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::eval::EvalSettings;
use crate::graph::SnapshotSpec;
use crate::kernels::{FeatureMode, Scales};
use crate::model::{Distance, SmoothSchedule, TrainConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("config field `{field}`: {reason}")]
    Field { field: &'static str, reason: String },
}

fn field(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field,
        reason: reason.into(),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputSection {
    pub edges: PathBuf,
    /// Bin width for real-valued timestamps; integer snapshot ids when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node_labels: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge_labels: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub dim: usize,
    pub temporal_weight: f64,
    pub smooth_weight: f64,
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
    pub freeze_walks: bool,
    pub drift_eps: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let c = TrainConfig::default();
        TrainSection {
            dim: c.dim,
            temporal_weight: c.temporal_weight,
            smooth_weight: c.smooth_weight,
            negatives: c.negatives,
            neg_power: c.neg_power,
            walks_per_node: c.walks_per_node,
            walk_length: c.walk_length,
            window: c.window,
            epochs: c.epochs,
            learning_rate: c.learning_rate,
            seed: c.seed,
            workers: c.workers,
            distance: c.distance,
            smooth_schedule: c.smooth_schedule,
            freeze_walks: c.freeze_walks,
            drift_eps: c.drift_eps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub history_len: usize,
    /// Dyadic levels; ignored when `scales` is set.
    pub levels: usize,
    /// Support fractions of the window, e.g. `[1.0, 0.5]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
    pub decay_rate: f64,
    pub features: FeatureMode,
}

impl Default for KernelSection {
    fn default() -> Self {
        let c = TrainConfig::default();
        KernelSection {
            history_len: c.history_len,
            levels: match c.scales {
                Scales::Dyadic(l) => l,
                Scales::Custom(_) => 3,
            },
            scales: None,
            decay_rate: c.decay_rate,
            features: c.features,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Training ratios for the node task.
    pub train_ratios: Vec<f64>,
    pub edge_train_ratio: f64,
    pub repeats: usize,
    pub lambda: f64,
    pub iters: usize,
    /// Snapshot whose embeddings are classified; the last one when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<usize>,
    pub seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        let s = EvalSettings::default();
        EvalSection {
            train_ratios: (1..=9).map(|i| i as f64 / 10.0).collect(),
            edge_train_ratio: 0.7,
            repeats: s.repeats,
            lambda: s.lambda,
            iters: s.iters,
            snapshot: None,
            seed: s.seed,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub input: InputSection,
    pub output: OutputSection,
    pub train: TrainSection,
    pub kernels: KernelSection,
    pub eval: EvalSection,
}

impl RunConfig {
    /// Parses and validates.
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, parses and validates; relative paths are resolved against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = RunConfig::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.input.edges);
        resolve(&mut cfg.output.dir);
        cfg.input.node_labels.as_mut().map(resolve);
        cfg.input.edge_labels.as_mut().map(resolve);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.input.edges.as_os_str().is_empty() {
            return Err(field("input.edges", "required"));
        }
        if let Some(w) = self.input.interval {
            if !(w > 0.0 && w.is_finite()) {
                return Err(field("input.interval", format!("must be a positive width, got {w}")));
            }
        }
        let t = &self.train;
        let checks: [(&'static str, bool, String); 12] = [
            ("train.dim", t.dim >= 1, "must be at least 1".into()),
            ("train.temporal_weight", t.temporal_weight >= 0.0 && t.temporal_weight.is_finite(), "must be finite and >= 0".into()),
            ("train.smooth_weight", t.smooth_weight >= 0.0 && t.smooth_weight.is_finite(), "must be finite and >= 0".into()),
            ("train.negatives", t.negatives >= 1, "must be at least 1".into()),
            ("train.neg_power", t.neg_power >= 0.0 && t.neg_power.is_finite(), "must be finite and >= 0".into()),
            ("train.walks_per_node", t.walks_per_node >= 1, "must be at least 1".into()),
            ("train.walk_length", t.walk_length >= 1, "must be at least 1".into()),
            ("train.window", t.window >= 1, "must be at least 1".into()),
            ("train.epochs", t.epochs >= 1, "must be at least 1".into()),
            ("train.learning_rate", t.learning_rate > 0.0 && t.learning_rate.is_finite(), "must be finite and > 0".into()),
            ("train.workers", t.workers >= 1, "must be at least 1".into()),
            ("train.drift_eps", t.drift_eps > 0.0 && t.drift_eps.is_finite(), "must be finite and > 0".into()),
        ];
        for (name, ok, reason) in checks {
            if !ok {
                return Err(field(name, reason));
            }
        }
        let k = &self.kernels;
        if let Err(e) = self.scales().validate(k.history_len) {
            let name = if k.scales.is_some() { "kernels.scales" } else { "kernels.levels" };
            return Err(field(name, e.to_string()));
        }
        if !(k.decay_rate > 0.0 && k.decay_rate.is_finite()) {
            return Err(field("kernels.decay_rate", format!("must be finite and > 0, got {}", k.decay_rate)));
        }
        let e = &self.eval;
        if e.train_ratios.is_empty() || e.train_ratios.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
            return Err(field("eval.train_ratios", "need at least one ratio, each in (0, 1)"));
        }
        if !(e.edge_train_ratio > 0.0 && e.edge_train_ratio < 1.0) {
            return Err(field("eval.edge_train_ratio", "must lie in (0, 1)"));
        }
        if e.repeats == 0 {
            return Err(field("eval.repeats", "must be at least 1"));
        }
        if !(e.lambda >= 0.0 && e.lambda.is_finite()) {
            return Err(field("eval.lambda", "must be finite and >= 0"));
        }
        if e.snapshot == Some(0) {
            return Err(field("eval.snapshot", "snapshots are numbered from 1"));
        }
        Ok(())
    }

    pub fn scales(&self) -> Scales {
        match &self.kernels.scales {
            Some(b) => Scales::Custom(b.clone()),
            None => Scales::Dyadic(self.kernels.levels),
        }
    }

    pub fn snapshot_spec(&self) -> SnapshotSpec {
        match self.input.interval {
            Some(w) => SnapshotSpec::ByInterval(w),
            None => SnapshotSpec::ById,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let (t, k) = (&self.train, &self.kernels);
        TrainConfig {
            dim: t.dim,
            history_len: k.history_len,
            scales: self.scales(),
            decay_rate: k.decay_rate,
            features: k.features,
            temporal_weight: t.temporal_weight,
            smooth_weight: t.smooth_weight,
            negatives: t.negatives,
            neg_power: t.neg_power,
            walks_per_node: t.walks_per_node,
            walk_length: t.walk_length,
            window: t.window,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            seed: t.seed,
            workers: t.workers,
            distance: t.distance,
            smooth_schedule: t.smooth_schedule,
            freeze_walks: t.freeze_walks,
            drift_eps: t.drift_eps,
        }
    }

    pub fn eval_settings(&self) -> EvalSettings {
        EvalSettings {
            repeats: self.eval.repeats,
            lambda: self.eval.lambda,
            iters: self.eval.iters,
            seed: self.eval.seed,
        }
    }

    /// Canonical TOML rendering, with every default spelled out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical rendering, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        let mut hex = String::with_capacity(64);
        for b in digest {
            write!(hex, "{b:02x}").expect("write to string");
        }
        hex
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[input]\nedges = \"e.tsv\"\n";

    #[test]
    fn defaults_fill_missing_sections() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.train_config(), TrainConfig::default());
        assert_eq!(cfg.eval.train_ratios.len(), 9);
        assert_eq!(cfg.eval_settings(), EvalSettings::default());
    }

    #[test]
    fn round_trip_is_stable() {
        let text = format!("{MINIMAL}[train]\ndim = 8\ndistance = \"raw-cos\"\n[kernels]\nscales = [1.0, 0.25]\nfeatures = \"freq-only\"\n");
        let cfg = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg.train_config().scales, Scales::Custom(vec![1.0, 0.25]));
        assert_eq!(cfg.train_config().features, FeatureMode::FreqOnly);
        let again = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse(&format!("{MINIMAL}[train]\nalpha = 1.0\n")).unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
        assert!(RunConfig::parse("[extra]\nx = 1\n").is_err());
    }

    #[test]
    fn field_errors_name_the_field() {
        let cases = [
            ("[train]\ndim = 0\n", "train.dim"),
            ("[kernels]\nhistory_len = 4\nlevels = 3\n", "kernels.levels"),
            ("[eval]\ntrain_ratios = [1.5]\n", "eval.train_ratios"),
            ("[train]\nlearning_rate = -1.0\n", "train.learning_rate"),
        ];
        for (extra, name) in cases {
            let err = RunConfig::parse(&format!("{MINIMAL}{extra}")).unwrap_err();
            assert!(err.to_string().contains(name), "{err}");
        }
        let err = RunConfig::parse("").unwrap_err();
        assert!(err.to_string().contains("input.edges"));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::parse(MINIMAL).unwrap();
        let b = RunConfig::parse(&format!("{MINIMAL}[train]\nseed = 3\n")).unwrap();
        assert_ne!(a.hash(), b.hash());
    }
}
