//! Downstream evaluation: multinomial logistic regression, F1 scoring, node
//! and edge classification over repeated stratified splits, and a PCA
//! projection for plots.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{EdgeSet, NodeId, NodeNames};
use crate::model::EmbeddingStore;
use crate::seed;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("degenerate task: {0}")]
    Degenerate(String),
    #[error("{path}:{line}: {reason}")]
    Parse { path: String, line: usize, reason: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid evaluation setting: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Row-major feature matrix with class labels in `0..classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    classes: usize,
}

impl LabeledDataset {
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<usize>, classes: usize) -> Result<Self, EvalError> {
        if features.len() != dim * labels.len() {
            return Err(EvalError::Shape(format!(
                "{} values for {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(EvalError::Shape(format!("label {bad} outside 0..{classes}")));
        }
        Ok(LabeledDataset {
            features,
            dim,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        let mut features = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            features.extend_from_slice(self.row(i));
        }
        LabeledDataset {
            features,
            dim: self.dim,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    fn present_classes(&self) -> usize {
        let mut seen = vec![false; self.classes];
        for &l in &self.labels {
            seen[l] = true;
        }
        seen.iter().filter(|&&s| s).count()
    }
}

/// Softmax classifier. Row `c` of `weights` holds the class-`c` coefficients
/// followed by its bias.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearClassifier {
    classes: usize,
    dim: usize,
    weights: Vec<f64>,
    lambda: f64,
}

impl LinearClassifier {
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scores(&self, x: &[f64], out: &mut [f64]) {
        let cols = self.dim + 1;
        for (c, s) in out.iter_mut().enumerate() {
            let row = &self.weights[c * cols..(c + 1) * cols];
            *s = row[self.dim] + row[..self.dim].iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let mut s = vec![0.0; self.classes];
        self.scores(x, &mut s);
        argmax(&s)
    }

    pub fn predict_all(&self, data: &LabeledDataset) -> Vec<usize> {
        (0..data.len()).map(|i| self.predict(data.row(i))).collect()
    }
}

fn argmax(s: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in s.iter().enumerate() {
        if v > s[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy plus `lambda / 2 * |W|^2` (biases unpenalized), and
/// its gradient when `grad` is given.
fn objective(data: &LabeledDataset, w: &[f64], lambda: f64, mut grad: Option<&mut [f64]>) -> f64 {
    let (c_n, dim) = (data.classes, data.dim);
    let cols = dim + 1;
    let n = data.len() as f64;
    if let Some(g) = grad.as_deref_mut() {
        g.fill(0.0);
    }
    let mut p = vec![0.0; c_n];
    let mut loss = 0.0;
    for i in 0..data.len() {
        let x = data.row(i);
        for (c, s) in p.iter_mut().enumerate() {
            let row = &w[c * cols..(c + 1) * cols];
            *s = row[dim] + row[..dim].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        let m = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = p.iter().map(|s| (s - m).exp()).sum();
        let log_z = m + z.ln();
        let y = data.labels[i];
        loss += log_z - p[y];
        if let Some(g) = grad.as_deref_mut() {
            for c in 0..c_n {
                let mut r = (p[c] - log_z).exp();
                if c == y {
                    r -= 1.0;
                }
                let row = &mut g[c * cols..(c + 1) * cols];
                for (gk, xk) in row[..dim].iter_mut().zip(x) {
                    *gk += r * xk;
                }
                row[dim] += r;
            }
        }
    }
    loss /= n;
    let mut penalty = 0.0;
    for c in 0..c_n {
        for k in 0..dim {
            penalty += w[c * cols + k] * w[c * cols + k];
        }
    }
    if let Some(g) = grad {
        for c in 0..c_n {
            for k in 0..cols {
                g[c * cols + k] /= n;
                if k < dim {
                    g[c * cols + k] += lambda * w[c * cols + k];
                }
            }
        }
    }
    loss + 0.5 * lambda * penalty
}

/// Fits a softmax regression by full-batch gradient descent with
/// backtracking line search, starting from zero weights.
///
/// Every accepted step lowers the objective; fitting stops once the
/// gradient norm falls below `1e-6` or after `iters` steps.
pub fn fit_logreg(train: &LabeledDataset, lambda: f64, iters: usize) -> Result<LinearClassifier, EvalError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(EvalError::Config(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    if train.present_classes() < 2 {
        return Err(EvalError::Degenerate("training data holds fewer than two classes".into()));
    }
    let size = train.classes * (train.dim + 1);
    let mut w = vec![0.0; size];
    let mut g = vec![0.0; size];
    let mut trial = vec![0.0; size];
    let mut f = objective(train, &w, lambda, Some(&mut g));
    let mut step = 1.0;
    for _ in 0..iters {
        let gg: f64 = g.iter().map(|x| x * x).sum();
        if gg.sqrt() < 1e-6 {
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            for ((t, w), g) in trial.iter_mut().zip(&w).zip(&g) {
                *t = w - step * g;
            }
            let ft = objective(train, &trial, lambda, None);
            if ft <= f - 1e-4 * step * gg {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        std::mem::swap(&mut w, &mut trial);
        f = objective(train, &w, lambda, Some(&mut g));
        step *= 2.0;
    }
    Ok(LinearClassifier {
        classes: train.classes,
        dim: train.dim,
        weights: w,
        lambda,
    })
}

/// Macro and micro F1 of `pred` against `gold` over `classes` classes.
///
/// A class with no predicted and no gold instances scores 0 in the macro
/// mean.
pub fn f1_scores(pred: &[usize], gold: &[usize], classes: usize) -> (f64, f64) {
    assert_eq!(pred.len(), gold.len(), "prediction and gold lengths differ");
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fneg = vec![0usize; classes];
    for (&p, &g) in pred.iter().zip(gold) {
        if p == g {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fneg[g] += 1;
        }
    }
    let f1 = |tp: usize, fp: usize, fneg: usize| {
        let denom = 2 * tp + fp + fneg;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    let macro_f1 = (0..classes).map(|c| f1(tp[c], fp[c], fneg[c])).sum::<f64>() / classes as f64;
    let micro_f1 = f1(tp.iter().sum(), fp.iter().sum(), fneg.iter().sum());
    (macro_f1, micro_f1)
}

/// Labels read from a file, resolved against a graph's node names.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Labels<K> {
    pub items: Vec<K>,
    pub labels: Vec<usize>,
    /// Class names in index order (sorted).
    pub class_names: Vec<String>,
    /// Lines naming nodes or edges the graph does not have.
    pub missing: usize,
}

pub type NodeLabels = Labels<NodeId>;
pub type EdgeLabels = Labels<(NodeId, NodeId)>;

fn read_label_file<K>(
    path: &Path,
    fields: usize,
    mut resolve: impl FnMut(&[&str]) -> Option<K>,
) -> Result<Labels<K>, EvalError> {
    let file = fs::File::open(path)?;
    let mut raw = Vec::new();
    let mut missing = 0;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = trimmed.split('\t').collect();
        if parts.len() != fields {
            return Err(EvalError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                reason: format!("expected {fields} tab-separated fields, found {}", parts.len()),
            });
        }
        match resolve(&parts[..fields - 1]) {
            Some(k) => raw.push((k, parts[fields - 1].to_string())),
            None => missing += 1,
        }
    }
    if missing > 0 {
        log::warn!("{}: skipped {missing} labeled items absent from the graph", path.display());
    }
    let index: BTreeMap<String, usize> = raw
        .iter()
        .map(|(_, l)| l.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();
    let mut class_names = vec![String::new(); index.len()];
    for (name, &i) in &index {
        class_names[i] = name.clone();
    }
    let (items, labels) = raw.into_iter().map(|(k, l)| (k, index[&l])).unzip();
    Ok(Labels {
        items,
        labels,
        class_names,
        missing,
    })
}

/// Reads `node<TAB>label` lines.
pub fn read_node_labels(path: &Path, names: &NodeNames) -> Result<NodeLabels, EvalError> {
    read_label_file(path, 2, |f| names.id(f[0]))
}

/// Reads `node<TAB>node<TAB>label` lines; pairs are stored as `(min, max)` and
/// must be edges of `union`.
pub fn read_edge_labels(path: &Path, names: &NodeNames, union: &EdgeSet) -> Result<EdgeLabels, EvalError> {
    read_label_file(path, 3, |f| {
        let (a, b) = (names.id(f[0])?, names.id(f[1])?);
        union.contains(a, b).then_some((a.min(b), a.max(b)))
    })
}

/// Embedding of each labeled node at snapshot `t`.
pub fn node_dataset(store: &EmbeddingStore, t: usize, labels: &NodeLabels) -> Result<LabeledDataset, EvalError> {
    check_snapshot(store, t)?;
    let mut features = Vec::with_capacity(labels.items.len() * store.dim());
    for &v in &labels.items {
        features.extend_from_slice(store.vector(t, v));
    }
    LabeledDataset::new(features, store.dim(), labels.labels.clone(), labels.class_names.len())
}

/// Concatenated endpoint embeddings `[u_min | u_max]` at snapshot `t`.
pub fn edge_dataset(store: &EmbeddingStore, t: usize, labels: &EdgeLabels) -> Result<LabeledDataset, EvalError> {
    check_snapshot(store, t)?;
    let mut features = Vec::with_capacity(labels.items.len() * 2 * store.dim());
    for &(a, b) in &labels.items {
        features.extend_from_slice(store.vector(t, a.min(b)));
        features.extend_from_slice(store.vector(t, a.max(b)));
    }
    LabeledDataset::new(features, 2 * store.dim(), labels.labels.clone(), labels.class_names.len())
}

fn check_snapshot(store: &EmbeddingStore, t: usize) -> Result<(), EvalError> {
    if t == 0 || t > store.trained() {
        return Err(EvalError::Config(format!(
            "snapshot {t} is not trained (have 1..={})",
            store.trained()
        )));
    }
    Ok(())
}

/// Split parameters shared by both tasks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalSettings {
    pub repeats: usize,
    pub lambda: f64,
    pub iters: usize,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            repeats: 10,
            lambda: 1e-4,
            iters: 500,
            seed: 0,
        }
    }
}

/// Mean and standard deviation of both F1 scores over the repeats.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskResult {
    pub task: String,
    pub train_ratio: f64,
    pub macro_mean: f64,
    pub macro_std: f64,
    pub micro_mean: f64,
    pub micro_std: f64,
    pub repeats: usize,
}

/// Per class, a `ratio` share of the instances (at least one, and at least
/// one left over when the class has two or more) goes to training.
pub fn stratified_split<R: rand::Rng + ?Sized>(labels: &[usize], ratio: f64, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (_, mut members) in by_class {
        members.shuffle(rng);
        let n = members.len();
        let mut k = (ratio * n as f64).round() as usize;
        if n >= 2 {
            k = k.clamp(1, n - 1);
        } else {
            k = k.min(n);
        }
        train.extend_from_slice(&members[..k]);
        test.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Repeated stratified-split evaluation of a dataset.
pub fn evaluate(task: &str, data: &LabeledDataset, train_ratio: f64, settings: &EvalSettings) -> Result<TaskResult, EvalError> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(EvalError::Config(format!("train ratio must lie in (0, 1), got {train_ratio}")));
    }
    if settings.repeats == 0 {
        return Err(EvalError::Config("repeats must be at least 1".into()));
    }
    if data.present_classes() < 2 {
        return Err(EvalError::Degenerate(format!("{task} labels cover fewer than two classes")));
    }
    let ratio_key = (train_ratio * 1e6).round() as u64;
    let scores: Vec<(f64, f64)> = (0..settings.repeats)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed::rng(settings.seed, &[seed::STREAM_SPLITS, ratio_key, r as u64]);
            let (train_idx, test_idx) = stratified_split(data.labels(), train_ratio, &mut rng);
            let model = fit_logreg(&data.subset(&train_idx), settings.lambda, settings.iters)?;
            let test = data.subset(&test_idx);
            Ok(f1_scores(&model.predict_all(&test), test.labels(), data.classes()))
        })
        .collect::<Result<_, EvalError>>()?;
    let (macro_mean, macro_std) = mean_std(scores.iter().map(|s| s.0));
    let (micro_mean, micro_std) = mean_std(scores.iter().map(|s| s.1));
    Ok(TaskResult {
        task: task.to_string(),
        train_ratio,
        macro_mean,
        macro_std,
        micro_mean,
        micro_std,
        repeats: settings.repeats,
    })
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Node classification on snapshot-`t` embeddings.
pub fn node_task(
    store: &EmbeddingStore,
    t: usize,
    labels: &NodeLabels,
    train_ratio: f64,
    settings: &EvalSettings,
) -> Result<TaskResult, EvalError> {
    evaluate("node", &node_dataset(store, t, labels)?, train_ratio, settings)
}

/// Edge classification on concatenated snapshot-`t` endpoint embeddings.
pub fn edge_task(
    store: &EmbeddingStore,
    t: usize,
    labels: &EdgeLabels,
    train_ratio: f64,
    settings: &EvalSettings,
) -> Result<TaskResult, EvalError> {
    evaluate("edge", &edge_dataset(store, t, labels)?, train_ratio, settings)
}

pub const RESULTS_HEADER: &str = "task\ttrain_ratio\tmacro_f1_mean\tmacro_f1_std\tmicro_f1_mean\tmicro_f1_std";

pub fn write_results<W: Write>(out: W, results: &[TaskResult]) -> io::Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "{RESULTS_HEADER}")?;
    for r in results {
        writeln!(
            out,
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            r.task, r.train_ratio, r.macro_mean, r.macro_std, r.micro_mean, r.micro_std
        )?;
    }
    out.flush()
}

/// Two principal coordinates per point.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub coords: Vec<[f64; 2]>,
    pub components: [Vec<f64>; 2],
    pub variances: [f64; 2],
}

/// Projects rows of `points` (width `dim`) onto their top two principal
/// directions. Each direction is signed so that its largest-magnitude
/// loading is positive.
pub fn project_2d(points: &[f64], dim: usize) -> Result<Projection, EvalError> {
    if dim == 0 || !points.len().is_multiple_of(dim) || points.len() / dim < 2 {
        return Err(EvalError::Degenerate("projection needs at least two points".into()));
    }
    let n = points.len() / dim;
    let mut mean = vec![0.0; dim];
    for row in points.chunks(dim) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x / n as f64;
        }
    }
    let mut cov = vec![0.0; dim * dim];
    for row in points.chunks(dim) {
        for a in 0..dim {
            let da = row[a] - mean[a];
            for b in 0..dim {
                cov[a * dim + b] += da * (row[b] - mean[b]) / n as f64;
            }
        }
    }
    let scale = (0..dim).map(|a| cov[a * dim + a]).sum::<f64>().max(f64::MIN_POSITIVE);

    let mut components = [vec![0.0; dim], vec![0.0; dim]];
    let mut variances = [0.0; 2];
    for k in 0..2 {
        let (vec, val) = power_iteration(&cov, dim, k);
        if val <= 1e-12 * scale {
            if k == 1 {
                log::warn!("embeddings have rank below 2; second coordinate set to zero");
            }
            continue;
        }
        for a in 0..dim {
            for b in 0..dim {
                cov[a * dim + b] -= val * vec[a] * vec[b];
            }
        }
        components[k] = vec;
        variances[k] = val;
    }

    let coords = points
        .chunks(dim)
        .map(|row| {
            let mut c = [0.0; 2];
            for (k, comp) in components.iter().enumerate() {
                c[k] = row.iter().zip(&mean).zip(comp).map(|((x, m), w)| (x - m) * w).sum();
            }
            c
        })
        .collect();
    Ok(Projection {
        coords,
        components,
        variances,
    })
}

fn power_iteration(m: &[f64], dim: usize, k: usize) -> (Vec<f64>, f64) {
    // deterministic start with weight on every axis
    let mut v: Vec<f64> = (0..dim).map(|i| 1.0 + ((i + k) % 7) as f64 * 0.1).collect();
    normalize(&mut v);
    let mut next = vec![0.0; dim];
    let mut value = 0.0;
    for _ in 0..1000 {
        for a in 0..dim {
            next[a] = (0..dim).map(|b| m[a * dim + b] * v[b]).sum();
        }
        let norm = normalize(&mut next);
        if norm == 0.0 {
            return (v, 0.0);
        }
        let delta: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut v, &mut next);
        value = norm;
        if delta < 1e-13 {
            break;
        }
    }
    let mut big = 0;
    for i in 0..dim {
        if v[i].abs() > v[big].abs() {
            big = i;
        }
    }
    if v[big] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    (v, value)
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Writes `node,x,y,label` rows; `label` is empty for unlabeled nodes.
pub fn write_projection<W: Write>(
    out: W,
    nodes: &[NodeId],
    names: &NodeNames,
    projection: &Projection,
    labels: &BTreeMap<NodeId, String>,
) -> io::Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "node,x,y,label")?;
    for (v, c) in nodes.iter().zip(&projection.coords) {
        let label = labels.get(v).map(String::as_str).unwrap_or("");
        writeln!(out, "{},{},{},{}", names.name(*v), c[0], c[1], label)?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(rows: &[(&[f64], usize)], classes: usize) -> LabeledDataset {
        let dim = rows[0].0.len();
        let features = rows.iter().flat_map(|r| r.0.iter().copied()).collect();
        LabeledDataset::new(features, dim, rows.iter().map(|r| r.1).collect(), classes).unwrap()
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1_scores(&[0, 1, 2, 1], &[0, 1, 2, 1], 3), (1.0, 1.0));
        // gold 0,0,1,1 vs pred 0,0,0,1: class 0 F1 = 0.8, class 1 F1 = 2/3
        let (macro_f1, micro_f1) = f1_scores(&[0, 0, 0, 1], &[0, 0, 1, 1], 2);
        assert!((macro_f1 - (0.8 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(micro_f1, 0.75);
        let (macro_f1, micro_f1) = f1_scores(&[0, 0, 0, 0], &[0, 0, 1, 1], 2);
        assert!((macro_f1 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(micro_f1, 0.5);
    }

    proptest! {
        #[test]
        fn micro_f1_is_accuracy(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60)) {
            let (pred, gold): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let acc = pred.iter().zip(&gold).filter(|(p, g)| p == g).count() as f64 / pred.len() as f64;
            let (_, micro_f1) = f1_scores(&pred, &gold, 4);
            prop_assert!((micro_f1 - acc).abs() < 1e-15);
        }
    }

    #[test]
    fn separable_line_is_learned() {
        let data = dataset(&[(&[-1.0], 0), (&[-2.0], 0), (&[1.0], 1), (&[2.5], 1)], 2);
        let model = fit_logreg(&data, 0.0, 500).unwrap();
        assert_eq!(model.predict_all(&data), data.labels());
    }

    #[test]
    fn single_class_is_degenerate() {
        let data = dataset(&[(&[1.0], 1), (&[2.0], 1)], 2);
        assert!(matches!(fit_logreg(&data, 1.0, 10), Err(EvalError::Degenerate(_))));
    }

    #[test]
    fn heavy_regularization_predicts_prior() {
        let data = dataset(&[(&[-1.0], 0), (&[-2.0], 0), (&[-3.0], 0), (&[4.0], 1)], 2);
        let model = fit_logreg(&data, 1e9, 500).unwrap();
        let cols = 2;
        for c in 0..2 {
            assert!(model.weights()[c * cols].abs() < 1e-8);
        }
        assert!([-10.0, 0.0, 10.0].iter().all(|&x| model.predict(&[x]) == 0));
    }

    fn random_dataset(seed: u64, n: usize, dim: usize, classes: usize) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        let features = labels
            .iter()
            .flat_map(|&l| (0..dim).map(move |k| if k == l { 1.0 } else { 0.0 }).collect::<Vec<_>>())
            .map(|x| x + rng.random_range(-0.8..0.8))
            .collect();
        LabeledDataset::new(features, dim, labels, classes).unwrap()
    }

    #[test]
    fn duplicated_rows_give_same_weights() {
        let data = random_dataset(3, 30, 4, 3);
        let twice: Vec<usize> = (0..data.len()).chain(0..data.len()).collect();
        let a = fit_logreg(&data, 0.1, 200).unwrap();
        let b = fit_logreg(&data.subset(&twice), 0.1, 200).unwrap();
        for (x, y) in a.weights().iter().zip(b.weights()) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn scaling_features_keeps_decisions_without_penalty() {
        let data = random_dataset(4, 90, 3, 3);
        let scaled = LabeledDataset::new(data.features.iter().map(|x| 3.0 * x).collect(), 3, data.labels.clone(), 3).unwrap();
        let a = fit_logreg(&data, 0.0, 5000).unwrap();
        let b = fit_logreg(&scaled, 0.0, 5000).unwrap();
        assert_eq!(a.predict_all(&data), b.predict_all(&scaled));
    }

    #[test]
    fn objective_never_increases() {
        let data = random_dataset(5, 60, 3, 3);
        let mut last = f64::INFINITY;
        for iters in [0, 1, 2, 5, 10, 20, 50, 100] {
            let model = fit_logreg(&data, 0.01, iters).unwrap();
            let f = objective(&data, model.weights(), 0.01, None);
            assert!(f <= last + 1e-15, "{iters}: {f} > {last}");
            last = f;
        }
    }

    #[test]
    fn split_is_stratified() {
        let labels: Vec<usize> = (0..100).map(|i| usize::from(i % 4 == 0)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (train, test) = stratified_split(&labels, 0.7, &mut rng);
        assert_eq!(train.len() + test.len(), 100);
        let ones = train.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!(ones, 18);
        assert_eq!(train.len() - ones, 53);
    }

    #[test]
    fn evaluate_is_reproducible() {
        let data = random_dataset(9, 80, 4, 4);
        let s = EvalSettings {
            repeats: 4,
            ..EvalSettings::default()
        };
        let a = evaluate("node", &data, 0.5, &s).unwrap();
        assert_eq!(a, evaluate("node", &data, 0.5, &s).unwrap());
        assert!(a.macro_mean > 0.5);
    }

    #[test]
    fn projection_of_axis_aligned_cloud() {
        let pts = [3.0, 0.0, -3.0, 0.0, 0.0, 1.0, 0.0, -1.0];
        let p = project_2d(&pts, 2).unwrap();
        assert!((p.components[0][0].abs() - 1.0).abs() < 1e-9);
        assert!((p.components[1][1].abs() - 1.0).abs() < 1e-9);
        assert!(p.variances[0] >= p.variances[1]);
        assert!((p.coords[0][0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn projection_ignores_duplication() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
        let twice: Vec<f64> = pts.iter().chain(&pts).copied().collect();
        let a = project_2d(&pts, 3).unwrap();
        let b = project_2d(&twice, 3).unwrap();
        for (x, y) in a.coords.iter().zip(&b.coords) {
            assert!((x[0] - y[0]).abs() < 1e-9 && (x[1] - y[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn rank_one_cloud_zero_fills_second_axis() {
        let pts = [1.0, 2.0, 2.0, 4.0, 3.0, 6.0];
        let p = project_2d(&pts, 2).unwrap();
        assert!(p.coords.iter().all(|c| c[1] == 0.0));
        assert!(p.variances[0] > 0.0);
    }
}
