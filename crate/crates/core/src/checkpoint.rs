//! Text checkpoints.
//!
//! An embedding file holds one snapshot: a `nodes dim t` header, then one
//! `name v1 .. vd` line per node. A decoder file holds a `rows cols` header
//! and one line per row. Numbers are written in shortest round-trip form, so
//! reading a file back gives the exact values and equal models give equal
//! bytes.

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::graph::NodeNames;
use crate::model::{Decoder, EmbeddingStore, EpochLoss, ModelError};

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}:{line}: {reason}")]
    Format { path: String, line: usize, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn embedding_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("embeddings_t{t}.txt"))
}

pub const DECODER_FILE: &str = "decoder.txt";
pub const LOSSES_FILE: &str = "losses.tsv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const CONFIG_FILE: &str = "config.toml";

fn join_row(out: &mut impl Write, values: &[f64]) -> io::Result<()> {
    for v in values {
        write!(out, " {v}")?;
    }
    writeln!(out)
}

/// Writes snapshot `t` of `store`.
pub fn write_embeddings<W: Write>(out: W, store: &EmbeddingStore, names: &NodeNames, t: usize) -> io::Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "{} {} {}", store.nodes(), store.dim(), t)?;
    for v in 0..store.nodes() {
        let v = v as u32;
        write!(out, "{}", names.name(v))?;
        join_row(&mut out, store.vector(t, v))?;
    }
    out.flush()
}

/// One snapshot read back from an embedding file.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotEmbeddings {
    pub t: usize,
    pub dim: usize,
    pub names: Vec<String>,
    /// Row-major, one row per name.
    pub vectors: Vec<f64>,
}

impl SnapshotEmbeddings {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }
}

fn parse_header(path: &Path, line: &str, fields: usize) -> Result<Vec<usize>, CheckpointError> {
    let err = |reason: String| CheckpointError::Format {
        path: path.display().to_string(),
        line: 1,
        reason,
    };
    let parts: Vec<usize> = line
        .split_whitespace()
        .map(|p| p.parse::<usize>().map_err(|e| err(format!("bad header value {p:?}: {e}"))))
        .collect::<Result<_, _>>()?;
    if parts.len() != fields {
        return Err(err(format!("header needs {fields} fields, found {}", parts.len())));
    }
    Ok(parts)
}

fn parse_values(path: &Path, line_no: usize, parts: &[&str], want: usize) -> Result<Vec<f64>, CheckpointError> {
    let err = |reason: String| CheckpointError::Format {
        path: path.display().to_string(),
        line: line_no,
        reason,
    };
    if parts.len() != want {
        return Err(err(format!("expected {want} values, found {}", parts.len())));
    }
    parts
        .iter()
        .map(|p| p.parse::<f64>().map_err(|e| err(format!("bad number {p:?}: {e}"))))
        .collect()
}

pub fn read_embeddings(path: &Path) -> Result<SnapshotEmbeddings, CheckpointError> {
    let mut lines = BufReader::new(fs::File::open(path)?).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let h = parse_header(path, &header, 3)?;
    let (n, dim, t) = (h[0], h[1], h[2]);
    let mut names = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n * dim);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        vectors.extend(parse_values(path, i + 2, &parts[1..], dim)?);
        names.push(parts[0].to_string());
    }
    if names.len() != n {
        return Err(CheckpointError::Format {
            path: path.display().to_string(),
            line: 1,
            reason: format!("header declares {n} nodes, file has {}", names.len()),
        });
    }
    Ok(SnapshotEmbeddings { t, dim, names, vectors })
}

pub fn write_decoder<W: Write>(out: W, dec: &Decoder) -> io::Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "{} {}", dec.out_dim(), dec.cols())?;
    for r in 0..dec.out_dim() {
        let row = dec.row(r);
        write!(out, "{}", row[0])?;
        for v in &row[1..] {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    out.flush()
}

pub fn read_decoder(path: &Path) -> Result<Decoder, CheckpointError> {
    let mut lines = BufReader::new(fs::File::open(path)?).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let h = parse_header(path, &header, 2)?;
    let (rows, cols) = (h[0], h[1]);
    let mut weights = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        weights.extend(parse_values(path, i + 2, &parts, cols)?);
    }
    if cols % 2 != 0 || weights.len() != rows * cols {
        return Err(CheckpointError::Format {
            path: path.display().to_string(),
            line: 1,
            reason: format!("expected {rows} rows of {cols} (even) columns"),
        });
    }
    Ok(Decoder::from_weights(rows, cols / 2, weights)?)
}

pub const LOSSES_HEADER: &str = "epoch\tt\tL_struct\tL_temporal\tL_smooth\ttotal";

pub fn write_losses<'a, W: Write>(out: W, losses: impl IntoIterator<Item = &'a EpochLoss>) -> io::Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "{LOSSES_HEADER}")?;
    for l in losses {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            l.epoch, l.t, l.structural, l.temporal, l.smooth, l.total
        )?;
    }
    out.flush()
}

/// Everything needed to reproduce a run besides the input data.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub deepwalk_equivalent: bool,
    pub workers: usize,
    pub nodes: usize,
    pub snapshots: usize,
}

impl Manifest {
    pub fn write<W: Write>(&self, out: W) -> io::Result<()> {
        let mut out = BufWriter::new(out);
        writeln!(out, "version={}", self.version)?;
        writeln!(out, "seed={}", self.seed)?;
        writeln!(out, "config_sha256={}", self.config_sha256)?;
        let mode = if self.deepwalk_equivalent { "deepwalk-equivalent" } else { "full" };
        writeln!(out, "mode={mode}")?;
        let determinism = if self.workers == 1 { "deterministic" } else { "parallel" };
        writeln!(out, "workers={} ({determinism})", self.workers)?;
        writeln!(out, "nodes={}", self.nodes)?;
        writeln!(out, "snapshots={}", self.snapshots)?;
        out.flush()
    }
}
