//! Embeddings for temporal networks that track how each node evolves.
//!
//! A [`graph::TemporalGraph`] is trained snapshot by snapshot with
//! [`model::train_all`]. Each snapshot combines skip-gram over random walks
//! ([`walks`]), a temporal objective that predicts pair offsets from
//! convolution features of past embeddings ([`kernels`]), and a smoothness
//! penalty weighted by structural drift. [`eval`] scores the result with
//! linear classifiers, and [`synth`] generates networks with planted
//! temporal patterns to check it against.
//!
//! ```
//! use epne::eval::{edge_task, EvalSettings};
//! use epne::model::{train_all, TrainConfig};
//! use epne::synth::{synth_periodic, SynthSpec};
//!
//! let data = synth_periodic(&SynthSpec { nodes: 60, snapshots: 8, ..SynthSpec::default() })?;
//! let cfg = TrainConfig { dim: 8, epochs: 2, walks_per_node: 3, ..TrainConfig::default() };
//! let trained = train_all(&data.graph, &cfg)?;
//!
//! let settings = EvalSettings { repeats: 2, ..EvalSettings::default() };
//! let result = edge_task(&trained.store, 8, &data.edge_class_labels(), 0.7, &settings)?;
//! assert!(result.macro_mean > 0.0);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```
//!
//! The guide under `book/` covers each part in more depth.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod eval;
pub mod graph;
pub mod kernels;
pub mod model;
mod seed;
pub mod synth;
pub mod walks;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
