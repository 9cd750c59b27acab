//! Simulator for memristor-based associative memory.
//!
//! The crate is organised bottom-up:
//!
//! - [`pattern`]: stored memories (binary ±1 or continuous) and pattern sets.
//! - [`network`]: Hopfield energy, synchronous/asynchronous updates and
//!   iterative retrieval over any [`network::Recurrent`] operator.
//! - [`learning`]: Hebbian, Storkey and pseudo-inverse rules plus the
//!   gradient-trained, fault-aware single-layer and two-layer rules.
//! - [`crossbar`]: differential-pair conductance mapping, programming error,
//!   stuck-at faults and analog matrix-vector multiplication.
//! - [`data`]: MNIST IDX parsing, crop/bicubic/binarize preprocessing,
//!   random patterns and corruption models.
//! - [`metrics`]: cosine similarity, retrieval quality, capacity sweeps and
//!   log-log scaling fits.
//! - [`costmodel`]: analytical energy/latency of synchronous vs asynchronous
//!   updates.
//!
//! Every stochastic step takes an explicit `u64` seed; [`seed::derive`]
//! splits a global seed into stage-keyed sub-seeds.

pub mod costmodel;
pub mod crossbar;
pub mod data;
pub mod error;
pub mod learning;
pub mod metrics;
pub mod network;
pub mod pattern;
pub mod seed;

pub use error::{Error, Result};
pub use network::{HopfieldNet, MultilayerNet, Recurrent, RetrievalConfig, RetrievalTrace};
pub use pattern::{Pattern, PatternKind, PatternSet};
