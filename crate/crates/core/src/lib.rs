//! Decentralized discriminative dictionary learning (D4L).
//!
//! A network of agents jointly learns a dictionary for elastic-net sparse
//! coding and a multinomial classifier on the aggregated codes. Agreement is
//! enforced through per-edge Lagrange multipliers and a projected
//! primal-dual (saddle-point) iteration; every agent talks only to its
//! neighbors.
//!
//! - [`topology`]: communication graphs and their incidence operators.
//! - [`coding`]: the elastic-net coder, its KKT certificate and the implicit
//!   gradient of a loss on the code with respect to the dictionary.
//! - [`losses`]: multinomial and binary logistic losses.
//! - [`saddle`]: projections, per-agent and per-edge updates, stationarity,
//!   checkpoints.
//! - [`data`]: images, patches, synthetic textures, corpora and sampling.
//! - [`harness`]: configuration, the simulation loop, metrics and run
//!   directories.
//! - [`cli`]: the `d4l` command-line front end.
//!
//! The `examples/` directory has one runnable program per capability.

pub mod cli;
pub mod coding;
pub mod data;
pub mod error;
pub mod harness;
pub mod losses;
pub mod saddle;
pub mod topology;

pub use error::{Error, Result};
