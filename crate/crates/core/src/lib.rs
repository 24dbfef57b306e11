//! Federated graph learning with per-client parametric UMAP manifolds,
//! distance-space marker prototypes aggregated under secure aggregation and
//! differential privacy, calibrated pseudo-edge admission from a pluggable
//! proposer, and the evaluation harness around them.

pub mod cli;
pub mod config;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod federation;
pub mod graph;
pub mod llmguide;
pub mod markers;
pub mod metrics;
pub mod model;
pub mod privacy;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
