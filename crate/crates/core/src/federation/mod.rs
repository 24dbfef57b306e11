//! Round orchestration: client-local training, marker sharing through
//! simulated secure aggregation, server aggregation and Polyak averaging.

mod client;
mod convergence;
mod eval;
mod secagg;
mod server;
mod sim;

pub use client::{ClientRoundReport, ClientState};
pub use convergence::{ConvergenceTrace, QuadraticHarness};
pub use eval::{evaluate_client, membership_pairs, ClientEval};
pub use secagg::{dequantize, mask_update, quantize, unmask_sum, MaskScheme, FIXED_POINT_SCALE};
pub use server::{
    aggregate_markers, aggregate_masked, polyak_average, sample_participants, wire_bytes, ClientUpdate, MaskedUpdate,
    ServerState,
};
pub use sim::{Federation, RoundReport};

use crate::error::{Error, Result};
use crate::llmguide::MockOracleProposer;
use crate::markers::{LossWeights, MarkerCounts};
use crate::privacy::DpConfig;

/// Everything a simulation needs besides the client graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct FedSettings {
    /// Aggregate markers on the server; off for the local-only baseline.
    pub aggregate: bool,
    /// Admit proposer suggestions as pseudo-edges and pseudo-labels.
    pub use_proposals: bool,
    pub gnn_hidden: usize,
    pub umap_hidden: Vec<usize>,
    pub umap_dim: usize,
    pub neighbors: usize,
    pub counts: MarkerCounts,
    pub sigma_kern: f64,
    pub weights: LossWeights,
    pub rounds: usize,
    pub local_epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_pairs: usize,
    pub lr: f64,
    pub n_neg: usize,
    pub kl_samples: usize,
    pub marker_samples: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub dp: DpConfig,
    /// Per-round client participation probability.
    pub participation: f64,
    pub use_temperature: bool,
    pub tau: f64,
    pub proposer: MockOracleProposer,
    pub mrr_k: usize,
    pub seed: u64,
}

impl Default for FedSettings {
    fn default() -> Self {
        let dp = DpConfig::default();
        Self {
            aggregate: true,
            use_proposals: true,
            gnn_hidden: 32,
            umap_hidden: vec![32],
            umap_dim: 32,
            neighbors: 15,
            counts: MarkerCounts::default(),
            sigma_kern: 1.0,
            weights: LossWeights::default(),
            rounds: 50,
            local_epochs: 2,
            steps_per_epoch: 10,
            batch_pairs: 1024,
            lr: 2e-3,
            n_neg: 5,
            kl_samples: 64,
            marker_samples: 1,
            min_dist: 0.1,
            spread: 1.0,
            participation: dp.sampling_rate,
            dp,
            use_temperature: true,
            tau: 0.8,
            proposer: MockOracleProposer::default(),
            mrr_k: 10,
            seed: 1,
        }
    }
}

impl FedSettings {
    /// Local-only baseline: no aggregation and no admitted proposals.
    pub fn local_only(mut self) -> Self {
        self.aggregate = false;
        self.use_proposals = false;
        self
    }

    pub fn local_steps(&self) -> usize {
        self.local_epochs * self.steps_per_epoch
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        if self.gnn_hidden == 0 || self.umap_dim == 0 || self.umap_hidden.iter().any(|&h| h == 0) {
            return bad("layer widths must be positive");
        }
        if self.neighbors == 0 {
            return bad("neighbors must be positive");
        }
        if self.counts.positive == 0 || self.counts.negative == 0 {
            return bad("both marker polarities need at least one marker");
        }
        if !(self.sigma_kern > 0.0) {
            return bad("sigma_kern must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_pairs == 0 || self.kl_samples == 0 || self.marker_samples == 0 {
            return bad("batch_pairs, kl_samples and marker_samples must be positive");
        }
        if !(0.0..=1.0).contains(&self.participation) {
            return bad("participation must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau must lie in [0, 1]");
        }
        self.dp.validate()?;
        self.proposer.validate()
    }
}
