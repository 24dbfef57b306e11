//! Per-client state and one local round (fuse, kNN, UMAP update, marker
//! reset, clipped and noised local optimisation, payload).

use std::collections::HashSet;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::server::{wire_bytes, ClientUpdate};
use super::FedSettings;
use crate::encoder::gnn::MeanAdjacency;
use crate::encoder::knn::{build_knn, NeighborGraph};
use crate::encoder::text::{TextEncoder, TextMatrix};
use crate::encoder::umap::sample_umap_terms;
use crate::error::{Error, Result};
use crate::graph::{ClientGraph, Split};
use crate::llmguide::{
    admit, fit_temperature_with, AdmissionReport, CalibrationModel, Proposal, ProposalKind, ProposalSlice, Proposer,
    Target,
};
use crate::markers::{expected_markers, init_markers, kl_noise, LossBundle, MarkerPosterior, MarkerPrior};
use crate::model::{
    add_gaussian_noise, clip_global, forward, loss_and_grad, umap_blocks, umap_blocks_mut, umap_only_grad, Adam,
    ClientView, ModelDims, ModelParams, StepBatch,
};
use crate::privacy::clip;
use crate::rng::{rng_for, tag, SimRng};

/// What one participating client reports for a round. Holds no
/// embeddings, features, texts or weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientRoundReport {
    pub round: u64,
    pub client: usize,
    pub steps: usize,
    /// Mean over local steps.
    pub loss: LossBundle,
    pub umap_only_loss: f64,
    /// Mean gradient norm before clipping.
    pub grad_norm: f64,
    /// Norm of the marker change before clipping.
    pub payload_delta_norm: f64,
    pub accepted_edges: usize,
    pub accepted_labels: usize,
    pub payload_bytes: usize,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    /// The client's graph with every label, used only for evaluation.
    pub graph: ClientGraph,
    /// Same graph with labels restricted to train nodes plus admitted pseudo-labels.
    pub train_graph: ClientGraph,
    pub text: TextMatrix,
    /// Message-passing edges: train edges plus admitted pseudo-edges.
    pub mp_edges: Vec<(usize, usize)>,
    pub adj: MeanAdjacency,
    pub train_nodes: Vec<usize>,
    /// Always generated, so evaluation can exclude their targets in every
    /// configuration; only used for training when `uses_proposals` is set.
    pub proposals: Vec<Proposal>,
    pub uses_proposals: bool,
    pub calibration: CalibrationModel,
    pub admission: AdmissionReport,
    pub params: ModelParams,
    /// Positive weight `w_k`: train nodes plus train edges.
    pub weight: f64,
    pub participations: usize,
    adam: Adam,
    umap_adam: Adam,
}

fn sample_non_edges(n: usize, known: &HashSet<(usize, usize)>, count: usize, rng: &mut SimRng) -> Vec<(usize, usize)> {
    let capacity = n * n.saturating_sub(1) / 2 - known.len().min(n * n.saturating_sub(1) / 2);
    let count = count.min(capacity);
    let mut out = Vec::with_capacity(count);
    let mut tries = 0usize;
    while out.len() < count && tries < 100 * count + 100 {
        tries += 1;
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b && !known.contains(&(a.min(b), a.max(b))) {
            out.push((a.min(b), a.max(b)));
        }
    }
    out
}

fn pair_distance(z: &Array2<f64>, i: usize, j: usize) -> f64 {
    z.row(i).iter().zip(z.row(j).iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// Nearest-neighbor distance of every node, used when a client has no edge to
/// initialise positive markers from.
fn nearest_distances(z: &Array2<f64>) -> Vec<f64> {
    (0..z.nrows())
        .map(|i| {
            (0..z.nrows())
                .filter(|&j| j != i)
                .map(|j| pair_distance(z, i, j))
                .fold(f64::INFINITY, f64::min)
        })
        .filter(|d| d.is_finite())
        .collect()
}

/// Fits the temperature on the calibration slice, falling back to `T = 1`
/// when the slice lacks either outcome.
fn calibrate(proposals: &[Proposal], use_temperature: bool) -> Result<f64> {
    if !use_temperature {
        return Ok(1.0);
    }
    let slice: Vec<&Proposal> = proposals.iter().filter(|p| p.slice == ProposalSlice::Calibration).collect();
    let positives = slice.iter().filter(|p| p.correct).count();
    if positives == 0 || positives == slice.len() {
        log::warn!("calibration slice has a single outcome class; keeping T = 1");
        return Ok(1.0);
    }
    let logits: Vec<f64> = slice.iter().map(|p| p.raw_logit).collect();
    let alts: Vec<usize> = slice.iter().map(|p| p.alternatives).collect();
    let outcomes: Vec<bool> = slice.iter().map(|p| p.correct).collect();
    fit_temperature_with(&logits, &alts, &outcomes)
}

impl ClientState {
    /// Proposals, calibration and admission, parameter initialisation and
    /// markers placed at quantiles of the initial embedding distances.
    pub fn setup(
        id: usize,
        graph: ClientGraph,
        n_classes: usize,
        s: &FedSettings,
        ab: (f64, f64),
        encoder: &dyn TextEncoder,
        proposer: &dyn Proposer,
    ) -> Result<Self> {
        graph.validate()?;
        let n = graph.n_nodes();
        if n < 3 {
            return Err(Error::Insufficient(format!("client {id} has {n} nodes; at least 3 are needed")));
        }
        let text = TextMatrix::from_graph(&graph, encoder);

        let mut proposals = proposer.propose(&graph, id as u64)?;
        let temperature = calibrate(&proposals, s.use_temperature)?;
        let calibration = CalibrationModel { temperature, tau: s.tau };
        let admission = admit(&mut proposals, &calibration)?;

        let mut train_graph = graph.clone();
        for i in 0..n {
            if graph.node_split[i] != Split::Train {
                train_graph.labels[i] = None;
            }
        }
        let mut mp_edges = graph.edges_in(Split::Train);
        let mut train_nodes = graph.nodes_in(Split::Train);
        train_nodes.retain(|&i| graph.labels[i].is_some());
        let weight = (train_nodes.len() + mp_edges.len()).max(1) as f64;
        if s.use_proposals {
            let mut known: HashSet<(usize, usize)> = mp_edges.iter().copied().collect();
            for p in proposals.iter().filter(|p| p.accepted) {
                match (p.kind, p.target, p.payload) {
                    (ProposalKind::Edge, Target::Pair(u, v), _) => {
                        if known.insert((u, v)) {
                            mp_edges.push((u, v));
                        }
                    }
                    (ProposalKind::Label, Target::Node(i), Some(c)) if c < n_classes => {
                        train_graph.labels[i] = Some(c);
                        train_nodes.push(i);
                    }
                    _ => {}
                }
            }
            train_nodes.sort_unstable();
            train_nodes.dedup();
        }
        let adj = MeanAdjacency::from_edges(n, mp_edges.iter().copied());

        let dims = ModelDims {
            feature_dim: graph.feature_dim(),
            gnn_hidden: s.gnn_hidden,
            gnn_out: s.gnn_hidden,
            text_dim: s.umap_dim,
            fused_dim: s.gnn_hidden,
            umap_hidden: s.umap_hidden.clone(),
            umap_dim: s.umap_dim,
            n_classes,
        };
        let mut rng = rng_for(s.seed, &[tag::INIT, id as u64]);
        let placeholder = MarkerPosterior {
            mean: Vec::new(),
            log_var: Vec::new(),
            polarity: Vec::new(),
        };
        let mut params = ModelParams::new(&dims, ab.0, ab.1, placeholder, &mut rng);
        let view = ClientView {
            graph: &train_graph,
            text: &text,
            adj: &adj,
        };
        let z = forward(&params, &view)?.z;
        let mut pos: Vec<f64> = mp_edges.iter().map(|&(i, j)| pair_distance(&z, i, j)).collect();
        if pos.is_empty() {
            pos = nearest_distances(&z);
        }
        let known: HashSet<(usize, usize)> = mp_edges.iter().copied().collect();
        let neg: Vec<f64> = sample_non_edges(n, &known, pos.len().max(32), &mut rng)
            .into_iter()
            .map(|(i, j)| pair_distance(&z, i, j))
            .collect();
        let (_, posterior) = init_markers(&pos, &neg, s.counts, s.sigma_kern)?;
        params.posterior = posterior;

        Ok(Self {
            id,
            graph,
            train_graph,
            text,
            mp_edges,
            adj,
            train_nodes,
            proposals,
            uses_proposals: s.use_proposals,
            calibration,
            admission,
            params,
            weight,
            participations: 0,
            adam: Adam::new(s.lr),
            umap_adam: Adam::new(s.lr),
        })
    }

    pub fn view(&self) -> ClientView<'_> {
        ClientView {
            graph: &self.train_graph,
            text: &self.text,
            adj: &self.adj,
        }
    }

    pub fn expected_markers(&self) -> Vec<f64> {
        expected_markers(&self.params.posterior)
    }

    /// Admitted proposals of `kind` that were wired into training.
    pub fn accepted(&self, kind: ProposalKind) -> usize {
        if !self.uses_proposals {
            return 0;
        }
        self.proposals.iter().filter(|p| p.accepted && p.kind == kind).count()
    }

    /// The fuzzy kNN graph on the current fused representation.
    pub fn neighbor_graph(&self, neighbors: usize) -> Result<NeighborGraph> {
        let fused = forward(&self.params, &self.view())?.fused;
        build_knn(&fused, neighbors.min(self.graph.n_nodes() - 1), &self.mp_edges)
    }

    /// One local round. With `global` set the posterior means restart from
    /// the server markers; the payload is that reference plus the clipped
    /// (and, under DP, noised) marker change.
    pub fn local_round(
        &mut self,
        global: Option<&[f64]>,
        prior: Option<&MarkerPrior>,
        s: &FedSettings,
        round: u64,
    ) -> Result<(ClientRoundReport, ClientUpdate)> {
        let started = Instant::now();
        self.participations += 1;
        if let Some(g) = global {
            if g.len() != self.params.posterior.len() {
                return Err(Error::dim("server marker layout", self.params.posterior.len(), g.len()));
            }
            self.params.posterior.mean = g.to_vec();
        }
        let reference = self.expected_markers();
        let mut rng = rng_for(s.seed, &[tag::LOCAL, round, self.id as u64]);
        let mut noise_rng = rng_for(s.seed, &[tag::DP_NOISE, round, self.id as u64]);
        let noise_std = s.dp.noise_sigma_dp * s.dp.clip;
        let steps = s.local_steps();

        // fuse, kNN, UMAP-only update of the projection head
        let ng = self.neighbor_graph(s.neighbors)?;
        let mut umap_only_loss = 0.0;
        if steps > 0 {
            let fused = forward(&self.params, &self.view())?.fused;
            for _ in 0..s.steps_per_epoch {
                let terms = sample_umap_terms(&ng, s.batch_pairs, s.n_neg, &mut rng);
                let (loss, mut g) = umap_only_grad(&self.params.umap, &fused, &terms)?;
                umap_only_loss += loss / s.steps_per_epoch as f64;
                clip_global(umap_blocks_mut(&mut g), s.dp.clip);
                add_gaussian_noise(umap_blocks_mut(&mut g), noise_std, &mut noise_rng);
                self.umap_adam.step(umap_blocks_mut(&mut self.params.umap), umap_blocks(&g));
            }
        }

        // full local objective
        let n_markers = self.params.posterior.len();
        let kl_xi = kl_noise(s.kl_samples, n_markers, derive_kl_seed(s.seed, round, self.id));
        let known: HashSet<(usize, usize)> = self.mp_edges.iter().copied().collect();
        let can_train = !self.train_nodes.is_empty() || !self.mp_edges.is_empty();
        if !can_train && steps > 0 {
            log::warn!("client {}: no labels and no edges, skipping local optimisation", self.id);
        }
        let mut mean_loss = LossBundle::default();
        let mut grad_norm = 0.0;
        let mut neg_edges = Vec::new();
        let mut done = 0usize;
        for step in 0..if can_train { steps } else { 0 } {
            if step % s.steps_per_epoch.max(1) == 0 {
                neg_edges = sample_non_edges(self.graph.n_nodes(), &known, self.mp_edges.len(), &mut rng);
            }
            let terms = sample_umap_terms(&ng, s.batch_pairs, s.n_neg, &mut rng);
            let marker_noise = Array2::from_shape_fn((s.marker_samples, n_markers), |_| rng.sample(StandardNormal));
            let batch = StepBatch {
                train_nodes: &self.train_nodes,
                pos_edges: &self.mp_edges,
                neg_edges: &neg_edges,
                umap_terms: &terms,
                marker_noise: &marker_noise,
                kl_noise: &kl_xi,
                prior,
                sigma_kern: s.sigma_kern,
                weights: s.weights,
            };
            let view = ClientView {
                graph: &self.train_graph,
                text: &self.text,
                adj: &self.adj,
            };
            let (loss, mut g) = loss_and_grad(&self.params, &view, &batch)?;
            grad_norm += clip_global(g.blocks_mut(), s.dp.clip);
            add_gaussian_noise(g.blocks_mut(), noise_std, &mut noise_rng);
            self.adam.step(self.params.blocks_mut(), g.blocks());
            self.params.posterior.project();
            self.params.check_finite("parameters after local step")?;
            accumulate(&mut mean_loss, &loss);
            done += 1;
        }
        if done > 0 {
            scale(&mut mean_loss, 1.0 / done as f64);
            grad_norm /= done as f64;
        }

        // payload: reference + clipped, noised marker change
        let after = self.expected_markers();
        let delta: Vec<f64> = after.iter().zip(&reference).map(|(a, r)| a - r).collect();
        let delta_norm = crate::privacy::l2_norm(&delta);
        let mut shared = clip(&delta, s.dp.clip);
        if noise_std > 0.0 {
            for d in shared.iter_mut() {
                *d += noise_std * noise_rng.sample::<f64, _>(StandardNormal);
            }
        }
        let payload: Vec<f64> = reference.iter().zip(&shared).map(|(r, d)| (r + d).max(0.0)).collect();

        let report = ClientRoundReport {
            round,
            client: self.id,
            steps: done,
            loss: mean_loss,
            umap_only_loss,
            grad_norm,
            payload_delta_norm: delta_norm,
            accepted_edges: self.accepted(ProposalKind::Edge),
            accepted_labels: self.accepted(ProposalKind::Label),
            payload_bytes: wire_bytes(payload.len()),
            elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        Ok((
            report,
            ClientUpdate {
                client: self.id,
                weight: self.weight,
                payload,
            },
        ))
    }
}

fn derive_kl_seed(seed: u64, round: u64, client: usize) -> u64 {
    crate::rng::derive_seed(seed, &[tag::LOCAL, round, client as u64, 0x6B])
}

fn accumulate(acc: &mut LossBundle, x: &LossBundle) {
    acc.nll += x.nll;
    acc.bce += x.bce;
    acc.kl += x.kl;
    acc.align += x.align;
    acc.umap += x.umap;
    acc.total += x.total;
}

fn scale(acc: &mut LossBundle, f: f64) {
    acc.nll *= f;
    acc.bce *= f;
    acc.kl *= f;
    acc.align *= f;
    acc.umap *= f;
    acc.total *= f;
}
