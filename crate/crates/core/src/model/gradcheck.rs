//! Central finite-difference check of [`loss_and_grad`](super::loss_and_grad).

use super::{loss_and_grad, loss_only, ClientView, ModelParams, StepBatch};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-4;
/// Denominator floor of the relative error, for entries whose gradient is ~0.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub blocks: Vec<BlockCheck>,
    pub max_rel_err: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares every analytic gradient entry against
/// `(L(p + h) - L(p - h)) / 2h` with `h = FD_STEP`.
pub fn gradcheck(params: &ModelParams, view: &ClientView<'_>, batch: &StepBatch<'_>) -> Result<GradcheckReport> {
    let (_, grads) = loss_and_grad(params, view, batch)?;
    let analytic: Vec<Vec<f64>> = grads.blocks().iter().map(|b| b.to_vec()).collect();
    let names = params.block_names();
    let mut work = params.clone();
    let mut blocks = Vec::with_capacity(names.len());
    for (bi, name) in names.into_iter().enumerate() {
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for i in 0..analytic[bi].len() {
            let orig = work.blocks()[bi][i];
            work.blocks_mut()[bi][i] = orig + FD_STEP;
            let up = loss_only(&work, view, batch)?.total;
            work.blocks_mut()[bi][i] = orig - FD_STEP;
            let dn = loss_only(&work, view, batch)?.total;
            work.blocks_mut()[bi][i] = orig;
            let numeric = (up - dn) / (2.0 * FD_STEP);
            let a = analytic[bi][i];
            max_rel = max_rel.max(relative_error(a, numeric));
            max_abs = max_abs.max((a - numeric).abs());
        }
        blocks.push(BlockCheck {
            name,
            entries: analytic[bi].len(),
            max_rel_err: max_rel,
            max_abs_err: max_abs,
        });
    }
    let max_rel_err = blocks.iter().map(|b| b.max_rel_err).fold(0.0, f64::max);
    Ok(GradcheckReport {
        blocks,
        max_rel_err,
        passed: max_rel_err <= REL_TOL,
    })
}

/// A small random problem that exercises every path of the model: a
/// cold-start node (learned missing-feature vector), a node without text
/// (learned missing-text vector), labels, positive and negative pairs, UMAP
/// terms, marker sampling and the mixture-prior KL.
#[derive(Debug, Clone)]
pub struct GradcheckInstance {
    pub params: ModelParams,
    pub graph: crate::graph::ClientGraph,
    pub text: crate::encoder::text::TextMatrix,
    pub adj: crate::encoder::gnn::MeanAdjacency,
    pub train_nodes: Vec<usize>,
    pub pos_edges: Vec<(usize, usize)>,
    pub neg_edges: Vec<(usize, usize)>,
    pub umap_terms: Vec<crate::encoder::umap::UmapTerm>,
    pub marker_noise: ndarray::Array2<f64>,
    pub kl_noise: ndarray::Array2<f64>,
    pub prior: crate::markers::MarkerPrior,
    pub sigma_kern: f64,
}

impl GradcheckInstance {
    pub fn random(seed: u64) -> Result<Self> {
        use crate::encoder::gnn::MeanAdjacency;
        use crate::encoder::text::TextMatrix;
        use crate::encoder::umap::UmapTerm;
        use crate::graph::{ClientGraph, Edge};
        use crate::markers::{init_markers, MarkerCounts, MarkerPrior};
        use crate::rng::rng_for;
        use ndarray::Array2;
        use rand::Rng;
        use rand_distr::StandardNormal;

        let mut rng = rng_for(seed, &[crate::rng::tag::EVAL, 0x9c]);
        let n = 6;
        let mut features = Array2::from_shape_simple_fn((n, 3), || rng.sample::<f64, _>(StandardNormal));
        features.row_mut(5).fill(f64::NAN);
        let texts: Vec<Option<String>> = (0..n)
            .map(|i| if i == 2 { None } else { Some(format!("w{} w{} w{}", i % 3, 7 + i, 11)) })
            .collect();
        let labels = vec![Some(0), Some(1), Some(2), Some(0), None, Some(1)];
        let edges = vec![Edge::new(0, 1), Edge::new(1, 2), Edge::new(2, 3), Edge::new(3, 4), Edge::new(1, 5)];
        let mut graph = ClientGraph::new(edges, features, texts, labels)?;
        graph.cold_start[5] = true;
        graph.validate()?;

        let mut text = TextMatrix::from_graph(&graph, &crate::encoder::text::MockTextEncoder::new(2, seed));
        for i in 0..n {
            if text.present[i] {
                // mock vectors are unit norm; vary the norms a little
                let s = 0.5 + rng.random::<f64>();
                text.rows.row_mut(i).mapv_inplace(|x| x * s);
            }
        }
        let adj = MeanAdjacency::from_edges(n, graph.edges.iter().map(|e| e.key()));

        let (_, mut posterior) = init_markers(&[0.4, 0.8, 1.1], &[1.6, 2.4, 3.0], MarkerCounts { positive: 2, negative: 2 }, 1.0)?;
        for e in 0..posterior.len() {
            posterior.mean[e] += 0.5 + 0.2 * e as f64;
            posterior.log_var[e] = -2.0 + 0.3 * e as f64;
        }
        let dims = super::ModelDims {
            feature_dim: 3,
            gnn_hidden: 4,
            gnn_out: 3,
            text_dim: 2,
            fused_dim: 4,
            umap_hidden: vec![5, 5],
            umap_dim: 2,
            n_classes: 3,
        };
        let mut params = ModelParams::new(&dims, 1.577, 0.895, posterior, &mut rng);
        for b in params.blocks_mut() {
            for x in b.iter_mut() {
                // move biases and learned vectors off zero
                *x += 0.1 * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let prior = MarkerPrior::fit(&[0.9, 1.4, 2.0, 3.1], &params.posterior.polarity)?;
        // keep every sampled marker strictly positive so max(0, .) stays smooth
        let marker_noise = Array2::from_shape_simple_fn((2, 4), || 0.5 * rng.sample::<f64, _>(StandardNormal));
        let kl_noise = Array2::from_shape_simple_fn((8, 4), || rng.sample::<f64, _>(StandardNormal));
        Ok(Self {
            params,
            graph,
            text,
            adj,
            train_nodes: vec![0, 1, 2, 5],
            pos_edges: vec![(0, 1), (2, 3)],
            neg_edges: vec![(0, 4), (3, 5)],
            umap_terms: vec![
                UmapTerm { i: 0, j: 1, p: 0.8 },
                UmapTerm { i: 1, j: 5, p: 1.0 },
                UmapTerm { i: 3, j: 4, p: 0.4 },
                UmapTerm { i: 0, j: 3, p: 0.0 },
                UmapTerm { i: 2, j: 5, p: 0.0 },
            ],
            marker_noise,
            kl_noise,
            prior,
            sigma_kern: 1.0,
        })
    }

    pub fn view(&self) -> ClientView<'_> {
        ClientView {
            graph: &self.graph,
            text: &self.text,
            adj: &self.adj,
        }
    }

    pub fn batch(&self, weights: crate::markers::LossWeights) -> StepBatch<'_> {
        StepBatch {
            train_nodes: &self.train_nodes,
            pos_edges: &self.pos_edges,
            neg_edges: &self.neg_edges,
            umap_terms: &self.umap_terms,
            marker_noise: &self.marker_noise,
            kl_noise: &self.kl_noise,
            prior: Some(&self.prior),
            sigma_kern: self.sigma_kern,
            weights,
        }
    }

    pub fn check(&self, weights: crate::markers::LossWeights) -> Result<GradcheckReport> {
        gradcheck(&self.params, &self.view(), &self.batch(weights))
    }
}

/// Loss weights isolating one term: `nll`, `bce`, `kl`, `align`, `umap`, or
/// `total` for the default weighting.
pub fn isolate_term(term: &str) -> Option<crate::markers::LossWeights> {
    use crate::markers::LossWeights;
    let zero = LossWeights {
        nll: 0.0,
        bce: 0.0,
        lambda: 0.0,
        gamma: 0.0,
        eta: 0.0,
    };
    Some(match term {
        "nll" => LossWeights { nll: 1.0, ..zero },
        "bce" => LossWeights { bce: 1.0, ..zero },
        "kl" => LossWeights { lambda: 1.0, ..zero },
        "align" => LossWeights { gamma: 1.0, ..zero },
        "umap" => LossWeights { eta: 1.0, ..zero },
        "total" => LossWeights::default(),
        _ => return None,
    })
}

pub const TERMS: [&str; 6] = ["nll", "bce", "kl", "align", "umap", "total"];
