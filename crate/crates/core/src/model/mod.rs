//! The full client model: GraphSAGE, fusion, parametric UMAP, classifier
//! head and marker posterior, with hand-derived reverse mode through all of it.

mod gradcheck;
mod optim;
mod tensors;

use ndarray::{Array, Array2, Dimension};

use crate::encoder::fusion::{concat_inputs, fuse_backward, FusionParams};
use crate::encoder::gnn::{gnn_backward, gnn_forward, input_features, GnnParams, GnnTrace, MeanAdjacency};
use crate::encoder::nn::Dense;
use crate::encoder::text::TextMatrix;
use crate::encoder::umap::{umap_backward, umap_forward, umap_terms_loss, MlpTrace, UmapEncoderParams, UmapTerm};
use crate::error::{Error, Result};
use crate::graph::ClientGraph;
use crate::markers::{
    client_objective_grad, kl_with_grad, markers_from_noise, LossBundle, LossWeights, MarkerPosterior, MarkerPrior,
    ObjectiveBatch,
};
use crate::rng::SimRng;

pub use gradcheck::{gradcheck, isolate_term, relative_error, BlockCheck, GradcheckInstance, GradcheckReport, FD_STEP, REL_FLOOR, REL_TOL, TERMS};
pub use optim::{add_gaussian_noise, clip_global, global_norm, Adam};
pub use tensors::{load_params, read_tensors, save_params, to_tensors, write_tensors, NamedTensor};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelDims {
    pub feature_dim: usize,
    pub gnn_hidden: usize,
    pub gnn_out: usize,
    pub text_dim: usize,
    pub fused_dim: usize,
    pub umap_hidden: Vec<usize>,
    pub umap_dim: usize,
    pub n_classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub gnn: GnnParams,
    pub fusion: FusionParams,
    pub umap: UmapEncoderParams,
    pub head: Dense,
    pub posterior: MarkerPosterior,
}

fn as_flat<D: Dimension>(a: &Array<f64, D>) -> &[f64] {
    a.as_slice().expect("parameter arrays are kept in standard layout")
}

fn as_flat_mut<D: Dimension>(a: &mut Array<f64, D>) -> &mut [f64] {
    if !a.is_standard_layout() {
        *a = a.as_standard_layout().into_owned();
    }
    a.as_slice_mut().expect("standard layout")
}

impl ModelParams {
    pub fn new(dims: &ModelDims, a: f64, b: f64, posterior: MarkerPosterior, rng: &mut SimRng) -> Self {
        Self {
            gnn: GnnParams::new(dims.feature_dim, dims.gnn_hidden, dims.gnn_out, rng),
            fusion: FusionParams::new(dims.gnn_out, dims.text_dim, dims.fused_dim, dims.feature_dim, rng),
            umap: UmapEncoderParams::new(dims.fused_dim, &dims.umap_hidden, dims.umap_dim, a, b, rng),
            head: Dense::glorot(dims.umap_dim, dims.n_classes, rng),
            posterior,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            gnn: self.gnn.zeros_like(),
            fusion: self.fusion.zeros_like(),
            umap: self.umap.zeros_like(),
            head: self.head.zeros_like(),
            posterior: MarkerPosterior {
                mean: vec![0.0; self.posterior.len()],
                log_var: vec![0.0; self.posterior.len()],
                polarity: self.posterior.polarity.clone(),
            },
        }
    }

    /// Names of the trainable blocks, in the order of [`blocks`](Self::blocks).
    pub fn block_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for l in 0..self.gnn.layers.len() {
            for part in ["w_self", "w_neigh", "bias"] {
                names.push(format!("gnn.{l}.{part}"));
            }
        }
        for part in ["projection", "missing_text", "missing_feature"] {
            names.push(format!("fusion.{part}"));
        }
        for l in 0..self.umap.layers.len() {
            names.push(format!("umap.{l}.weight"));
            names.push(format!("umap.{l}.bias"));
        }
        names.push("head.weight".into());
        names.push("head.bias".into());
        names.push("posterior.mean".into());
        names.push("posterior.log_var".into());
        names
    }

    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.gnn.layers {
            out.push(as_flat(&l.w_self));
            out.push(as_flat(&l.w_neigh));
            out.push(as_flat(&l.bias));
        }
        out.push(as_flat(&self.fusion.projection));
        out.push(as_flat(&self.fusion.missing_text));
        out.push(as_flat(&self.fusion.missing_feature));
        for l in &self.umap.layers {
            out.push(as_flat(&l.weight));
            out.push(as_flat(&l.bias));
        }
        out.push(as_flat(&self.head.weight));
        out.push(as_flat(&self.head.bias));
        out.push(&self.posterior.mean);
        out.push(&self.posterior.log_var);
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.gnn.layers {
            out.push(as_flat_mut(&mut l.w_self));
            out.push(as_flat_mut(&mut l.w_neigh));
            out.push(as_flat_mut(&mut l.bias));
        }
        out.push(as_flat_mut(&mut self.fusion.projection));
        out.push(as_flat_mut(&mut self.fusion.missing_text));
        out.push(as_flat_mut(&mut self.fusion.missing_feature));
        for l in &mut self.umap.layers {
            out.push(as_flat_mut(&mut l.weight));
            out.push(as_flat_mut(&mut l.bias));
        }
        out.push(as_flat_mut(&mut self.head.weight));
        out.push(as_flat_mut(&mut self.head.bias));
        out.push(&mut self.posterior.mean);
        out.push(&mut self.posterior.log_var);
        out
    }

    pub fn n_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    /// Errors naming the first block that holds a non-finite entry.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        for (name, block) in self.block_names().into_iter().zip(self.blocks()) {
            if block.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGradient(format!("{what} block `{name}`")));
            }
        }
        Ok(())
    }
}

/// Per-client inputs that stay fixed while the parameters change.
#[derive(Debug, Clone, Copy)]
pub struct ClientView<'a> {
    pub graph: &'a ClientGraph,
    pub text: &'a TextMatrix,
    /// Message-passing adjacency (train edges plus admitted pseudo-edges).
    pub adj: &'a MeanAdjacency,
}

/// Flat views of the UMAP encoder's weights, for its standalone update.
pub fn umap_blocks(u: &UmapEncoderParams) -> Vec<&[f64]> {
    u.layers.iter().flat_map(|l| [as_flat(&l.weight), as_flat(&l.bias)]).collect()
}

pub fn umap_blocks_mut(u: &mut UmapEncoderParams) -> Vec<&mut [f64]> {
    let mut out: Vec<&mut [f64]> = Vec::new();
    for l in &mut u.layers {
        out.push(as_flat_mut(&mut l.weight));
        out.push(as_flat_mut(&mut l.bias));
    }
    out
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    absent: Vec<bool>,
    gnn_trace: GnnTrace,
    concat: Array2<f64>,
    pub fused: Array2<f64>,
    umap_trace: MlpTrace,
    pub z: Array2<f64>,
}

pub fn forward(params: &ModelParams, view: &ClientView<'_>) -> Result<Forward> {
    let (x, absent) = input_features(view.graph, &params.fusion.missing_feature)?;
    let (h, gnn_trace) = gnn_forward(&x, view.adj, &params.gnn)?;
    let concat = concat_inputs(&h, view.text, &params.fusion)?;
    let fused = concat.dot(&params.fusion.projection);
    let (z, umap_trace) = umap_forward(&fused, &params.umap)?;
    Ok(Forward {
        absent,
        gnn_trace,
        concat,
        fused,
        umap_trace,
        z,
    })
}

/// Everything one optimisation step reads besides parameters and the client view.
#[derive(Debug, Clone, Copy)]
pub struct StepBatch<'a> {
    pub train_nodes: &'a [usize],
    pub pos_edges: &'a [(usize, usize)],
    pub neg_edges: &'a [(usize, usize)],
    pub umap_terms: &'a [UmapTerm],
    /// Reparameterisation noise for the link loss, one row per marker sample.
    pub marker_noise: &'a Array2<f64>,
    /// Noise for the KL estimate; ignored without a prior.
    pub kl_noise: &'a Array2<f64>,
    pub prior: Option<&'a MarkerPrior>,
    pub sigma_kern: f64,
    pub weights: LossWeights,
}

/// Objective value and its gradient with respect to every parameter block.
pub fn loss_and_grad(
    params: &ModelParams,
    view: &ClientView<'_>,
    batch: &StepBatch<'_>,
) -> Result<(LossBundle, ModelParams)> {
    let fw = forward(params, view)?;
    let n_markers = params.posterior.len();
    let uses_links = !batch.pos_edges.is_empty() || !batch.neg_edges.is_empty();
    let samples = if uses_links {
        if batch.marker_noise.ncols() != n_markers {
            return Err(Error::dim("marker noise columns", n_markers, batch.marker_noise.ncols()));
        }
        batch
            .marker_noise
            .rows()
            .into_iter()
            .map(|r| markers_from_noise(&params.posterior, &r.to_vec(), batch.sigma_kern))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let kl = match batch.prior {
        Some(prior) => Some(kl_with_grad(&params.posterior, prior, batch.kl_noise)?),
        None => None,
    };
    let ob = ObjectiveBatch {
        train_nodes: batch.train_nodes,
        labels: &view.graph.labels,
        pos_edges: batch.pos_edges,
        neg_edges: batch.neg_edges,
        text: view.text,
        umap_terms: batch.umap_terms,
        a: params.umap.a,
        b: params.umap.b,
    };
    let kl_value = kl.as_ref().map_or(0.0, |k| k.value);
    let (bundle, og) = client_objective_grad(&fw.z, &params.head, &samples, kl_value, &ob, &batch.weights)?;

    let mut grads = params.zeros_like();
    grads.head = og.d_head;

    // marker posterior: link loss through m = max(0, mu + sd xi), plus KL
    for (k, d_m) in og.d_markers.iter().enumerate() {
        for e in 0..n_markers {
            let sd = params.posterior.variance(e).sqrt();
            let xi = batch.marker_noise[[k, e]];
            if params.posterior.mean[e] + sd * xi > 0.0 {
                grads.posterior.mean[e] += d_m[e];
                grads.posterior.log_var[e] += d_m[e] * 0.5 * sd * xi;
            }
        }
    }
    if let Some(k) = &kl {
        for e in 0..n_markers {
            grads.posterior.mean[e] += batch.weights.lambda * k.d_mean[e];
            grads.posterior.log_var[e] += batch.weights.lambda * k.d_log_var[e];
        }
    }

    // encoder chain
    let (d_umap, d_fused) = umap_backward(&params.umap, &fw.umap_trace, &og.d_z);
    grads.umap.layers = d_umap.layers;
    let (d_proj, d_missing_text, d_gnn_out) = fuse_backward(&fw.concat, view.text, &params.fusion, &d_fused);
    grads.fusion.projection = d_proj;
    grads.fusion.missing_text = d_missing_text;
    let (d_gnn, d_x) = gnn_backward(&params.gnn, view.adj, &fw.gnn_trace, &d_gnn_out);
    grads.gnn.layers = d_gnn.layers;
    for (i, &absent) in fw.absent.iter().enumerate() {
        if absent {
            grads.fusion.missing_feature += &d_x.row(i);
        }
    }

    grads.check_finite("gradient")?;
    Ok((bundle, grads))
}

/// Objective value only (same computation as [`loss_and_grad`]).
pub fn loss_only(params: &ModelParams, view: &ClientView<'_>, batch: &StepBatch<'_>) -> Result<LossBundle> {
    Ok(loss_and_grad(params, view, batch)?.0)
}

/// Mean UMAP loss of the terms on `g_beta(fused)` and its gradient with respect
/// to the UMAP encoder only, the fused inputs held fixed.
pub fn umap_only_grad(
    umap: &UmapEncoderParams,
    fused: &Array2<f64>,
    terms: &[UmapTerm],
) -> Result<(f64, UmapEncoderParams)> {
    let (z, trace) = umap_forward(fused, umap)?;
    if terms.is_empty() {
        return Ok((0.0, umap.zeros_like()));
    }
    let inv = 1.0 / terms.len() as f64;
    let mut d_z = Array2::zeros(z.raw_dim());
    let loss = umap_terms_loss(terms, &z, umap.a, umap.b, Some(&mut d_z)) * inv;
    d_z *= inv;
    let (g, _) = umap_backward(umap, &trace, &d_z);
    Ok((loss, g))
}

/// Class probabilities of the head on `z`, one row per node.
pub fn predict_proba(head: &Dense, z: &Array2<f64>) -> Array2<f64> {
    let mut logits = head.forward(z);
    for mut row in logits.rows_mut() {
        let p = crate::stats::softmax(&row.to_vec());
        row.iter_mut().zip(p).for_each(|(x, v)| *x = v);
    }
    logits
}

pub fn predict(head: &Dense, z: &Array2<f64>) -> Vec<usize> {
    predict_proba(head, z)
        .rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, &p)| if p > best.1 { (c, p) } else { best })
                .0
        })
        .collect()
}

/// Per-node negative log-likelihood of the true label (`NaN` for unlabeled nodes).
pub fn node_nll(head: &Dense, z: &Array2<f64>, labels: &[Option<usize>]) -> Vec<f64> {
    let p = predict_proba(head, z);
    labels
        .iter()
        .enumerate()
        .map(|(i, y)| match y {
            Some(c) if *c < p.ncols() => -p[[i, *c]].max(f64::MIN_POSITIVE).ln(),
            _ => f64::NAN,
        })
        .collect()
}
