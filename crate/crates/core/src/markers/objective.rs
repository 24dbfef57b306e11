//! The per-client objective
//! `w_nll NLL + w_bce E_q[BCE] + lambda KL + gamma align + eta umap`.
//!
//! NLL and BCE are means over their items, alignment is a mean over nodes
//! with text, the UMAP term a mean over sampled terms; KL is summed over
//! markers.

use ndarray::Array2;

use super::{link_prob_grad, MarkerSet};
use crate::encoder::align::align_loss_scaled;
use crate::encoder::nn::Dense;
use crate::encoder::text::TextMatrix;
use crate::encoder::umap::{umap_terms_loss, UmapTerm};
use crate::error::{Error, Result};
use crate::stats::softmax;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub nll: f64,
    pub bce: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub eta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            nll: 1.0,
            bce: 1.0,
            lambda: 0.1,
            gamma: 0.2,
            eta: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBundle {
    pub nll: f64,
    pub bce: f64,
    pub kl: f64,
    pub align: f64,
    pub umap: f64,
    pub total: f64,
}

impl LossBundle {
    pub fn combine(nll: f64, bce: f64, kl: f64, align: f64, umap: f64, w: &LossWeights) -> Self {
        Self {
            nll,
            bce,
            kl,
            align,
            umap,
            total: w.nll * nll + w.bce * bce + w.lambda * kl + w.gamma * align + w.eta * umap,
        }
    }
}

/// Everything the objective reads besides `Z`, the head and the markers.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveBatch<'a> {
    pub train_nodes: &'a [usize],
    pub labels: &'a [Option<usize>],
    pub pos_edges: &'a [(usize, usize)],
    pub neg_edges: &'a [(usize, usize)],
    pub text: &'a TextMatrix,
    pub umap_terms: &'a [UmapTerm],
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveGrads {
    pub d_z: Array2<f64>,
    pub d_head: Dense,
    /// One row per marker sample: derivative with respect to the sampled locations.
    pub d_markers: Vec<Vec<f64>>,
}

pub fn client_objective(
    z: &Array2<f64>,
    head: &Dense,
    markers: &[MarkerSet],
    kl: f64,
    batch: &ObjectiveBatch<'_>,
    weights: &LossWeights,
) -> Result<LossBundle> {
    objective_impl(z, head, markers, kl, batch, weights, None)
}

pub fn client_objective_grad(
    z: &Array2<f64>,
    head: &Dense,
    markers: &[MarkerSet],
    kl: f64,
    batch: &ObjectiveBatch<'_>,
    weights: &LossWeights,
) -> Result<(LossBundle, ObjectiveGrads)> {
    let mut g = ObjectiveGrads {
        d_z: Array2::zeros(z.raw_dim()),
        d_head: head.zeros_like(),
        d_markers: markers.iter().map(|m| vec![0.0; m.len()]).collect(),
    };
    let bundle = objective_impl(z, head, markers, kl, batch, weights, Some(&mut g))?;
    Ok((bundle, g))
}

fn distance(z: &Array2<f64>, i: usize, j: usize) -> f64 {
    z.row(i).iter().zip(z.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn objective_impl(
    z: &Array2<f64>,
    head: &Dense,
    markers: &[MarkerSet],
    kl: f64,
    batch: &ObjectiveBatch<'_>,
    w: &LossWeights,
    mut grads: Option<&mut ObjectiveGrads>,
) -> Result<LossBundle> {
    let n = z.nrows();
    let n_edges = batch.pos_edges.len() + batch.neg_edges.len();
    if batch.train_nodes.is_empty() && batch.pos_edges.is_empty() {
        return Err(Error::Insufficient("objective needs train nodes or train edges".into()));
    }
    if batch.labels.len() != n {
        return Err(Error::dim("objective labels", n, batch.labels.len()));
    }
    if head.input_dim() != z.ncols() {
        return Err(Error::dim("classifier head input", z.ncols(), head.input_dim()));
    }
    if n_edges > 0 && markers.is_empty() {
        return Err(Error::invalid("link loss needs at least one marker sample"));
    }

    // classification
    let mut nll = 0.0;
    if !batch.train_nodes.is_empty() {
        let inv = 1.0 / batch.train_nodes.len() as f64;
        let n_classes = head.output_dim();
        let mut d_logits = Array2::<f64>::zeros((n, n_classes));
        let logits = head.forward(z);
        for &i in batch.train_nodes {
            let y = batch.labels.get(i).copied().flatten().ok_or_else(|| {
                Error::invalid(format!("train node {i} has no label"))
            })?;
            if y >= n_classes {
                return Err(Error::invalid(format!("label {y} out of range for {n_classes} classes")));
            }
            let p = softmax(logits.row(i).as_slice().unwrap_or(&logits.row(i).to_vec()));
            nll -= p[y].max(f64::MIN_POSITIVE).ln() * inv;
            for c in 0..n_classes {
                d_logits[[i, c]] += (p[c] - if c == y { 1.0 } else { 0.0 }) * inv * w.nll;
            }
        }
        if let Some(g) = grads.as_deref_mut() {
            let (dh, dz) = head.backward(z, &d_logits);
            g.d_head = dh;
            g.d_z += &dz;
        }
    }

    // link prediction, averaged over marker samples
    let mut bce = 0.0;
    if n_edges > 0 {
        let scale = 1.0 / (n_edges as f64 * markers.len() as f64);
        let labelled = batch.pos_edges.iter().map(|e| (e, 1.0)).chain(batch.neg_edges.iter().map(|e| (e, 0.0)));
        for (&(i, j), y) in labelled {
            if i >= n || j >= n {
                return Err(Error::invalid(format!("edge ({i}, {j}) out of range for {n} nodes")));
            }
            let s = distance(z, i, j);
            for (k, m) in markers.iter().enumerate() {
                let lg = link_prob_grad(s, m)?;
                let p = lg.prob;
                bce -= (y * p.ln() + (1.0 - y) * (1.0 - p).ln()) * scale;
                if let Some(g) = grads.as_deref_mut() {
                    let dl_dp = (p - y) / (p * (1.0 - p)) * scale * w.bce;
                    for (dm, v) in g.d_markers[k].iter_mut().zip(&lg.d_markers) {
                        *dm += dl_dp * v;
                    }
                    if s > 0.0 {
                        let c = dl_dp * lg.d_s / s;
                        for col in 0..z.ncols() {
                            let diff = z[[i, col]] - z[[j, col]];
                            g.d_z[[i, col]] += c * diff;
                            g.d_z[[j, col]] -= c * diff;
                        }
                    }
                }
            }
        }
    }

    // cross-modal alignment
    let n_text = batch.text.present.iter().filter(|&&p| p).count();
    let align = if n_text > 0 {
        let inv = 1.0 / n_text as f64;
        align_loss_scaled(z, batch.text, inv * w.gamma, grads.as_deref_mut().map(|g| &mut g.d_z))? * inv
    } else {
        0.0
    };

    // manifold term
    let umap = if batch.umap_terms.is_empty() {
        0.0
    } else {
        let inv = 1.0 / batch.umap_terms.len() as f64;
        match grads.as_deref_mut() {
            Some(g) => {
                let mut d = Array2::zeros(z.raw_dim());
                let l = umap_terms_loss(batch.umap_terms, z, batch.a, batch.b, Some(&mut d));
                g.d_z.scaled_add(inv * w.eta, &d);
                l * inv
            }
            None => umap_terms_loss(batch.umap_terms, z, batch.a, batch.b, None) * inv,
        }
    };

    Ok(LossBundle::combine(nll, bce, kl, align, umap, w))
}
