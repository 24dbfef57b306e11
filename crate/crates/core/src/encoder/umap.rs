//! Parametric UMAP: the curve fit for `(a, b)`, the low-dimensional
//! similarity `q_ij`, the MLP encoder and the fuzzy cross-entropy loss.

use ndarray::Array2;
use rand::Rng;

use super::knn::NeighborGraph;
use super::nn::{Activation, Dense};
use crate::error::{Error, Result};
use crate::rng::{rng_for, SimRng};

/// Clamp applied to `q_ij` inside logarithms.
pub const Q_EPS: f64 = 1e-7;
const NEG_SAMPLE_TRIES: usize = 32;

fn curve(x: f64, a: f64, b: f64) -> f64 {
    1.0 / (1.0 + a * x.powf(2.0 * b))
}

/// Target membership curve: 1 below `min_dist`, exponential decay above.
pub fn target_curve(x: f64, min_dist: f64, spread: f64) -> f64 {
    if x < min_dist {
        1.0
    } else {
        (-(x - min_dist) / spread).exp()
    }
}

/// Fitting grid: 300 points on `[0, 3 * spread]`.
pub fn fit_grid(spread: f64) -> Vec<f64> {
    (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect()
}

/// Sum of squared residuals of `(a, b)` against the target curve on the fitting grid.
pub fn curve_residual(a: f64, b: f64, min_dist: f64, spread: f64) -> f64 {
    fit_grid(spread)
        .into_iter()
        .map(|x| (curve(x, a, b) - target_curve(x, min_dist, spread)).powi(2))
        .sum()
}

/// Least-squares fit of `(1 + a x^{2b})^{-1}` to the target curve
/// (Levenberg-Marquardt from `(1, 1)`).
pub fn fit_ab(min_dist: f64, spread: f64) -> Result<(f64, f64)> {
    if !(min_dist > 0.0 && spread > 0.0) {
        return Err(Error::invalid("fit_ab needs min_dist > 0 and spread > 0"));
    }
    let xs = fit_grid(spread);
    let ys: Vec<f64> = xs.iter().map(|&x| target_curve(x, min_dist, spread)).collect();
    let sse = |a: f64, b: f64| -> f64 {
        xs.iter().zip(&ys).map(|(&x, &y)| (curve(x, a, b) - y).powi(2)).sum()
    };
    let (mut a, mut b) = (1.0_f64, 1.0_f64);
    let mut damping = 1e-3;
    let mut cost = sse(a, b);
    for _ in 0..500 {
        // normal equations of the Gauss-Newton step
        let (mut jtj, mut jtr) = ([[0.0; 2]; 2], [0.0; 2]);
        for (&x, &y) in xs.iter().zip(&ys) {
            let f = curve(x, a, b);
            let u = if x > 0.0 { x.powf(2.0 * b) } else { 0.0 };
            let da = -u * f * f;
            let db = if x > 0.0 { -a * u * 2.0 * x.ln() * f * f } else { 0.0 };
            let r = f - y;
            jtj[0][0] += da * da;
            jtj[0][1] += da * db;
            jtj[1][1] += db * db;
            jtr[0] += da * r;
            jtr[1] += db * r;
        }
        jtj[1][0] = jtj[0][1];
        let mut improved = false;
        for _ in 0..50 {
            let m00 = jtj[0][0] * (1.0 + damping);
            let m11 = jtj[1][1] * (1.0 + damping);
            let det = m00 * m11 - jtj[0][1] * jtj[1][0];
            if det.abs() < 1e-300 {
                damping *= 10.0;
                continue;
            }
            let sa = -(m11 * jtr[0] - jtj[0][1] * jtr[1]) / det;
            let sb = -(m00 * jtr[1] - jtj[1][0] * jtr[0]) / det;
            let (na, nb) = (a + sa, b + sb);
            if na > 0.0 && nb > 0.0 {
                let c = sse(na, nb);
                if c < cost {
                    let done = (cost - c) <= 1e-15 * cost.max(1e-300) || (sa.abs() < 1e-13 && sb.abs() < 1e-13);
                    a = na;
                    b = nb;
                    cost = c;
                    damping = (damping / 10.0).max(1e-12);
                    improved = true;
                    if done {
                        return Ok((a, b));
                    }
                    break;
                }
            }
            damping *= 10.0;
        }
        if !improved {
            // no descent direction left: at a (local) minimum
            return Ok((a, b));
        }
    }
    Err(Error::NoConvergence(format!("fit_ab({min_dist}, {spread}) after 500 iterations")))
}

/// `(1 + a ||z_i - z_j||^{2b})^{-1}`.
pub fn q_ij(zi: &[f64], zj: &[f64], a: f64, b: f64) -> f64 {
    let d2: f64 = zi.iter().zip(zj).map(|(x, y)| (x - y) * (x - y)).sum();
    1.0 / (1.0 + a * d2.powf(b))
}

/// MLP `g_beta` from the fused space to the embedding space. Hidden layers use
/// the configured activation; the output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct UmapEncoderParams {
    pub layers: Vec<Dense>,
    pub hidden_activation: Activation,
    pub a: f64,
    pub b: f64,
}

impl UmapEncoderParams {
    pub fn new(input: usize, hidden: &[usize], output: usize, a: f64, b: f64, rng: &mut SimRng) -> Self {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(output);
        Self {
            layers: dims.windows(2).map(|w| Dense::glorot(w[0], w[1], rng)).collect(),
            hidden_activation: Activation::Tanh,
            a,
            b,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(Dense::zeros_like).collect(),
            hidden_activation: self.hidden_activation,
            a: self.a,
            b: self.b,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Dense::input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::output_dim)
    }
}

/// Layer inputs and outputs kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    inputs: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

pub fn umap_forward(x: &Array2<f64>, params: &UmapEncoderParams) -> Result<(Array2<f64>, MlpTrace)> {
    if x.ncols() != params.input_dim() {
        return Err(Error::dim("umap encoder input", params.input_dim(), x.ncols()));
    }
    for w in params.layers.windows(2) {
        if w[0].output_dim() != w[1].input_dim() {
            return Err(Error::dim("umap encoder layer chain", w[0].output_dim(), w[1].input_dim()));
        }
    }
    let mut trace = MlpTrace {
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    let last = params.layers.len().saturating_sub(1);
    let mut h = x.clone();
    for (l, layer) in params.layers.iter().enumerate() {
        let mut out = layer.forward(&h);
        if l < last {
            params.hidden_activation.apply(&mut out);
        }
        trace.inputs.push(h);
        trace.outputs.push(out.clone());
        h = out;
    }
    Ok((h, trace))
}

pub fn umap_backward(params: &UmapEncoderParams, trace: &MlpTrace, d_z: &Array2<f64>) -> (UmapEncoderParams, Array2<f64>) {
    let mut grads = params.zeros_like();
    let last = params.layers.len().saturating_sub(1);
    let mut d = d_z.clone();
    for (l, layer) in params.layers.iter().enumerate().rev() {
        if l < last {
            params.hidden_activation.backprop(&trace.outputs[l], &mut d);
        }
        let (g, dx) = layer.backward(&trace.inputs[l], &d);
        grads.layers[l] = g;
        d = dx;
    }
    (grads, d)
}

/// One term of the fuzzy cross-entropy: a positive pair carries its
/// membership `p`, a sampled negative carries `p = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UmapTerm {
    pub i: usize,
    pub j: usize,
    pub p: f64,
}

/// Draws up to `batch` positive pairs without replacement and `n_neg`
/// uniform non-neighbor negatives per positive (anchored at the positive's
/// first node).
pub fn sample_umap_terms(ng: &NeighborGraph, batch: usize, n_neg: usize, rng: &mut SimRng) -> Vec<UmapTerm> {
    let m = ng.pairs.len();
    let chosen: Vec<usize> = if batch >= m {
        (0..m).collect()
    } else {
        let mut idx = rand::seq::index::sample(rng, m, batch).into_vec();
        idx.sort_unstable();
        idx
    };
    sample_terms_for(ng, &chosen, n_neg, rng)
}

fn sample_terms_for(ng: &NeighborGraph, chosen: &[usize], n_neg: usize, rng: &mut SimRng) -> Vec<UmapTerm> {
    let n = ng.n_nodes();
    let mut terms = Vec::with_capacity(chosen.len() * (1 + n_neg));
    for &k in chosen {
        let (i, j, p) = ng.pairs[k];
        terms.push(UmapTerm { i, j, p });
        if ng.degree(i) + 1 >= n {
            continue; // no non-neighbor exists
        }
        for _ in 0..n_neg {
            for _ in 0..NEG_SAMPLE_TRIES {
                let c = rng.random_range(0..n);
                if c != i && !ng.is_neighbor(i, c) {
                    terms.push(UmapTerm { i, j: c, p: 0.0 });
                    break;
                }
            }
        }
    }
    terms
}

/// Sum over terms of `-[p log q + (1 - p) log(1 - q)]`, with `q` clamped to
/// `[Q_EPS, 1 - Q_EPS]`. Accumulates the gradient with respect to `z` when
/// `grad` is given (zero inside the clamp region).
pub fn umap_terms_loss(terms: &[UmapTerm], z: &Array2<f64>, a: f64, b: f64, mut grad: Option<&mut Array2<f64>>) -> f64 {
    let dim = z.ncols();
    let mut total = 0.0;
    let mut diff = vec![0.0; dim];
    for t in terms {
        let mut d2 = 0.0;
        for k in 0..dim {
            diff[k] = z[[t.i, k]] - z[[t.j, k]];
            d2 += diff[k] * diff[k];
        }
        let q_raw = 1.0 / (1.0 + a * d2.powf(b));
        let q = q_raw.clamp(Q_EPS, 1.0 - Q_EPS);
        total += -t.p * q.ln() - (1.0 - t.p) * (1.0 - q).ln();
        if let Some(g) = grad.as_deref_mut() {
            if q != q_raw || d2 <= 0.0 {
                continue;
            }
            let dl_dq = -t.p / q + (1.0 - t.p) / (1.0 - q);
            let dq_dd2 = -a * b * d2.powf(b - 1.0) * q * q;
            let coef = dl_dq * dq_dd2 * 2.0;
            for k in 0..dim {
                g[[t.i, k]] += coef * diff[k];
                g[[t.j, k]] -= coef * diff[k];
            }
        }
    }
    total
}

/// Fuzzy cross-entropy over every positive pair of `ng` plus `n_neg`
/// negatives per positive, drawn from `seed`.
pub fn umap_loss(ng: &NeighborGraph, z: &Array2<f64>, a: f64, b: f64, n_neg: usize, seed: u64) -> f64 {
    if ng.pairs.is_empty() {
        log::warn!("umap_loss called with an empty pair list; returning 0");
        return 0.0;
    }
    let mut rng = rng_for(seed, &[]);
    let terms = sample_umap_terms(ng, usize::MAX, n_neg, &mut rng);
    umap_terms_loss(&terms, z, a, b, None)
}
