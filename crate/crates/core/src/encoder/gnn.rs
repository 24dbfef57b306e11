//! Two-layer GraphSAGE encoder with the mean aggregator.
//!
//! Each layer computes `act(h_i W_self + mean_{j in N(i)} h_j W_neigh + b)`;
//! an isolated node aggregates to zero.

use ndarray::{Array1, Array2, Axis};

use super::nn::{Activation, Dense};
use crate::error::{Error, Result};
use crate::graph::ClientGraph;
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq)]
pub struct SageLayer {
    pub w_self: Array2<f64>,
    pub w_neigh: Array2<f64>,
    pub bias: Array1<f64>,
}

impl SageLayer {
    fn glorot(input: usize, output: usize, rng: &mut SimRng) -> Self {
        let a = Dense::glorot(input, output, rng);
        let b = Dense::glorot(input, output, rng);
        Self {
            w_self: a.weight,
            w_neigh: b.weight,
            bias: Array1::zeros(output),
        }
    }

    fn zeros(input: usize, output: usize) -> Self {
        Self {
            w_self: Array2::zeros((input, output)),
            w_neigh: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_self.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w_self.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnParams {
    pub layers: Vec<SageLayer>,
    pub activation: Activation,
}

impl GnnParams {
    pub fn new(input: usize, hidden: usize, output: usize, rng: &mut SimRng) -> Self {
        Self {
            layers: vec![
                SageLayer::glorot(input, hidden, rng),
                SageLayer::glorot(hidden, output, rng),
            ],
            activation: Activation::Tanh,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| SageLayer::zeros(l.input_dim(), l.output_dim()))
                .collect(),
            activation: self.activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, SageLayer::input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, SageLayer::output_dim)
    }

    pub fn check(&self) -> Result<()> {
        for w in self.layers.windows(2) {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(Error::dim("gnn layer chain", w[0].output_dim(), w[1].input_dim()));
            }
        }
        Ok(())
    }
}

/// Undirected neighbor lists used by the mean aggregator.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanAdjacency {
    neighbors: Vec<Vec<usize>>,
}

impl MeanAdjacency {
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut neighbors = vec![Vec::new(); n];
        for (a, b) in edges {
            if a != b {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        for l in neighbors.iter_mut() {
            l.sort_unstable();
            l.dedup();
        }
        Self { neighbors }
    }

    pub fn n_nodes(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Row `i` of the result is the mean of `h` over the neighbors of `i`.
    pub fn aggregate(&self, h: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(h.raw_dim());
        for (i, nb) in self.neighbors.iter().enumerate() {
            if nb.is_empty() {
                continue;
            }
            let mut row = out.row_mut(i);
            for &j in nb {
                row += &h.row(j);
            }
            row /= nb.len() as f64;
        }
        out
    }

    /// Adjoint of [`aggregate`](Self::aggregate).
    pub fn aggregate_transpose(&self, d: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(d.raw_dim());
        for (i, nb) in self.neighbors.iter().enumerate() {
            if nb.is_empty() {
                continue;
            }
            let scaled = &d.row(i) / nb.len() as f64;
            for &j in nb {
                let mut row = out.row_mut(j);
                row += &scaled;
            }
        }
        out
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GnnTrace {
    inputs: Vec<Array2<f64>>,
    aggregated: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

pub fn gnn_forward(
    x: &Array2<f64>,
    adj: &MeanAdjacency,
    params: &GnnParams,
) -> Result<(Array2<f64>, GnnTrace)> {
    params.check()?;
    if x.ncols() != params.input_dim() {
        return Err(Error::dim("gnn input features", params.input_dim(), x.ncols()));
    }
    if x.nrows() != adj.n_nodes() {
        return Err(Error::dim("gnn adjacency", x.nrows(), adj.n_nodes()));
    }
    let mut trace = GnnTrace {
        inputs: Vec::new(),
        aggregated: Vec::new(),
        outputs: Vec::new(),
    };
    let mut h = x.clone();
    for layer in &params.layers {
        let agg = adj.aggregate(&h);
        let mut out = h.dot(&layer.w_self) + agg.dot(&layer.w_neigh) + &layer.bias;
        params.activation.apply(&mut out);
        trace.inputs.push(h);
        trace.aggregated.push(agg);
        trace.outputs.push(out.clone());
        h = out;
    }
    Ok((h, trace))
}

/// Returns parameter gradients and the gradient with respect to the input features.
pub fn gnn_backward(
    params: &GnnParams,
    adj: &MeanAdjacency,
    trace: &GnnTrace,
    d_out: &Array2<f64>,
) -> (GnnParams, Array2<f64>) {
    let mut grads = params.zeros_like();
    let mut d = d_out.clone();
    for (l, layer) in params.layers.iter().enumerate().rev() {
        params.activation.backprop(&trace.outputs[l], &mut d);
        let g = &mut grads.layers[l];
        g.w_self = trace.inputs[l].t().dot(&d);
        g.w_neigh = trace.aggregated[l].t().dot(&d);
        g.bias = d.sum_axis(Axis(0));
        let d_self = d.dot(&layer.w_self.t());
        let d_agg = d.dot(&layer.w_neigh.t());
        d = d_self + adj.aggregate_transpose(&d_agg);
    }
    (grads, d)
}

/// Feature matrix with absent rows replaced by `missing`, plus the absent mask.
pub fn input_features(graph: &ClientGraph, missing: &Array1<f64>) -> Result<(Array2<f64>, Vec<bool>)> {
    if missing.len() != graph.feature_dim() {
        return Err(Error::dim("missing-feature vector", graph.feature_dim(), missing.len()));
    }
    let mut x = graph.features.clone();
    let mut absent = vec![false; graph.n_nodes()];
    for i in 0..graph.n_nodes() {
        if !graph.has_features(i) {
            absent[i] = true;
            x.row_mut(i).assign(missing);
        }
    }
    Ok((x, absent))
}

/// Convenience wrapper: fills absent rows, builds the adjacency from the
/// graph's train edges and runs the encoder.
pub fn gnn_embed(graph: &ClientGraph, params: &GnnParams, missing: &Array1<f64>) -> Result<Array2<f64>> {
    let (x, _) = input_features(graph, missing)?;
    let adj = MeanAdjacency::from_edges(graph.n_nodes(), graph.edges_in(crate::graph::Split::Train));
    Ok(gnn_forward(&x, &adj, params)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn scalar_layer(ws: f64, wn: f64, b: f64) -> SageLayer {
        SageLayer {
            w_self: array![[ws]],
            w_neigh: array![[wn]],
            bias: array![b],
        }
    }

    #[test]
    fn zero_weights_give_zero_embeddings() {
        let mut rng = crate::rng::rng_for(0, &[]);
        let p = GnnParams::new(3, 4, 2, &mut rng).zeros_like();
        let adj = MeanAdjacency::from_edges(4, [(0, 1), (1, 2)]);
        let x = Array2::from_elem((4, 3), 1.5);
        let (h, _) = gnn_forward(&x, &adj, &p).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn isolated_node_uses_only_self_path() {
        let p = GnnParams {
            layers: vec![scalar_layer(2.0, 100.0, 1.0), scalar_layer(3.0, 100.0, 0.0)],
            activation: Activation::Identity,
        };
        let adj = MeanAdjacency::from_edges(1, []);
        let (h, _) = gnn_forward(&array![[0.5]], &adj, &p).unwrap();
        assert_eq!(h[[0, 0]], 3.0 * (2.0 * 0.5 + 1.0));
    }

    #[test]
    fn path_graph_matches_hand_computation() {
        // x = (1, 2, 3) on the path 0-1-2, w_self = 1, w_neigh = 0.5, no bias, linear
        let p = GnnParams {
            layers: vec![scalar_layer(1.0, 0.5, 0.0), scalar_layer(1.0, 0.5, 0.0)],
            activation: Activation::Identity,
        };
        let adj = MeanAdjacency::from_edges(3, [(0, 1), (1, 2)]);
        let (h, _) = gnn_forward(&array![[1.0], [2.0], [3.0]], &adj, &p).unwrap();
        // layer 1: 1 + 0.5*2 = 2;  2 + 0.5*(1+3)/2 = 3;  3 + 0.5*2 = 4
        // layer 2: 2 + 0.5*3 = 3.5;  3 + 0.5*(2+4)/2 = 4.5;  4 + 0.5*3 = 5.5
        assert_eq!(h, array![[3.5], [4.5], [5.5]]);
    }

    #[test]
    fn aggregate_transpose_is_adjoint() {
        let adj = MeanAdjacency::from_edges(4, [(0, 1), (1, 2), (1, 3)]);
        let x = array![[1.0, -2.0], [0.5, 3.0], [2.0, 1.0], [-1.0, 0.0]];
        let y = array![[0.3, 1.0], [-1.0, 2.0], [0.7, 0.1], [1.0, -1.0]];
        let lhs = (&adj.aggregate(&x) * &y).sum();
        let rhs = (&x * &adj.aggregate_transpose(&y)).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mut rng = crate::rng::rng_for(0, &[]);
        let p = GnnParams::new(3, 4, 2, &mut rng);
        let adj = MeanAdjacency::from_edges(2, []);
        assert!(gnn_forward(&Array2::zeros((2, 5)), &adj, &p).is_err());
    }
}
