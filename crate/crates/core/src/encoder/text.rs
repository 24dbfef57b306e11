//! Frozen text encoder seam and its deterministic mock.

use ndarray::Array2;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::graph::ClientGraph;
use crate::rng::{derive_seed, fnv1a, SimRng};

/// A frozen text encoder: same text, same vector.
pub trait TextEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Bag-of-tokens hashing encoder. Every token seeds its own Gaussian vector
/// (keyed by the token hash, the seed and the prompt tag); the text vector is
/// the normalized sum, so texts sharing vocabulary point in similar directions.
#[derive(Debug, Clone)]
pub struct MockTextEncoder {
    pub dim: usize,
    pub seed: u64,
    pub prompt: String,
}

impl MockTextEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            seed,
            prompt: "node".to_string(),
        }
    }

    fn token_vector(&self, token: &str, out: &mut [f64]) {
        let key = derive_seed(self.seed, &[fnv1a(self.prompt.as_bytes()), fnv1a(token.as_bytes())]);
        let mut rng = SimRng::seed_from_u64(key);
        for o in out.iter_mut() {
            *o += Distribution::<f64>::sample(&StandardNormal, &mut rng);
        }
    }
}

impl TextEncoder for MockTextEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let mut any = false;
        for tok in text.split_whitespace() {
            self.token_vector(tok, &mut v);
            any = true;
        }
        if !any {
            self.token_vector(text, &mut v);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

pub fn text_embed_mock(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    MockTextEncoder::new(dim, seed).embed(text)
}

/// Per-node text embeddings; rows of nodes without text are zero and flagged absent.
#[derive(Debug, Clone, PartialEq)]
pub struct TextMatrix {
    pub rows: Array2<f64>,
    pub present: Vec<bool>,
}

impl TextMatrix {
    pub fn from_graph(graph: &ClientGraph, encoder: &dyn TextEncoder) -> Self {
        let n = graph.n_nodes();
        let mut rows = Array2::zeros((n, encoder.dim()));
        let mut present = vec![false; n];
        for (i, t) in graph.texts.iter().enumerate() {
            if let Some(t) = t {
                for (j, x) in encoder.embed(t).into_iter().enumerate() {
                    rows[[i, j]] = x;
                }
                present[i] = true;
            }
        }
        Self { rows, present }
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }
}
