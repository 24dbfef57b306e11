use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{ClientGraph, Edge};
use crate::error::{Error, Result};
use crate::rng::{rng_for, tag};

/// Parameters of the stochastic-block-model generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub n_nodes: usize,
    pub n_classes: usize,
    pub intra_p: f64,
    pub inter_p: f64,
    pub feature_dim: usize,
    pub text_vocab: usize,
    pub seed: u64,
    /// Standard deviation of the per-node feature noise around the class mean.
    pub feature_noise: f64,
    /// Standard deviation of the class means.
    pub class_separation: f64,
    pub text_len: usize,
    /// Probability that a text token is drawn from the node's class topic.
    pub topic_prob: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_nodes: 200,
            n_classes: 4,
            intra_p: 0.1,
            inter_p: 0.01,
            feature_dim: 16,
            text_vocab: 200,
            seed: 0,
            feature_noise: 1.0,
            class_separation: 1.0,
            text_len: 12,
            topic_prob: 0.6,
        }
    }
}

/// Class of node `i` when `n` nodes are split into `k` contiguous, balanced blocks.
pub(crate) fn block_of(i: usize, n: usize, k: usize) -> usize {
    i * k / n
}

/// Stochastic block model with class-correlated Gaussian features and
/// class-templated texts. Bit-deterministic for a fixed seed.
pub fn synth_graph(p: &SynthParams) -> Result<ClientGraph> {
    if p.n_classes == 0 || p.n_classes > p.n_nodes {
        return Err(Error::invalid(format!(
            "n_classes={} must be in 1..={}",
            p.n_classes, p.n_nodes
        )));
    }
    if !(0.0..=1.0).contains(&p.intra_p) || !(0.0..=p.intra_p).contains(&p.inter_p) {
        return Err(Error::invalid("need 0 <= inter_p <= intra_p <= 1"));
    }
    if p.text_vocab < p.n_classes + 1 {
        return Err(Error::invalid("text_vocab must exceed n_classes"));
    }
    let n = p.n_nodes;
    let labels: Vec<usize> = (0..n).map(|i| block_of(i, n, p.n_classes)).collect();

    let mut rng = rng_for(p.seed, &[tag::SYNTH, 0]);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let prob = if labels[i] == labels[j] { p.intra_p } else { p.inter_p };
            // draw unconditionally so the stream does not depend on the probabilities
            let u: f64 = rng.random();
            if u < prob {
                edges.push(Edge::new(i, j));
            }
        }
    }

    let mut rng = rng_for(p.seed, &[tag::SYNTH, 1]);
    let means = Array2::from_shape_fn((p.n_classes, p.feature_dim), |_| {
        p.class_separation * rng.sample::<f64, _>(StandardNormal)
    });
    let features = Array2::from_shape_fn((n, p.feature_dim), |(i, j)| {
        means[[labels[i], j]] + p.feature_noise * rng.sample::<f64, _>(StandardNormal)
    });

    let mut rng = rng_for(p.seed, &[tag::SYNTH, 2]);
    let general = (p.text_vocab / 2).max(1);
    // small topics so same-class texts share vocabulary
    let topic_size = ((p.text_vocab - general) / p.n_classes).clamp(1, p.text_len.max(1));
    let texts = (0..n)
        .map(|i| {
            let words: Vec<String> = (0..p.text_len)
                .map(|_| {
                    let w = if rng.random::<f64>() < p.topic_prob {
                        general + labels[i] * topic_size + rng.random_range(0..topic_size)
                    } else {
                        rng.random_range(0..general)
                    };
                    format!("w{w}")
                })
                .collect();
            Some(words.join(" "))
        })
        .collect();

    ClientGraph::new(edges, features, texts, labels.into_iter().map(Some).collect())
}
