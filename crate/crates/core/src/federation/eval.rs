//! Per-client evaluation on held-out nodes and edges. Nodes and pairs that
//! the proposer targeted are excluded, whatever the configuration.

use std::collections::HashSet;

use rand::seq::SliceRandom;

use super::client::ClientState;
use super::FedSettings;
use crate::error::Result;
use crate::graph::Split;
use crate::llmguide::Target;
use crate::markers::{expected_marker_set, link_prob};
use crate::metrics::{accuracy, continuity, micro_f1, mrr_hits, rank_candidates, trustworthiness};
use crate::metrics::{cka, mean_cosine, procrustes};
use crate::model::{forward, node_nll, predict};
use crate::rng::{rng_for, tag};

#[derive(Debug, Clone, PartialEq)]
pub struct ClientEval {
    pub client: usize,
    pub n_test_nodes: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub micro_f1: f64,
    pub n_test_edges: usize,
    pub mrr: f64,
    pub hits: f64,
    pub trustworthiness: f64,
    pub continuity: f64,
    pub cka: f64,
    pub procrustes: f64,
    pub cosine: f64,
    /// Per-node NLL of class-matched train nodes (members) and test nodes (non-members).
    pub member_nll: Vec<f64>,
    pub nonmember_nll: Vec<f64>,
}

fn or_nan(r: Result<f64>) -> f64 {
    r.unwrap_or(f64::NAN)
}

/// Train nodes (members) and test nodes (non-members) with equal per-class
/// counts, so the attack cannot separate them by class composition alone.
pub fn membership_pairs(c: &ClientState, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let g = &c.graph;
    let mut rng = rng_for(seed, &[tag::EVAL, c.id as u64]);
    let (mut members, mut nonmembers) = (Vec::new(), Vec::new());
    for class in 0..g.n_classes() {
        let of = |split: Split| -> Vec<usize> {
            (0..g.n_nodes()).filter(|&i| g.node_split[i] == split && g.labels[i] == Some(class)).collect()
        };
        let (mut m, mut t) = (of(Split::Train), of(Split::Test));
        m.shuffle(&mut rng);
        t.shuffle(&mut rng);
        let k = m.len().min(t.len());
        members.extend_from_slice(&m[..k]);
        nonmembers.extend_from_slice(&t[..k]);
    }
    (members, nonmembers)
}

pub fn evaluate_client(c: &ClientState, s: &FedSettings, n_classes: usize) -> Result<ClientEval> {
    let g = &c.graph;
    let n = g.n_nodes();
    let fw = forward(&c.params, &c.view())?;
    let z = &fw.z;

    let targeted_nodes: HashSet<usize> = c
        .proposals
        .iter()
        .filter_map(|p| match p.target {
            Target::Node(i) => Some(i),
            Target::Pair(..) => None,
        })
        .collect();
    let targeted_pairs: HashSet<(usize, usize)> = c
        .proposals
        .iter()
        .filter_map(|p| match p.target {
            Target::Pair(u, v) => Some((u, v)),
            Target::Node(_) => None,
        })
        .collect();

    // node classification
    let test_nodes: Vec<usize> = (0..n)
        .filter(|&i| g.node_split[i] == Split::Test && g.labels[i].is_some() && !targeted_nodes.contains(&i))
        .collect();
    let preds = predict(&c.params.head, z);
    let p: Vec<usize> = test_nodes.iter().map(|&i| preds[i]).collect();
    let y: Vec<usize> = test_nodes.iter().map(|&i| g.labels[i].expect("labeled")).collect();
    let correct = p.iter().zip(&y).filter(|(a, b)| a == b).count();

    // link prediction: each test edge ranked against every non-neighbor of its source
    let markers = expected_marker_set(&c.params.posterior, s.sigma_kern)?;
    let edge_set = g.edge_set();
    let test_edges: Vec<(usize, usize)> = g
        .edges_in(Split::Test)
        .into_iter()
        .filter(|e| !targeted_pairs.contains(e))
        .collect();
    let dist = |i: usize, j: usize| -> f64 {
        z.row(i).iter().zip(z.row(j).iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    };
    let mut lists = Vec::with_capacity(test_edges.len());
    let mut truth = Vec::with_capacity(test_edges.len());
    for &(u, v) in &test_edges {
        let mut cands = vec![(v, link_prob(dist(u, v), &markers)?)];
        for w in 0..n {
            if w != u && w != v && !edge_set.contains(&(u.min(w), u.max(w))) {
                cands.push((w, link_prob(dist(u, w), &markers)?));
            }
        }
        lists.push(rank_candidates(&cands));
        truth.push(v);
    }
    let (mrr, hits) = if lists.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        mrr_hits(&lists, &truth, s.mrr_k)?
    };

    // manifold and alignment diagnostics
    let k = s.neighbors.min(n.saturating_sub(1) / 2);
    let (trust, cont) = if k > 0 {
        (or_nan(trustworthiness(&fw.fused, z, k)), or_nan(continuity(&fw.fused, z, k)))
    } else {
        (f64::NAN, f64::NAN)
    };
    let text_rows: Vec<usize> = (0..n).filter(|&i| c.text.present[i]).collect();
    let zt = z.select(ndarray::Axis(0), &text_rows);
    let ht = c.text.rows.select(ndarray::Axis(0), &text_rows);

    let nll = node_nll(&c.params.head, z, &g.labels);
    let (members, nonmembers) = membership_pairs(c, s.seed);
    let member_nll = members.iter().map(|&i| nll[i]).collect();
    let nonmember_nll = nonmembers.iter().map(|&i| nll[i]).collect();

    Ok(ClientEval {
        client: c.id,
        n_test_nodes: test_nodes.len(),
        correct,
        accuracy: if y.is_empty() { f64::NAN } else { accuracy(&p, &y)? },
        micro_f1: if y.is_empty() { f64::NAN } else { micro_f1(&p, &y, n_classes)? },
        n_test_edges: test_edges.len(),
        mrr,
        hits,
        trustworthiness: trust,
        continuity: cont,
        cka: or_nan(cka(&zt, &ht)),
        procrustes: or_nan(procrustes(&zt, &ht)),
        cosine: or_nan(mean_cosine(z, &c.text.rows, &c.text.present)),
        member_nll,
        nonmember_nll,
    })
}
