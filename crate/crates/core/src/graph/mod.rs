//! Client graphs: ingestion, synthetic generation, non-IID partitioning and
//! few-shot / cold-start split construction.

mod io;
mod split;
mod synth;

pub use io::{load_graph, load_graph_dir, write_graph_dir, GraphFiles};
pub use split::{
    apply_coldstart, make_edge_split, make_fewshot_split, partition_noniid, SplitConfig,
    VAL_FRACTION,
};
pub use synth::{synth_graph, SynthParams};

use std::collections::HashSet;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Membership of a node or edge in the train / validation / test partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Split {
    #[default]
    Unassigned,
    Train,
    Val,
    Test,
}

/// An undirected edge stored with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub relation: Option<u32>,
}

impl Edge {
    pub fn new(a: usize, b: usize) -> Self {
        Self::with_relation(a, b, None)
    }

    pub fn with_relation(a: usize, b: usize, relation: Option<u32>) -> Self {
        let (u, v) = if a <= b { (a, b) } else { (b, a) };
        Self { u, v, relation }
    }

    pub fn key(&self) -> (usize, usize) {
        (self.u, self.v)
    }
}

/// One client's private graph.
///
/// Absent feature rows are all-`NaN`. `origin` maps local node indices back to
/// the indices of the graph this one was cut from (identity for loaded graphs).
#[derive(Debug, Clone, PartialEq)]
pub struct ClientGraph {
    pub origin: Vec<usize>,
    pub edges: Vec<Edge>,
    pub features: Array2<f64>,
    pub texts: Vec<Option<String>>,
    pub labels: Vec<Option<usize>>,
    pub node_split: Vec<Split>,
    pub edge_split: Vec<Split>,
    pub cold_start: Vec<bool>,
}

impl ClientGraph {
    /// Builds a graph with default masks (labeled nodes and all edges in train)
    /// and checks every invariant.
    pub fn new(
        edges: Vec<Edge>,
        features: Array2<f64>,
        texts: Vec<Option<String>>,
        labels: Vec<Option<usize>>,
    ) -> Result<Self> {
        let n = features.nrows();
        let node_split = labels
            .iter()
            .map(|l| if l.is_some() { Split::Train } else { Split::Unassigned })
            .collect();
        let g = Self {
            origin: (0..n).collect(),
            edge_split: vec![Split::Train; edges.len()],
            edges,
            features,
            texts,
            labels,
            node_split,
            cold_start: vec![false; n],
        };
        g.validate()?;
        Ok(g)
    }

    pub fn n_nodes(&self) -> usize {
        self.features.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.iter().flatten().map(|&c| c + 1).max().unwrap_or(0)
    }

    /// True when the node's feature row is present (not all-`NaN`).
    pub fn has_features(&self, i: usize) -> bool {
        !self.features.row(i).iter().all(|x| x.is_nan())
    }

    pub fn nodes_in(&self, split: Split) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&i| self.node_split[i] == split)
            .collect()
    }

    pub fn edges_in(&self, split: Split) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .zip(&self.edge_split)
            .filter(|(_, s)| **s == split)
            .map(|(e, _)| e.key())
            .collect()
    }

    pub fn edge_set(&self) -> HashSet<(usize, usize)> {
        self.edges.iter().map(Edge::key).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        let bad = |m: String| Err(Error::InvalidGraph(m));
        if self.texts.len() != n
            || self.labels.len() != n
            || self.node_split.len() != n
            || self.cold_start.len() != n
            || self.origin.len() != n
        {
            return bad(format!("per-node columns must all have {n} rows"));
        }
        if self.edge_split.len() != self.edges.len() {
            return bad("edge split length differs from edge count".into());
        }
        let mut seen = HashSet::with_capacity(self.edges.len());
        for e in &self.edges {
            if e.u >= n || e.v >= n {
                return bad(format!(
                    "edge ({}, {}) references a node outside [0, {n})",
                    e.u, e.v
                ));
            }
            if e.u == e.v {
                return bad(format!("self-loop at node {}", e.u));
            }
            if e.u > e.v {
                return bad(format!("edge ({}, {}) is not normalized", e.u, e.v));
            }
            if !seen.insert(e.key()) {
                return bad(format!("duplicate edge ({}, {})", e.u, e.v));
            }
        }
        for i in 0..n {
            if self.labels[i].is_some() && self.node_split[i] == Split::Unassigned {
                return bad(format!("labeled node {i} is not in any split"));
            }
            if self.cold_start[i] {
                if self.has_features(i) {
                    return bad(format!("cold-start node {i} still has a feature row"));
                }
                if self.texts[i].is_none() {
                    return bad(format!("cold-start node {i} has no text"));
                }
            }
        }
        Ok(())
    }

    /// Induced subgraph on `nodes` (kept in the given order). Edges leaving the
    /// node set are dropped.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> ClientGraph {
        let mut local = vec![usize::MAX; self.n_nodes()];
        for (k, &i) in nodes.iter().enumerate() {
            local[i] = k;
        }
        let mut edges = Vec::new();
        let mut edge_split = Vec::new();
        for (e, s) in self.edges.iter().zip(&self.edge_split) {
            let (a, b) = (local[e.u], local[e.v]);
            if a != usize::MAX && b != usize::MAX {
                edges.push(Edge::with_relation(a, b, e.relation));
                edge_split.push(*s);
            }
        }
        let mut features = Array2::zeros((nodes.len(), self.feature_dim()));
        for (k, &i) in nodes.iter().enumerate() {
            features.row_mut(k).assign(&self.features.row(i));
        }
        let pick = |k: usize| nodes[k];
        ClientGraph {
            origin: nodes.iter().map(|&i| self.origin[i]).collect(),
            edges,
            features,
            texts: (0..nodes.len()).map(|k| self.texts[pick(k)].clone()).collect(),
            labels: (0..nodes.len()).map(|k| self.labels[pick(k)]).collect(),
            node_split: (0..nodes.len()).map(|k| self.node_split[pick(k)]).collect(),
            edge_split,
            cold_start: (0..nodes.len()).map(|k| self.cold_start[pick(k)]).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn path3() -> ClientGraph {
        ClientGraph::new(
            vec![Edge::new(0, 1), Edge::new(2, 1)],
            array![[1.0], [2.0], [3.0]],
            vec![None; 3],
            vec![Some(0), Some(1), None],
        )
        .unwrap()
    }

    #[test]
    fn edges_are_normalized() {
        let g = path3();
        assert_eq!(g.edges[1].key(), (1, 2));
        assert_eq!(g.nodes_in(Split::Train), vec![0, 1]);
    }

    #[test]
    fn rejects_self_loops_and_duplicates() {
        let f = array![[1.0], [2.0]];
        let loops = ClientGraph::new(vec![Edge::new(1, 1)], f.clone(), vec![None; 2], vec![None; 2]);
        assert!(matches!(loops, Err(Error::InvalidGraph(_))));
        let dup = ClientGraph::new(
            vec![Edge::new(0, 1), Edge::new(1, 0)],
            f,
            vec![None; 2],
            vec![None; 2],
        );
        assert!(matches!(dup, Err(Error::InvalidGraph(_))));
    }

    #[test]
    fn induced_subgraph_drops_crossing_edges() {
        let g = path3();
        let sub = g.induced_subgraph(&[1, 2]);
        assert_eq!(sub.n_nodes(), 2);
        assert_eq!(sub.edges, vec![Edge::new(0, 1)]);
        assert_eq!(sub.origin, vec![1, 2]);
        assert_eq!(sub.labels, vec![Some(1), None]);
    }

    #[test]
    fn cold_start_requires_text_and_absent_row() {
        let mut g = path3();
        g.cold_start[0] = true;
        assert!(g.validate().is_err());
        g.features.row_mut(0).fill(f64::NAN);
        assert!(g.validate().is_err());
        g.texts[0] = Some("hello".into());
        g.validate().unwrap();
    }
}
