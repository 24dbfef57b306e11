//! Exact kNN graph with smooth-kNN memberships, fuzzy union symmetrization and
//! graph-aware edge forcing.

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Floor applied to the per-node smoothing scale.
pub const SIGMA_FLOOR: f64 = 1e-3;
const SIGMA_SEARCH_ITERS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnEntry {
    pub index: usize,
    pub distance: f64,
    /// Directed membership `exp(-max(0, d - rho_i) / sigma_i)`.
    pub membership: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    pub knn: Vec<Vec<KnnEntry>>,
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Symmetrized pairs `(i, j, p_ij)` with `i < j`, sorted.
    pub pairs: Vec<(usize, usize, f64)>,
    adjacency: Vec<Vec<usize>>,
}

impl NeighborGraph {
    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_neighbor(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].binary_search(&j).is_ok()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let key = (i.min(j), i.max(j));
        self.pairs
            .binary_search_by(|p| (p.0, p.1).cmp(&key))
            .ok()
            .map(|k| self.pairs[k].2)
    }
}

/// Probabilistic t-conorm `a + b - ab`.
pub fn fuzzy_union(a: f64, b: f64) -> f64 {
    a + b - a * b
}

/// Exact neighbor lists sorted by (distance, index), self excluded.
pub fn exact_knn(x: &Array2<f64>, k: usize) -> Vec<Vec<(usize, f64)>> {
    let n = x.nrows();
    (0..n)
        .map(|i| {
            let mut d: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let s: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                    (j, s.sqrt())
                })
                .collect();
            d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            d.truncate(k);
            d
        })
        .collect()
}

/// Binary search for `sigma` so that `sum_j exp(-max(0, d_j - rho) / sigma) = log2(k)`.
pub fn smooth_sigma(dists: &[f64], rho: f64, k: usize) -> f64 {
    let target = (k as f64).log2();
    let (mut lo, mut hi, mut mid) = (0.0_f64, f64::INFINITY, 1.0_f64);
    for _ in 0..SIGMA_SEARCH_ITERS {
        let psum: f64 = dists.iter().map(|&d| (-(d - rho).max(0.0) / mid).exp()).sum();
        if (psum - target).abs() < 1e-9 {
            break;
        }
        if psum > target {
            hi = mid;
            mid = (lo + hi) / 2.0;
        } else {
            lo = mid;
            mid = if hi.is_infinite() { mid * 2.0 } else { (lo + hi) / 2.0 };
        }
    }
    mid.max(SIGMA_FLOOR)
}

/// Builds the fuzzy neighbor graph over the rows of `x`; every pair in
/// `edges` is forced to membership 1.
pub fn build_knn(x: &Array2<f64>, k: usize, edges: &[(usize, usize)]) -> Result<NeighborGraph> {
    let n = x.nrows();
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("kNN needs 0 < k < n (k={k}, n={n})")));
    }
    let lists = exact_knn(x, k);
    let mut knn = Vec::with_capacity(n);
    let mut rho = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut directed: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for (i, list) in lists.iter().enumerate() {
        let dists: Vec<f64> = list.iter().map(|e| e.1).collect();
        let r = dists[0];
        let s = smooth_sigma(&dists, r, k);
        let entries: Vec<KnnEntry> = list
            .iter()
            .map(|&(j, d)| KnnEntry {
                index: j,
                distance: d,
                membership: (-(d - r).max(0.0) / s).exp(),
            })
            .collect();
        for e in &entries {
            let slot = directed.entry((i.min(e.index), i.max(e.index))).or_insert((0.0, 0.0));
            if i < e.index {
                slot.0 = e.membership;
            } else {
                slot.1 = e.membership;
            }
        }
        knn.push(entries);
        rho.push(r);
        sigma.push(s);
    }
    let mut merged: BTreeMap<(usize, usize), f64> =
        directed.into_iter().map(|(key, (a, b))| (key, fuzzy_union(a, b))).collect();
    for &(a, b) in edges {
        if a == b || a >= n || b >= n {
            return Err(Error::InvalidGraph(format!("edge ({a}, {b}) is not a valid pair")));
        }
        merged.insert((a.min(b), a.max(b)), 1.0);
    }
    let mut adjacency = vec![Vec::new(); n];
    let pairs: Vec<(usize, usize, f64)> = merged
        .into_iter()
        .map(|((i, j), p)| {
            adjacency[i].push(j);
            adjacency[j].push(i);
            (i, j, p)
        })
        .collect();
    for a in adjacency.iter_mut() {
        a.sort_unstable();
    }
    Ok(NeighborGraph {
        knn,
        rho,
        sigma,
        pairs,
        adjacency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn t_conorm_arithmetic() {
        assert_eq!(fuzzy_union(0.5, 0.5), 0.75);
        assert_eq!(fuzzy_union(1.0, 0.2), 1.0);
    }

    #[test]
    fn line_points_match_brute_force_neighbors() {
        let x = array![[0.0], [1.0], [3.0], [6.0], [10.0]];
        let g = build_knn(&x, 2, &[]).unwrap();
        // brute force: sort |x_i - x_j| with ties by index
        for i in 0..5 {
            let mut all: Vec<(usize, f64)> =
                (0..5).filter(|&j| j != i).map(|j| (j, (x[[i, 0]] - x[[j, 0]]).abs())).collect();
            all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            let got: Vec<usize> = g.knn[i].iter().map(|e| e.index).collect();
            let want: Vec<usize> = all[..2].iter().map(|e| e.0).collect();
            assert_eq!(got, want, "node {i}");
            assert_eq!(g.rho[i], all[0].1);
        }
    }

    #[test]
    fn memberships_sum_to_log2_k() {
        let x = array![[0.0, 0.0], [1.0, 0.2], [0.3, 2.0], [4.0, 1.0], [2.0, 2.0], [5.0, 5.0]];
        let k = 4;
        let g = build_knn(&x, k, &[]).unwrap();
        for list in &g.knn {
            let s: f64 = list.iter().map(|e| e.membership).sum();
            assert!((s - (k as f64).log2()).abs() < 1e-6, "{s}");
        }
    }

    #[test]
    fn observed_edges_are_forced_to_one() {
        let x = array![[0.0], [1.0], [2.0], [50.0]];
        let g = build_knn(&x, 1, &[(0, 3)]).unwrap();
        assert_eq!(g.weight(0, 3), Some(1.0));
        assert_eq!(g.weight(3, 0), Some(1.0));
        assert!(g.is_neighbor(3, 0));
    }

    #[test]
    fn symmetrized_weight_dominates_directed() {
        let x = array![[0.0, 1.0], [0.5, 0.1], [2.0, 0.3], [1.2, 1.1], [3.0, 3.0], [0.1, 0.4]];
        let g = build_knn(&x, 3, &[]).unwrap();
        for (i, list) in g.knn.iter().enumerate() {
            for e in list {
                let p = g.weight(i, e.index).unwrap();
                assert!(p >= e.membership - 1e-15 && p <= 1.0);
            }
        }
    }

    #[test]
    fn duplicate_points_hit_the_sigma_floor() {
        let x = Array2::zeros((5, 2));
        let g = build_knn(&x, 3, &[]).unwrap();
        assert!(g.sigma.iter().all(|&s| s == SIGMA_FLOOR));
    }

    #[test]
    fn k_must_be_below_n() {
        assert!(build_knn(&Array2::zeros((3, 1)), 3, &[]).is_err());
    }
}
