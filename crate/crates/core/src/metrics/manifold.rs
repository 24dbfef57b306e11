//! Rank-based neighborhood preservation with exact neighbor ranks.

use ndarray::Array2;

use crate::error::{Error, Result};

fn sq_dist(x: &Array2<f64>, i: usize, j: usize) -> f64 {
    x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `r[i][j]`: rank of `j` among the neighbors of `i` (1 = nearest, self excluded,
/// ties by index); `r[i][i] = 0`.
pub fn rank_matrix(x: &Array2<f64>) -> Vec<Vec<usize>> {
    let n = x.nrows();
    (0..n)
        .map(|i| {
            let mut order: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (sq_dist(x, i, j), j)).collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut r = vec![0; n];
            for (pos, &(_, j)) in order.iter().enumerate() {
                r[j] = pos + 1;
            }
            r
        })
        .collect()
}

fn check(x: &Array2<f64>, z: &Array2<f64>, k: usize) -> Result<usize> {
    let n = x.nrows();
    if z.nrows() != n {
        return Err(Error::dim("embedding rows", n, z.nrows()));
    }
    if k == 0 || 2 * k >= n {
        return Err(Error::invalid(format!("neighborhood size {k} must satisfy 0 < k < n/2 (n = {n})")));
    }
    Ok(n)
}

/// Penalty for points in the `k`-neighborhood of `low` but not of `high`,
/// weighted by their rank in `high` minus `k`.
fn preservation(high: &Array2<f64>, low: &Array2<f64>, k: usize) -> f64 {
    let n = high.nrows();
    let rh = rank_matrix(high);
    let rl = rank_matrix(low);
    let mut penalty = 0.0;
    for i in 0..n {
        for j in 0..n {
            if j != i && rl[i][j] <= k && rh[i][j] > k {
                penalty += (rh[i][j] - k) as f64;
            }
        }
    }
    let (n, k) = (n as f64, k as f64);
    1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * penalty
}

pub fn trustworthiness(x: &Array2<f64>, z: &Array2<f64>, k: usize) -> Result<f64> {
    check(x, z, k)?;
    Ok(preservation(x, z, k))
}

pub fn continuity(x: &Array2<f64>, z: &Array2<f64>, k: usize) -> Result<f64> {
    check(x, z, k)?;
    Ok(preservation(z, x, k))
}
