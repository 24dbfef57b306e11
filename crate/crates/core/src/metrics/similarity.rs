//! Linear CKA, Procrustes disparity and mean cosine between representations.

use nalgebra::DMatrix;
use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

fn centered(x: &Array2<f64>) -> Array2<f64> {
    let mean = x.mean_axis(Axis(0)).expect("nonempty");
    x - &mean
}

fn frob(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn same_rows(x: &Array2<f64>, y: &Array2<f64>) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::dim("paired representation rows", x.nrows(), y.nrows()));
    }
    if x.nrows() < 2 {
        return Err(Error::Insufficient("similarity needs at least two rows".into()));
    }
    Ok(())
}

/// `||Y_c^T X_c||_F^2 / (||X_c^T X_c||_F ||Y_c^T Y_c||_F)` on column-centered inputs.
pub fn cka(x: &Array2<f64>, y: &Array2<f64>) -> Result<f64> {
    same_rows(x, y)?;
    let (xc, yc) = (centered(x), centered(y));
    let cross = frob(&yc.t().dot(&xc));
    let denom = frob(&xc.t().dot(&xc)) * frob(&yc.t().dot(&yc));
    if denom == 0.0 {
        return Err(Error::invalid("CKA of a constant representation"));
    }
    Ok(cross * cross / denom)
}

fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Residual sum of squares after centering both inputs, scaling each to unit
/// Frobenius norm, and mapping `y` onto `x` by the best rotation and scale:
/// `1 - (nuclear norm of X^T Y)^2`.
pub fn procrustes(x: &Array2<f64>, y: &Array2<f64>) -> Result<f64> {
    same_rows(x, y)?;
    if x.ncols() != y.ncols() {
        return Err(Error::dim("procrustes columns", x.ncols(), y.ncols()));
    }
    let (mut xc, mut yc) = (centered(x), centered(y));
    let (nx, ny) = (frob(&xc), frob(&yc));
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::invalid("procrustes of a constant representation"));
    }
    xc /= nx;
    yc /= ny;
    let m = to_na(&xc).transpose() * to_na(&yc);
    let nuclear: f64 = m.singular_values().iter().sum();
    Ok((1.0 - nuclear * nuclear).max(0.0))
}

/// Mean cosine between paired rows where `mask` is set; zero-norm rows count as 0.
pub fn mean_cosine(z: &Array2<f64>, h: &Array2<f64>, mask: &[bool]) -> Result<f64> {
    if z.nrows() != h.nrows() {
        return Err(Error::dim("cosine rows", z.nrows(), h.nrows()));
    }
    if z.ncols() != h.ncols() {
        return Err(Error::dim("cosine columns", z.ncols(), h.ncols()));
    }
    let mut total = 0.0;
    let mut n = 0usize;
    for i in (0..z.nrows()).filter(|&i| mask.get(i).copied().unwrap_or(false)) {
        let (a, b) = (z.row(i), h.row(i));
        let d = a.dot(&a).sqrt() * b.dot(&b).sqrt();
        total += if d > 0.0 { a.dot(&b) / d } else { 0.0 };
        n += 1;
    }
    if n == 0 {
        return Err(Error::Insufficient("no rows selected for cosine".into()));
    }
    Ok(total / n as f64)
}
