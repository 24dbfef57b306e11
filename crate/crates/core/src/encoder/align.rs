//! Cross-modal alignment: one minus the cosine between each node's embedding
//! and its text embedding, summed over nodes that have text.

use ndarray::Array2;

use super::text::TextMatrix;
use crate::error::{Error, Result};

/// Norm below which an embedding row is treated as orthogonal to its text.
pub const NORM_EPS: f64 = 1e-8;

/// Returns the loss and, when `grad` is given, accumulates its gradient with
/// respect to `z` scaled by `scale`.
pub fn align_loss_scaled(
    z: &Array2<f64>,
    text: &TextMatrix,
    scale: f64,
    mut grad: Option<&mut Array2<f64>>,
) -> Result<f64> {
    if z.nrows() != text.rows.nrows() {
        return Err(Error::dim("alignment rows", text.rows.nrows(), z.nrows()));
    }
    if z.ncols() != text.dim() {
        return Err(Error::dim("alignment embedding dim", text.dim(), z.ncols()));
    }
    let mut total = 0.0;
    for i in 0..z.nrows() {
        if !text.present[i] {
            continue;
        }
        let zi = z.row(i);
        let hi = text.rows.row(i);
        let zn = zi.dot(&zi).sqrt();
        let hn = hi.dot(&hi).sqrt();
        if zn < NORM_EPS || hn < NORM_EPS {
            total += 1.0;
            continue;
        }
        let cos = zi.dot(&hi) / (zn * hn);
        total += 1.0 - cos;
        if let Some(g) = grad.as_deref_mut() {
            // d(1 - cos)/dz = -(h / (|z||h|) - cos z / |z|^2)
            for k in 0..z.ncols() {
                g[[i, k]] -= scale * (hi[k] / (zn * hn) - cos * zi[k] / (zn * zn));
            }
        }
    }
    Ok(total)
}

pub fn align_loss(z: &Array2<f64>, text: &TextMatrix) -> Result<f64> {
    align_loss_scaled(z, text, 1.0, None)
}
