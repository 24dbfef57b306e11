//! Graph/text fusion: `[gnn_i ; text_i] P`, with learned stand-ins for a
//! missing text embedding and for a missing feature row.

use ndarray::{s, Array1, Array2, Axis};

use super::nn::Dense;
use super::text::TextMatrix;
use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    /// `(m_g + m_t) x m`
    pub projection: Array2<f64>,
    pub missing_text: Array1<f64>,
    pub missing_feature: Array1<f64>,
}

impl FusionParams {
    pub fn new(gnn_dim: usize, text_dim: usize, fused_dim: usize, feature_dim: usize, rng: &mut SimRng) -> Self {
        Self {
            projection: Dense::glorot(gnn_dim + text_dim, fused_dim, rng).weight,
            missing_text: Array1::zeros(text_dim),
            missing_feature: Array1::zeros(feature_dim),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            projection: Array2::zeros(self.projection.raw_dim()),
            missing_text: Array1::zeros(self.missing_text.len()),
            missing_feature: Array1::zeros(self.missing_feature.len()),
        }
    }
}

/// Concatenation `[gnn | text-or-missing]`, kept for the backward pass.
pub fn concat_inputs(gnn: &Array2<f64>, text: &TextMatrix, params: &FusionParams) -> Result<Array2<f64>> {
    let n = gnn.nrows();
    if text.rows.nrows() != n {
        return Err(Error::dim("fusion text rows", n, text.rows.nrows()));
    }
    if text.dim() != params.missing_text.len() {
        return Err(Error::dim("fusion text dim", params.missing_text.len(), text.dim()));
    }
    let mg = gnn.ncols();
    let mt = text.dim();
    if params.projection.nrows() != mg + mt {
        return Err(Error::dim("fusion projection rows", mg + mt, params.projection.nrows()));
    }
    let mut cat = Array2::zeros((n, mg + mt));
    cat.slice_mut(s![.., ..mg]).assign(gnn);
    for i in 0..n {
        let mut dst = cat.slice_mut(s![i, mg..]);
        if text.present[i] {
            dst.assign(&text.rows.row(i));
        } else {
            dst.assign(&params.missing_text);
        }
    }
    Ok(cat)
}

pub fn fuse(gnn: &Array2<f64>, text: &TextMatrix, params: &FusionParams) -> Result<Array2<f64>> {
    Ok(concat_inputs(gnn, text, params)?.dot(&params.projection))
}

/// Gradients of the fusion step: projection, missing-text vector, and the
/// upstream gradient for the GNN output.
pub fn fuse_backward(
    concat: &Array2<f64>,
    text: &TextMatrix,
    params: &FusionParams,
    d_fused: &Array2<f64>,
) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let d_proj = concat.t().dot(d_fused);
    let d_cat = d_fused.dot(&params.projection.t());
    let mg = concat.ncols() - text.dim();
    let d_text = d_cat.slice(s![.., mg..]);
    let mut d_missing = Array1::zeros(text.dim());
    for (i, row) in d_text.axis_iter(Axis(0)).enumerate() {
        if !text.present[i] {
            d_missing += &row;
        }
    }
    (d_proj, d_missing, d_cat.slice(s![.., ..mg]).to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn text2() -> TextMatrix {
        TextMatrix {
            rows: array![[0.6, 0.8], [0.0, 0.0]],
            present: vec![true, false],
        }
    }

    fn params(proj: Array2<f64>) -> FusionParams {
        FusionParams {
            projection: proj,
            missing_text: array![-1.0, 7.0],
            missing_feature: array![0.0],
        }
    }

    #[test]
    fn identity_projection_concatenates_and_fills_missing_text() {
        let gnn = array![[1.0], [2.0]];
        let out = fuse(&gnn, &text2(), &params(Array2::eye(3))).unwrap();
        assert_eq!(out, array![[1.0, 0.6, 0.8], [2.0, -1.0, 7.0]]);
    }

    #[test]
    fn zero_projection_gives_zero() {
        let out = fuse(&array![[1.0], [2.0]], &text2(), &params(Array2::zeros((3, 4)))).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatched_projection_is_an_error() {
        assert!(fuse(&array![[1.0], [2.0]], &text2(), &params(Array2::zeros((4, 4)))).is_err());
    }
}
