//! Gaussian-kernel soft assignment of a pair distance to markers.

use super::{MarkerSet, Polarity};
use crate::error::{Error, Result};
use crate::stats::softmax;

/// Clamp on link probabilities.
pub const LINK_EPS: f64 = 1e-6;

fn logits(s: f64, m: &MarkerSet) -> Vec<f64> {
    let two_s2 = 2.0 * m.sigma_kern * m.sigma_kern;
    m.locations.iter().map(|&loc| -(s - loc).powi(2) / two_s2).collect()
}

/// Softmax over markers of `-(s - m_e)^2 / (2 sigma_kern^2)`.
pub fn soft_assign(s: f64, m: &MarkerSet) -> Vec<f64> {
    softmax(&logits(s, m))
}

fn check_polarities(m: &MarkerSet) -> Result<()> {
    if m.count(Polarity::Positive) == 0 || m.count(Polarity::Negative) == 0 {
        return Err(Error::invalid("link probability needs markers of both polarities"));
    }
    Ok(())
}

/// Positive-polarity mass of the soft assignment, clamped to `[LINK_EPS, 1 - LINK_EPS]`.
pub fn link_prob(s: f64, m: &MarkerSet) -> Result<f64> {
    Ok(link_prob_grad(s, m)?.prob)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkGrad {
    pub prob: f64,
    /// Derivative with respect to the distance.
    pub d_s: f64,
    /// Derivative with respect to each marker location.
    pub d_markers: Vec<f64>,
}

/// Link probability with its derivatives (zero inside the clamp region).
pub fn link_prob_grad(s: f64, m: &MarkerSet) -> Result<LinkGrad> {
    check_polarities(m)?;
    let p = soft_assign(s, m);
    let raw: f64 = p.iter().zip(&m.polarity).filter(|(_, q)| **q == Polarity::Positive).map(|(x, _)| x).sum();
    let prob = raw.clamp(LINK_EPS, 1.0 - LINK_EPS);
    let mut d_markers = vec![0.0; m.len()];
    let mut d_s = 0.0;
    if prob == raw {
        let s2 = m.sigma_kern * m.sigma_kern;
        for e in 0..m.len() {
            let ind = if m.polarity[e] == Polarity::Positive { 1.0 } else { 0.0 };
            let d_logit = p[e] * (ind - raw);
            let diff = (s - m.locations[e]) / s2;
            d_s -= d_logit * diff;
            d_markers[e] = d_logit * diff;
        }
    }
    Ok(LinkGrad { prob, d_s, d_markers })
}
