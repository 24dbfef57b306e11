//! Monte Carlo KL between the marker posterior and the mixture prior.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{MarkerPosterior, MarkerPrior};
use crate::error::{Error, Result};
use crate::rng::rng_for;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlEstimate {
    pub value: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlGrad {
    pub value: f64,
    pub d_mean: Vec<f64>,
    pub d_log_var: Vec<f64>,
}

/// Standard normal noise, `n_samples x n_markers`.
pub fn kl_noise(n_samples: usize, n_markers: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng_for(seed, &[]);
    Array2::from_shape_simple_fn((n_samples, n_markers), || rng.sample(StandardNormal))
}

/// Per-sample totals over markers of `log q(m) - log s(m)`, with the gradient.
fn kl_terms(q: &MarkerPosterior, s: &MarkerPrior, xi: &Array2<f64>) -> (Vec<f64>, KlGrad) {
    let n = xi.nrows();
    let e_count = q.len();
    let mut totals = vec![0.0; n];
    let mut d_mean = vec![0.0; e_count];
    let mut d_log_var = vec![0.0; e_count];
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    for e in 0..e_count {
        let sd = (0.5 * q.log_var[e]).exp();
        for k in 0..n {
            let x = xi[[k, e]];
            let m = q.mean[e] + sd * x;
            let log_q = -half_log_2pi - 0.5 * q.log_var[e] - 0.5 * x * x;
            let (log_s, d_log_s) = s.log_density_grad(m);
            totals[k] += log_q - log_s;
            d_mean[e] -= d_log_s;
            d_log_var[e] += -0.5 - d_log_s * 0.5 * sd * x;
        }
    }
    let inv = 1.0 / n as f64;
    d_mean.iter_mut().chain(d_log_var.iter_mut()).for_each(|g| *g *= inv);
    let value = totals.iter().sum::<f64>() * inv;
    (
        totals,
        KlGrad {
            value,
            d_mean,
            d_log_var,
        },
    )
}

/// KL estimate and its reparameterisation gradient for fixed noise.
pub fn kl_with_grad(q: &MarkerPosterior, s: &MarkerPrior, xi: &Array2<f64>) -> Result<KlGrad> {
    if xi.ncols() != q.len() {
        return Err(Error::dim("KL noise columns", q.len(), xi.ncols()));
    }
    if xi.nrows() == 0 {
        return Err(Error::invalid("KL estimate needs at least one sample"));
    }
    Ok(kl_terms(q, s, xi).1)
}

/// Estimate of `E_q[log q - log s]` summed over markers, with its standard error.
pub fn kl_estimate(q: &MarkerPosterior, s: &MarkerPrior, n_samples: usize, seed: u64) -> Result<KlEstimate> {
    if n_samples == 0 {
        return Err(Error::invalid("KL estimate needs at least one sample"));
    }
    let xi = kl_noise(n_samples, q.len(), seed);
    let (totals, g) = kl_terms(q, s, &xi);
    let std_err = crate::stats::sample_std(&totals) / (n_samples as f64).sqrt();
    Ok(KlEstimate { value: g.value, std_err })
}

pub fn kl_posterior_prior(q: &MarkerPosterior, s: &MarkerPrior, n_samples: usize, seed: u64) -> Result<f64> {
    Ok(kl_estimate(q, s, n_samples, seed)?.value)
}
