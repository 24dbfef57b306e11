//! Clipping, the Gaussian mechanism, a Rényi accountant for the
//! subsampled Gaussian mechanism, and a loss-threshold membership attack.

mod accountant;
mod attack;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::SimRng;

pub use accountant::{compute_rdp, default_orders, epsilon_for, rdp_to_epsilon, RdpAccountant};
pub use attack::{auroc, mi_attack};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpConfig {
    pub clip: f64,
    pub noise_sigma_dp: f64,
    pub delta: f64,
    pub sampling_rate: f64,
    pub rounds: u64,
}

impl Default for DpConfig {
    fn default() -> Self {
        Self {
            clip: 1.0,
            noise_sigma_dp: 0.9,
            delta: 1e-5,
            sampling_rate: 0.2,
            rounds: 50,
        }
    }
}

impl DpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0 && self.clip.is_finite()) {
            return Err(Error::invalid("clip norm must be positive"));
        }
        if !(self.noise_sigma_dp >= 0.0 && self.noise_sigma_dp.is_finite()) {
            return Err(Error::invalid("noise multiplier must be nonnegative"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("delta must lie in (0, 1)"));
        }
        if !(self.sampling_rate > 0.0 && self.sampling_rate <= 1.0) {
            return Err(Error::invalid("sampling rate must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_for(self.sampling_rate, self.noise_sigma_dp, self.rounds, self.delta)
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `v` scaled down to L2 norm `c` when longer.
pub fn clip(v: &[f64], c: f64) -> Vec<f64> {
    let n = l2_norm(v);
    if n > c {
        v.iter().map(|x| x * (c / n)).collect()
    } else {
        v.to_vec()
    }
}

/// `v + N(0, (sigma c)^2 I)`.
pub fn gaussian_mechanism(v: &[f64], c: f64, sigma: f64, rng: &mut SimRng) -> Vec<f64> {
    if sigma == 0.0 {
        return v.to_vec();
    }
    v.iter().map(|x| x + sigma * c * rng.sample::<f64, _>(StandardNormal)).collect()
}
