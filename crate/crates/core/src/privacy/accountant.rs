//! Rényi-DP ledger for the Poisson-subsampled Gaussian mechanism.
//!
//! Integer orders use the binomial expansion of the moment; fractional
//! orders use the two-sided series with complementary error functions. All
//! sums are carried in log space.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// `{1.25, 1.5, 2, 3, ..., 64, 128, 256}`.
pub fn default_orders() -> Vec<f64> {
    let mut v = vec![1.25, 1.5];
    v.extend((2..=64).map(|a| a as f64));
    v.extend([128.0, 256.0]);
    v
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `log(e^a - e^b)` for `a >= b`.
fn log_sub(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a <= b {
        return f64::NEG_INFINITY;
    }
    a + (-(b - a).exp()).ln_1p()
}

fn ln_gamma_binom(n: u64, k: u64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `log erfc(x)`, with the asymptotic expansion where `erfc` underflows.
fn log_erfc(x: f64) -> f64 {
    if x < 20.0 {
        erfc(x).ln()
    } else {
        let x2 = x * x;
        -x2 - x.ln() - 0.5 * std::f64::consts::PI.ln()
            + (1.0 - 1.0 / (2.0 * x2) + 3.0 / (4.0 * x2 * x2) - 15.0 / (8.0 * x2 * x2 * x2)).ln()
    }
}

fn log_a_int(q: f64, sigma: f64, alpha: u64) -> f64 {
    let mut log_a = f64::NEG_INFINITY;
    for i in 0..=alpha {
        let log_coef = ln_gamma_binom(alpha, i) + i as f64 * q.ln() + (alpha - i) as f64 * (1.0 - q).ln();
        let s = log_coef + (i * i - i) as f64 / (2.0 * sigma * sigma);
        log_a = log_add(log_a, s);
    }
    log_a
}

fn log_a_frac(q: f64, sigma: f64, alpha: f64) -> f64 {
    let (mut log_a0, mut log_a1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let z0 = sigma * sigma * (1.0 / q - 1.0).ln() + 0.5;
    let s2 = std::f64::consts::SQRT_2 * sigma;
    let mut coef = 1.0_f64; // generalised binomial C(alpha, i)
    let mut i = 0.0_f64;
    loop {
        let log_coef = coef.abs().ln();
        let j = alpha - i;
        let log_t0 = log_coef + i * q.ln() + j * (1.0 - q).ln();
        let log_t1 = log_coef + j * q.ln() + i * (1.0 - q).ln();
        let log_e0 = 0.5f64.ln() + log_erfc((i - z0) / s2);
        let log_e1 = 0.5f64.ln() + log_erfc((z0 - j) / s2);
        let log_s0 = log_t0 + (i * i - i) / (2.0 * sigma * sigma) + log_e0;
        let log_s1 = log_t1 + (j * j - j) / (2.0 * sigma * sigma) + log_e1;
        if coef > 0.0 {
            log_a0 = log_add(log_a0, log_s0);
            log_a1 = log_add(log_a1, log_s1);
        } else {
            log_a0 = log_sub(log_a0, log_s0);
            log_a1 = log_sub(log_a1, log_s1);
        }
        coef *= (alpha - i) / (i + 1.0);
        i += 1.0;
        if log_s0.max(log_s1) < -30.0 || i > 10_000.0 {
            break;
        }
    }
    log_add(log_a0, log_a1)
}

/// Rényi divergence of order `alpha` for one step of the mechanism with
/// sampling rate `q` and noise multiplier `sigma`.
pub fn compute_rdp(q: f64, sigma: f64, alpha: f64) -> f64 {
    if q == 0.0 {
        return 0.0;
    }
    if sigma == 0.0 {
        return f64::INFINITY;
    }
    if q == 1.0 {
        return alpha / (2.0 * sigma * sigma);
    }
    let log_a = if alpha.fract() == 0.0 {
        log_a_int(q, sigma, alpha as u64)
    } else {
        log_a_frac(q, sigma, alpha)
    };
    log_a / (alpha - 1.0)
}

/// `min_alpha rdp(alpha) + log(1 / delta) / (alpha - 1)`, with the minimising order.
pub fn rdp_to_epsilon(orders: &[f64], rdp: &[f64], delta: f64) -> (f64, f64) {
    orders
        .iter()
        .zip(rdp)
        .map(|(&a, &r)| (r + (1.0 / delta).ln() / (a - 1.0), a))
        .fold((f64::INFINITY, f64::NAN), |best, cur| if cur.0 < best.0 { cur } else { best })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdpAccountant {
    pub orders: Vec<f64>,
    pub rdp: Vec<f64>,
    pub steps: u64,
}

impl Default for RdpAccountant {
    fn default() -> Self {
        Self::new(default_orders())
    }
}

impl RdpAccountant {
    pub fn new(orders: Vec<f64>) -> Self {
        let n = orders.len();
        Self {
            orders,
            rdp: vec![0.0; n],
            steps: 0,
        }
    }

    pub fn step(&mut self, q: f64, sigma: f64) -> Result<()> {
        self.steps_n(q, sigma, 1)
    }

    /// `n` identical steps.
    pub fn steps_n(&mut self, q: f64, sigma: f64, n: u64) -> Result<()> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::invalid(format!("sampling rate {q} outside [0, 1]")));
        }
        if !(sigma >= 0.0) {
            return Err(Error::invalid(format!("noise multiplier {sigma} is negative")));
        }
        for (r, &a) in self.rdp.iter_mut().zip(&self.orders) {
            *r += n as f64 * compute_rdp(q, sigma, a);
        }
        self.steps += n;
        Ok(())
    }

    /// `f64::INFINITY` when any step was noiseless.
    pub fn epsilon(&self, delta: f64) -> f64 {
        rdp_to_epsilon(&self.orders, &self.rdp, delta).0
    }
}

/// Epsilon after `t` steps with sampling rate `q` and noise `sigma`.
pub fn epsilon_for(q: f64, sigma: f64, t: u64, delta: f64) -> f64 {
    if sigma == 0.0 && t > 0 && q > 0.0 {
        return f64::INFINITY;
    }
    let mut acc = RdpAccountant::default();
    acc.steps_n(q, sigma, t).expect("validated inputs");
    acc.epsilon(delta)
}
