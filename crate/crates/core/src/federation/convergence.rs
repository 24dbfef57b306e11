//! Marker-averaging convergence on a synthetic quadratic problem where the
//! global gradient is known in closed form.
//!
//! Client `k` holds `L_k(M) = 0.5 ||M - c_k||^2`; the global loss is the
//! weighted mean, minimised at the weighted mean of the `c_k`.

use rand::Rng;
use rand_distr::StandardNormal;

use super::secagg::MaskScheme;
use super::server::{aggregate_masked, sample_participants, ClientUpdate, MaskedUpdate, ServerState};
use crate::error::Result;
use crate::markers::Polarity;
use crate::rng::rng_for;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticHarness {
    pub centers: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// Local gradient step size.
    pub client_lr: f64,
    pub local_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub iterates: Vec<Vec<f64>>,
    /// `||grad L(M_t)||` for every iterate.
    pub grad_norms: Vec<f64>,
    pub polyak: Vec<f64>,
    pub minimizer: Vec<f64>,
}

impl QuadraticHarness {
    /// `c_k = 1 + 0.1 xi` in `dim` coordinates, unit weights.
    pub fn heterogeneous(n_clients: usize, dim: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, &[0xC0]);
        let centers = (0..n_clients)
            .map(|_| (0..dim).map(|_| 1.0 + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        Self {
            centers,
            weights: vec![1.0; n_clients],
            client_lr: 0.5,
            local_steps: 1,
        }
    }

    pub fn minimizer(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        let dim = self.centers[0].len();
        (0..dim)
            .map(|d| self.centers.iter().zip(&self.weights).map(|(c, w)| w * c[d]).sum::<f64>() / total)
            .collect()
    }

    pub fn grad_norm(&self, m: &[f64]) -> f64 {
        self.minimizer().iter().zip(m).map(|(c, x)| (x - c).powi(2)).sum::<f64>().sqrt()
    }

    fn local(&self, k: usize, start: &[f64]) -> Vec<f64> {
        let mut m = start.to_vec();
        for _ in 0..self.local_steps {
            for (x, c) in m.iter_mut().zip(&self.centers[k]) {
                *x -= self.client_lr * (*x - c);
            }
        }
        m
    }

    /// Runs `rounds` of sampled participation, local steps, masked upload
    /// and aggregation from `M_0 = 0`.
    pub fn run(&self, rounds: usize, participation: f64, seed: u64) -> Result<ConvergenceTrace> {
        let dim = self.centers[0].len();
        let mut server = ServerState::new(vec![0.0; dim], vec![Polarity::Positive; dim])?;
        for t in 0..rounds as u64 {
            let part = sample_participants(self.centers.len(), participation, seed, t);
            if part.is_empty() {
                log::warn!("round {t}: no participants, skipping");
                server.skip();
                continue;
            }
            let scheme = MaskScheme::new(&part, seed, t);
            let masked = part
                .iter()
                .map(|&k| {
                    let u = ClientUpdate {
                        client: k,
                        weight: self.weights[k],
                        payload: self.local(k, &server.markers),
                    };
                    MaskedUpdate::from_update(&u, &scheme)
                })
                .collect::<Result<Vec<_>>>()?;
            let next = aggregate_masked(&server.markers, &masked)?;
            server.advance(next);
        }
        let grad_norms = server.history.iter().map(|m| self.grad_norm(m)).collect();
        Ok(ConvergenceTrace {
            polyak: server.polyak(),
            iterates: server.history,
            grad_norms,
            minimizer: self.minimizer(),
        })
    }
}
