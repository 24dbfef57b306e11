//! The simulation driver: client setup, the server's marker initialisation
//! and repeated rounds.

use rayon::prelude::*;

use super::client::{ClientRoundReport, ClientState};
use super::eval::{evaluate_client, ClientEval};
use super::secagg::MaskScheme;
use super::server::{aggregate_masked, sample_participants, ClientUpdate, MaskedUpdate, ServerState};
use super::FedSettings;
use crate::encoder::text::TextEncoder;
use crate::encoder::umap::fit_ab;
use crate::error::{Error, Result};
use crate::graph::ClientGraph;
use crate::llmguide::Proposer;
use crate::markers::MarkerPrior;
use crate::privacy::RdpAccountant;

/// Mask-seed round tag of the setup exchange.
const SETUP_ROUND: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: u64,
    pub participants: Vec<usize>,
    pub clients: Vec<ClientRoundReport>,
    /// `||M_{t+1} - M_t||`; zero when nothing was aggregated.
    pub update_norm: f64,
    /// Privacy spent so far (zero without aggregation, infinite without noise).
    pub epsilon: f64,
    pub payload_bytes: usize,
    pub skipped: bool,
}

fn client_failure(client: usize) -> impl Fn(Error) -> Error {
    move |e| Error::ClientFailure {
        client,
        source: Box::new(e),
    }
}

#[derive(Debug, Clone)]
pub struct Federation {
    pub settings: FedSettings,
    pub n_classes: usize,
    pub clients: Vec<ClientState>,
    /// Present when markers are aggregated.
    pub server: Option<ServerState>,
    /// Prior per client: the shared prior under aggregation, otherwise each
    /// client's own.
    pub priors: Vec<MarkerPrior>,
    pub accountant: RdpAccountant,
    pub round: u64,
}

fn masked_sum(
    updates: &[ClientUpdate],
    current: &[f64],
    seed: u64,
    round: u64,
) -> Result<Vec<f64>> {
    let ids: Vec<usize> = updates.iter().map(|u| u.client).collect();
    let scheme = MaskScheme::new(&ids, seed, round);
    let masked = updates
        .iter()
        .map(|u| MaskedUpdate::from_update(u, &scheme))
        .collect::<Result<Vec<_>>>()?;
    aggregate_masked(current, &masked)
}

impl Federation {
    /// Sets every client up and, under aggregation, forms `M_0` as the
    /// weighted mean of the clients' initial markers through the masked
    /// channel. The shared prior is fitted to `M_0`.
    pub fn setup(
        graphs: Vec<ClientGraph>,
        settings: FedSettings,
        encoder: &dyn TextEncoder,
        proposer: &dyn Proposer,
    ) -> Result<Self> {
        settings.validate()?;
        if graphs.is_empty() {
            return Err(Error::Insufficient("no clients".into()));
        }
        let n_classes = graphs.iter().map(ClientGraph::n_classes).max().unwrap_or(0).max(2);
        let ab = fit_ab(settings.min_dist, settings.spread)?;
        let clients = graphs
            .into_par_iter()
            .enumerate()
            .map(|(k, g)| ClientState::setup(k, g, n_classes, &settings, ab, encoder, proposer).map_err(client_failure(k)))
            .collect::<Result<Vec<_>>>()?;
        let polarity = clients[0].params.posterior.polarity.clone();

        let (server, priors) = if settings.aggregate {
            let updates: Vec<ClientUpdate> = clients
                .iter()
                .map(|c| ClientUpdate {
                    client: c.id,
                    weight: c.weight,
                    payload: c.expected_markers(),
                })
                .collect();
            let zeros = vec![0.0; polarity.len()];
            let m0 = masked_sum(&updates, &zeros, settings.seed, SETUP_ROUND)?;
            let prior = MarkerPrior::fit(&m0, &polarity)?;
            (Some(ServerState::new(m0, polarity)?), vec![prior; clients.len()])
        } else {
            let priors = clients
                .iter()
                .map(|c| MarkerPrior::fit(&c.expected_markers(), &polarity))
                .collect::<Result<Vec<_>>>()?;
            (None, priors)
        };
        Ok(Self {
            settings,
            n_classes,
            clients,
            server,
            priors,
            accountant: RdpAccountant::default(),
            round: 0,
        })
    }

    pub fn epsilon(&self) -> f64 {
        if self.accountant.steps == 0 {
            0.0
        } else {
            self.accountant.epsilon(self.settings.dp.delta)
        }
    }

    /// One round: sampled clients run locally (concurrently), updates are
    /// sorted by client id, masked, summed and aggregated.
    pub fn run_round(&mut self) -> Result<RoundReport> {
        let t = self.round;
        let s = &self.settings;
        let participants = sample_participants(self.clients.len(), s.participation, s.seed, t);
        if participants.is_empty() {
            log::warn!("round {t}: no clients sampled, skipping");
        }
        let global = self.server.as_ref().map(|sv| sv.markers.clone());
        let priors = &self.priors;
        let mut results: Vec<(ClientRoundReport, ClientUpdate)> = self
            .clients
            .par_iter_mut()
            .filter(|c| participants.binary_search(&c.id).is_ok())
            .map(|c| {
                let id = c.id;
                c.local_round(global.as_deref(), Some(&priors[id]), s, t).map_err(client_failure(id))
            })
            .collect::<Result<Vec<_>>>()?;
        results.sort_by_key(|r| r.0.client);

        let mut update_norm = 0.0;
        if let Some(server) = self.server.as_mut() {
            if results.is_empty() {
                server.skip();
            } else {
                let updates: Vec<ClientUpdate> = results.iter().map(|r| r.1.clone()).collect();
                let next = masked_sum(&updates, &server.markers, s.seed, t)?;
                server.advance(next);
                update_norm = *server.update_norms.last().expect("just pushed");
            }
            self.accountant.step(s.participation, s.dp.noise_sigma_dp)?;
        }
        self.round += 1;
        let clients: Vec<ClientRoundReport> = results.into_iter().map(|r| r.0).collect();
        let payload_bytes = if self.server.is_some() {
            clients.iter().map(|c| c.payload_bytes).sum()
        } else {
            0
        };
        Ok(RoundReport {
            round: t,
            skipped: participants.is_empty(),
            participants,
            clients,
            update_norm,
            epsilon: self.epsilon(),
            payload_bytes,
        })
    }

    pub fn run(&mut self) -> Result<Vec<RoundReport>> {
        (0..self.settings.rounds).map(|_| self.run_round()).collect()
    }

    pub fn evaluate(&self) -> Result<Vec<ClientEval>> {
        self.clients
            .par_iter()
            .map(|c| evaluate_client(c, &self.settings, self.n_classes).map_err(client_failure(c.id)))
            .collect()
    }
}
