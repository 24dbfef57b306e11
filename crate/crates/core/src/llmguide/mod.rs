//! Pseudo-edge and pseudo-label proposals, temperature calibration and
//! threshold admission.
//!
//! The shipped proposer is a mock oracle with a planted precision and a
//! planted miscalibration; any real backend plugs in through [`Proposer`].

mod calibrate;

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::{ClientGraph, Split};
use crate::rng::{rng_for, tag};

pub use calibrate::{
    admit, brier, ece, fit_temperature, fit_temperature_with, temperature_nll, AdmissionReport, CalibrationModel,
    ECE_BINS, TAU_SWEEP,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProposalKind {
    Edge,
    Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    Pair(usize, usize),
    Node(usize),
}

/// Which part of the workflow a proposal feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProposalSlice {
    /// Outcome revealed to the client; used to fit the temperature, never admitted.
    Calibration,
    /// Candidates for admission.
    Admission,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub kind: ProposalKind,
    pub target: Target,
    /// Proposed class for label proposals.
    pub payload: Option<usize>,
    pub raw_logit: f64,
    /// Number of competing zero logits: 1 for an edge (sigmoid), `L - 1` for a label (softmax).
    pub alternatives: usize,
    pub confidence: f64,
    pub accepted: bool,
    pub slice: ProposalSlice,
    /// Ground truth, known to the simulation.
    pub correct: bool,
}

impl Proposal {
    /// `exp(r / T) / (exp(r / T) + alternatives)`.
    pub fn confidence_at(&self, temperature: f64) -> f64 {
        confidence(self.raw_logit, self.alternatives, temperature)
    }

    pub fn csv_header() -> &'static str {
        "kind,target,payload,raw_logit,confidence,accepted"
    }

    pub fn csv_row(&self) -> String {
        let kind = match self.kind {
            ProposalKind::Edge => "edge",
            ProposalKind::Label => "label",
        };
        let target = match self.target {
            Target::Pair(u, v) => format!("{u}-{v}"),
            Target::Node(i) => i.to_string(),
        };
        let payload = self.payload.map(|c| c.to_string()).unwrap_or_default();
        format!("{kind},{target},{payload},{},{},{}", self.raw_logit, self.confidence, self.accepted)
    }
}

pub fn confidence(raw_logit: f64, alternatives: usize, temperature: f64) -> f64 {
    let r = raw_logit / temperature;
    let k = alternatives.max(1) as f64;
    // 1 / (1 + k e^{-r}), arranged to avoid overflow
    if r >= 0.0 {
        1.0 / (1.0 + k * (-r).exp())
    } else {
        let e = r.exp();
        e / (e + k)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Source of proposals for one client.
pub trait Proposer: Send + Sync {
    fn propose(&self, client: &ClientGraph, client_id: u64) -> Result<Vec<Proposal>>;
}

/// Mock oracle. Each proposal is correct with probability `precision`; its
/// score is `N(+1, 1)` when correct and `N(-1, 1)` otherwise, so
/// `logit(precision) + 2 score` is the calibrated log-odds. The emitted
/// logit is that value times `skew`, so a temperature equal to `skew`
/// restores calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct MockOracleProposer {
    pub precision: f64,
    pub skew: f64,
    pub edge_budget: usize,
    pub label_budget: usize,
    /// Fraction of proposals routed to the calibration slice.
    pub calibration_fraction: f64,
    pub seed: u64,
}

impl Default for MockOracleProposer {
    fn default() -> Self {
        Self {
            precision: 0.9,
            skew: 2.0,
            edge_budget: 40,
            label_budget: 40,
            calibration_fraction: 0.3,
            seed: 0,
        }
    }
}

/// Upper bound on the precision used inside `logit`.
const PRECISION_CAP: f64 = 1.0 - 1e-6;

impl MockOracleProposer {
    pub fn validate(&self) -> Result<()> {
        if !(self.precision > 0.0 && self.precision <= 1.0) {
            return Err(Error::invalid("proposer precision must lie in (0, 1]"));
        }
        if !(self.skew > 0.0 && self.skew.is_finite()) {
            return Err(Error::invalid("proposer skew must be positive"));
        }
        if !(0.0..1.0).contains(&self.calibration_fraction) {
            return Err(Error::invalid("calibration_fraction must lie in [0, 1)"));
        }
        Ok(())
    }

    fn raw_logit(&self, correct: bool, alternatives: usize, rng: &mut crate::rng::SimRng) -> f64 {
        let mu = if correct { 1.0 } else { -1.0 };
        let score = mu + rng.sample::<f64, _>(StandardNormal);
        let calibrated = logit(self.precision.min(PRECISION_CAP)) + 2.0 * score + (alternatives as f64).ln();
        self.skew * calibrated
    }
}

/// Draws up to `count` distinct items from `pool`.
fn draw<T: Copy>(pool: &[T], count: usize, rng: &mut crate::rng::SimRng) -> Vec<T> {
    let count = count.min(pool.len());
    let mut idx = sample(rng, pool.len(), count).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| pool[i]).collect()
}

impl Proposer for MockOracleProposer {
    fn propose(&self, client: &ClientGraph, client_id: u64) -> Result<Vec<Proposal>> {
        self.validate()?;
        let mut rng = rng_for(self.seed, &[tag::PROPOSER, client_id]);
        let n = client.n_nodes();
        let mut out = Vec::new();

        // edges: true candidates are held-out edges, false ones are non-edges
        let held_out: Vec<(usize, usize)> = client
            .edges
            .iter()
            .zip(&client.edge_split)
            .filter(|(_, s)| **s != Split::Train)
            .map(|(e, _)| e.key())
            .collect();
        let all_edges = client.edge_set();
        let n_pairs = n * n.saturating_sub(1) / 2;
        let n_non_edges = n_pairs - all_edges.len();
        let budget = self.edge_budget.min(held_out.len() + n_non_edges);
        let outcomes: Vec<bool> = (0..budget).map(|_| rng.random::<f64>() < self.precision).collect();
        let n_true = outcomes.iter().filter(|&&c| c).count().min(held_out.len());
        let mut true_pairs = draw(&held_out, n_true, &mut rng).into_iter();
        let mut used: HashSet<(usize, usize)> = HashSet::new();
        for &want in &outcomes {
            let (pair, correct) = match want.then(|| true_pairs.next()).flatten() {
                Some(p) => (p, true),
                None => {
                    if n_non_edges <= used.len() {
                        continue;
                    }
                    // rejection-sample an unused non-edge
                    let p = loop {
                        let u = rng.random_range(0..n);
                        let v = rng.random_range(0..n);
                        let key = (u.min(v), u.max(v));
                        if u != v && !all_edges.contains(&key) && !used.contains(&key) {
                            break key;
                        }
                    };
                    (p, false)
                }
            };
            used.insert(pair);
            let raw_logit = self.raw_logit(correct, 1, &mut rng);
            out.push(Proposal {
                kind: ProposalKind::Edge,
                target: Target::Pair(pair.0, pair.1),
                payload: None,
                raw_logit,
                alternatives: 1,
                confidence: 0.0,
                accepted: false,
                slice: ProposalSlice::Admission,
                correct,
            });
        }

        // labels: any labeled node outside the train split
        let n_classes = client.n_classes();
        if n_classes >= 2 {
            let candidates: Vec<usize> = (0..n)
                .filter(|&i| client.labels[i].is_some() && client.node_split[i] != Split::Train)
                .collect();
            for i in draw(&candidates, self.label_budget, &mut rng) {
                let truth = client.labels[i].expect("filtered on labeled nodes");
                let correct = rng.random::<f64>() < self.precision;
                let payload = if correct {
                    truth
                } else {
                    let wrong = rng.random_range(0..n_classes - 1);
                    if wrong >= truth {
                        wrong + 1
                    } else {
                        wrong
                    }
                };
                let raw_logit = self.raw_logit(correct, n_classes - 1, &mut rng);
                out.push(Proposal {
                    kind: ProposalKind::Label,
                    target: Target::Node(i),
                    payload: Some(payload),
                    raw_logit,
                    alternatives: n_classes - 1,
                    confidence: 0.0,
                    accepted: false,
                    slice: ProposalSlice::Admission,
                    correct,
                });
            }
        }

        for p in &mut out {
            if rng.random::<f64>() < self.calibration_fraction {
                p.slice = ProposalSlice::Calibration;
            }
            p.confidence = p.confidence_at(1.0);
        }
        Ok(out)
    }
}

pub fn propose(client: &ClientGraph, proposer: &dyn Proposer, client_id: u64) -> Result<Vec<Proposal>> {
    proposer.propose(client, client_id)
}
