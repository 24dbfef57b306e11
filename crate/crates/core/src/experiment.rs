//! Desk-scale benchmark construction and whole-run summaries.

use crate::encoder::text::MockTextEncoder;
use crate::error::{Error, Result};
use crate::federation::{ClientEval, FedSettings, Federation, RoundReport};
use crate::graph::{
    apply_coldstart, make_edge_split, make_fewshot_split, partition_noniid, synth_graph, ClientGraph, SplitConfig,
    SynthParams,
};
use crate::llmguide::MockOracleProposer;
use crate::metrics::{percentile_10, worst_client};
use crate::privacy::mi_attack;
use crate::rng::derive_seed;
use crate::stats::mean;

const PARTITION_ATTEMPTS: u64 = 50;

/// A synthetic graph cut into non-IID clients with few-shot, edge and
/// cold-start splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub synth: SynthParams,
    pub split: SplitConfig,
    pub edge_val: f64,
    pub edge_test: f64,
}

impl Default for Benchmark {
    fn default() -> Self {
        Self {
            synth: SynthParams {
                n_nodes: 2000,
                n_classes: 5,
                intra_p: 0.05,
                inter_p: 0.004,
                feature_dim: 16,
                feature_noise: 1.5,
                ..Default::default()
            },
            split: SplitConfig::default(),
            edge_val: 0.1,
            edge_test: 0.2,
        }
    }
}

impl Benchmark {
    /// Builds the clients for `seed`. Partition draws are repeated until every
    /// client holds at least `2 * fewshot_k` labeled nodes.
    pub fn build(&self, seed: u64) -> Result<Vec<ClientGraph>> {
        let graph = synth_graph(&SynthParams { seed, ..self.synth.clone() })?;
        self.build_from(&graph, seed)
    }

    /// Partitions and splits an existing graph.
    pub fn build_from(&self, graph: &ClientGraph, seed: u64) -> Result<Vec<ClientGraph>> {
        let need = 2 * self.split.fewshot_k;
        for attempt in 0..PARTITION_ATTEMPTS {
            let cfg = SplitConfig { seed: derive_seed(seed, &[attempt]), ..self.split.clone() };
            let parts = partition_noniid(graph, &cfg)?;
            if parts.iter().any(|p| p.labels.iter().flatten().count() < need) {
                continue;
            }
            return parts
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let s = derive_seed(seed, &[k as u64]);
                    let c = make_fewshot_split(p, self.split.fewshot_k, s)?;
                    let c = make_edge_split(&c, self.edge_val, self.edge_test, s)?;
                    apply_coldstart(&c, self.split.coldstart_fraction, s)
                })
                .collect();
        }
        Err(Error::Insufficient(format!(
            "no partition in {PARTITION_ATTEMPTS} draws gave every client {need} labeled nodes"
        )))
    }
}

/// Run-level aggregates over clients.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    /// Pooled over all clients' test nodes.
    pub accuracy: f64,
    pub micro_f1: f64,
    pub worst_client_accuracy: f64,
    pub p10_accuracy: f64,
    pub mrr: f64,
    pub hits: f64,
    pub trustworthiness: f64,
    pub continuity: f64,
    pub cka: f64,
    pub procrustes: f64,
    pub cosine: f64,
    pub attack_auroc: f64,
    pub epsilon: f64,
    pub kb_per_round: f64,
    pub ms_per_round: f64,
    pub proposals_per_round: f64,
}

fn finite_mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        f64::NAN
    } else {
        mean(&v)
    }
}

/// Mean of `value` weighted by `weight`, skipping non-finite values.
fn weighted(evals: &[ClientEval], value: impl Fn(&ClientEval) -> f64, weight: impl Fn(&ClientEval) -> usize) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for e in evals {
        let (v, w) = (value(e), weight(e) as f64);
        if v.is_finite() && w > 0.0 {
            num += v * w;
            den += w;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

pub fn summarize(evals: &[ClientEval], rounds: &[RoundReport], epsilon: f64, proposals: usize) -> Result<RunSummary> {
    let accs: Vec<f64> = evals.iter().map(|e| e.accuracy).filter(|a| a.is_finite()).collect();
    let members: Vec<f64> = evals.iter().flat_map(|e| e.member_nll.iter().copied()).collect();
    let nonmembers: Vec<f64> = evals.iter().flat_map(|e| e.nonmember_nll.iter().copied()).collect();
    let n_rounds = rounds.len().max(1) as f64;
    Ok(RunSummary {
        accuracy: weighted(evals, |e| e.accuracy, |e| e.n_test_nodes),
        micro_f1: weighted(evals, |e| e.micro_f1, |e| e.n_test_nodes),
        worst_client_accuracy: if accs.is_empty() { f64::NAN } else { worst_client(&accs)? },
        p10_accuracy: if accs.is_empty() { f64::NAN } else { percentile_10(&accs)? },
        mrr: weighted(evals, |e| e.mrr, |e| e.n_test_edges),
        hits: weighted(evals, |e| e.hits, |e| e.n_test_edges),
        trustworthiness: finite_mean(evals.iter().map(|e| e.trustworthiness)),
        continuity: finite_mean(evals.iter().map(|e| e.continuity)),
        cka: finite_mean(evals.iter().map(|e| e.cka)),
        procrustes: finite_mean(evals.iter().map(|e| e.procrustes)),
        cosine: finite_mean(evals.iter().map(|e| e.cosine)),
        attack_auroc: if members.is_empty() || nonmembers.is_empty() {
            f64::NAN
        } else {
            mi_attack(&members, &nonmembers)?
        },
        epsilon,
        kb_per_round: rounds.iter().map(|r| r.payload_bytes as f64).sum::<f64>() / 1024.0 / n_rounds,
        ms_per_round: rounds
            .iter()
            .map(|r| r.clients.iter().map(|c| c.elapsed_ms).fold(0.0, f64::max))
            .sum::<f64>()
            / n_rounds,
        proposals_per_round: proposals as f64 / n_rounds,
    })
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub federation: Federation,
    pub rounds: Vec<RoundReport>,
    pub evals: Vec<ClientEval>,
    pub summary: RunSummary,
}

/// Sets up, trains for `settings.rounds` rounds and evaluates, with the mock
/// text encoder and mock proposer.
pub fn run_experiment(clients: Vec<ClientGraph>, settings: FedSettings) -> Result<RunOutcome> {
    let encoder = MockTextEncoder::new(settings.umap_dim, settings.seed);
    let proposer = MockOracleProposer { seed: settings.seed, ..settings.proposer.clone() };
    let mut federation = Federation::setup(clients, settings, &encoder, &proposer)?;
    let rounds = federation.run()?;
    let evals = federation.evaluate()?;
    let proposals = federation.clients.iter().map(|c| c.proposals.len()).sum();
    let summary = summarize(&evals, &rounds, federation.epsilon(), proposals)?;
    Ok(RunOutcome {
        federation,
        rounds,
        evals,
        summary,
    })
}
