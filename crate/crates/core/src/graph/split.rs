use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};

use super::{ClientGraph, Split};
use crate::error::{Error, Result};
use crate::rng::{rng_for, tag, SimRng};

/// Fraction of the non-few-shot labeled nodes that goes to validation; the rest is test.
pub const VAL_FRACTION: f64 = 0.2;

const MAX_PARTITION_RETRIES: u64 = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    pub n_clients: usize,
    pub label_skew_alpha: f64,
    pub fewshot_k: usize,
    pub coldstart_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            n_clients: 20,
            label_skew_alpha: 0.3,
            fewshot_k: 10,
            coldstart_fraction: 0.0,
            seed: 1,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clients == 0 {
            return Err(Error::invalid("n_clients must be >= 1"));
        }
        if !(self.label_skew_alpha > 0.0) {
            return Err(Error::invalid("label_skew_alpha must be positive"));
        }
        if !(0.0..=1.0).contains(&self.coldstart_fraction) {
            return Err(Error::invalid("coldstart_fraction must lie in [0, 1]"));
        }
        Ok(())
    }
}

fn dirichlet(alpha: f64, k: usize, rng: &mut SimRng) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated positive");
    let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        draws.iter().map(|g| g / total).collect()
    } else {
        vec![1.0 / k as f64; k]
    }
}

/// Splits nodes across clients with per-class Dirichlet(alpha) proportions.
/// Each client receives the induced subgraph of its nodes; edges between
/// clients are dropped.
pub fn partition_noniid(graph: &ClientGraph, cfg: &SplitConfig) -> Result<Vec<ClientGraph>> {
    cfg.validate()?;
    let n_strata = graph.n_classes() + 1; // last stratum: unlabeled nodes
    let mut strata: Vec<Vec<usize>> = vec![Vec::new(); n_strata];
    for i in 0..graph.n_nodes() {
        strata[graph.labels[i].unwrap_or(n_strata - 1)].push(i);
    }
    let k = cfg.n_clients;
    for attempt in 0..MAX_PARTITION_RETRIES {
        let mut rng = rng_for(cfg.seed, &[tag::PARTITION, attempt]);
        let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); k];
        for stratum in &strata {
            if stratum.is_empty() {
                continue;
            }
            let mut nodes = stratum.clone();
            nodes.shuffle(&mut rng);
            let props = dirichlet(cfg.label_skew_alpha, k, &mut rng);
            let m = nodes.len() as f64;
            let mut cum = 0.0;
            let mut start = 0usize;
            for (c, p) in props.iter().enumerate() {
                cum += p;
                let end = if c + 1 == k { nodes.len() } else { ((cum * m).round() as usize).min(nodes.len()) };
                let end = end.max(start);
                assigned[c].extend_from_slice(&nodes[start..end]);
                start = end;
            }
        }
        if assigned.iter().all(|a| !a.is_empty()) {
            return Ok(assigned
                .into_iter()
                .map(|mut nodes| {
                    nodes.sort_unstable();
                    graph.induced_subgraph(&nodes)
                })
                .collect());
        }
    }
    Err(Error::Insufficient(format!(
        "could not give every one of {k} clients at least one node after {MAX_PARTITION_RETRIES} draws"
    )))
}

/// Marks exactly `fewshot_k` labeled nodes as train, round-robin over classes
/// so the few-shot set is stratified; of the remaining labeled nodes
/// `VAL_FRACTION` go to validation and the rest to test.
pub fn make_fewshot_split(client: &ClientGraph, fewshot_k: usize, seed: u64) -> Result<ClientGraph> {
    let labeled: Vec<usize> = (0..client.n_nodes()).filter(|&i| client.labels[i].is_some()).collect();
    if labeled.len() < fewshot_k {
        return Err(Error::Insufficient(format!(
            "few-shot split needs {fewshot_k} labeled nodes but the client has {} ({} short)",
            labeled.len(),
            fewshot_k - labeled.len()
        )));
    }
    let mut rng = rng_for(seed, &[tag::FEWSHOT]);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); client.n_classes()];
    for &i in &labeled {
        by_class[client.labels[i].unwrap()].push(i);
    }
    by_class.retain(|c| !c.is_empty());
    for c in by_class.iter_mut() {
        c.shuffle(&mut rng);
    }
    by_class.shuffle(&mut rng);

    let mut out = client.clone();
    for s in out.node_split.iter_mut() {
        *s = Split::Unassigned;
    }
    let mut taken = 0;
    let mut cursor = vec![0usize; by_class.len()];
    while taken < fewshot_k {
        for (c, nodes) in by_class.iter().enumerate() {
            if taken == fewshot_k {
                break;
            }
            if cursor[c] < nodes.len() {
                out.node_split[nodes[cursor[c]]] = Split::Train;
                cursor[c] += 1;
                taken += 1;
            }
        }
    }
    let mut rest: Vec<usize> = labeled.into_iter().filter(|&i| out.node_split[i] != Split::Train).collect();
    rest.shuffle(&mut rng);
    let n_val = (VAL_FRACTION * rest.len() as f64).round() as usize;
    for (k, &i) in rest.iter().enumerate() {
        out.node_split[i] = if k < n_val { Split::Val } else { Split::Test };
    }
    Ok(out)
}

/// Turns `floor(fraction * n)` nodes with text into text-only nodes.
pub fn apply_coldstart(client: &ClientGraph, fraction: f64, seed: u64) -> Result<ClientGraph> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid("cold-start fraction must lie in [0, 1]"));
    }
    let n = client.n_nodes();
    let count = (fraction * n as f64 + 1e-9).floor() as usize;
    let mut candidates: Vec<usize> = (0..n).filter(|&i| client.texts[i].is_some()).collect();
    if candidates.len() < count {
        return Err(Error::Insufficient(format!(
            "cold start needs {count} nodes with text, only {} have one",
            candidates.len()
        )));
    }
    let mut rng = rng_for(seed, &[tag::COLDSTART]);
    candidates.shuffle(&mut rng);
    let mut out = client.clone();
    for &i in &candidates[..count] {
        out.features.row_mut(i).fill(f64::NAN);
        out.cold_start[i] = true;
    }
    Ok(out)
}

/// Holds out edges for link-prediction evaluation; held-out edges are hidden
/// from message passing.
pub fn make_edge_split(client: &ClientGraph, val_frac: f64, test_frac: f64, seed: u64) -> Result<ClientGraph> {
    if val_frac < 0.0 || test_frac < 0.0 || val_frac + test_frac > 1.0 {
        return Err(Error::invalid("edge split fractions must be nonnegative and sum to at most 1"));
    }
    let m = client.edges.len();
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = rng_for(seed, &[tag::EDGE_SPLIT]);
    order.shuffle(&mut rng);
    let n_val = (val_frac * m as f64).floor() as usize;
    let n_test = (test_frac * m as f64).floor() as usize;
    let mut out = client.clone();
    for (k, &e) in order.iter().enumerate() {
        out.edge_split[e] = if k < n_val {
            Split::Val
        } else if k < n_val + n_test {
            Split::Test
        } else {
            Split::Train
        };
    }
    Ok(out)
}
