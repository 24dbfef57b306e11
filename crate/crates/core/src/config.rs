//! Experiment configuration: the YAML schema, defaults, range checks and a
//! stable content hash.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiment::Benchmark;
use crate::federation::FedSettings;
use crate::graph::{SplitConfig, SynthParams};
use crate::llmguide::MockOracleProposer;
use crate::markers::{LossWeights, MarkerCounts};
use crate::privacy::DpConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub gnn: String,
    pub hidden: usize,
    pub umap_dim: usize,
    pub neighbors: usize,
    pub markers_pos: usize,
    pub markers_neg: usize,
    pub align_weight: f64,
    pub umap_weight: f64,
    pub kl_weight: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            gnn: "graphsage".into(),
            hidden: 256,
            umap_dim: 32,
            neighbors: 15,
            markers_pos: 8,
            markers_neg: 8,
            align_weight: 0.2,
            umap_weight: 1.0,
            kl_weight: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_pairs: usize,
    pub lr_gnn_umap: f64,
    /// Accepted for schema compatibility; there are no adapters to train.
    pub lr_adapter: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rounds: 50,
            local_epochs: 2,
            batch_pairs: 1024,
            lr_gnn_umap: 2e-3,
            lr_adapter: 5e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrivacyConfig {
    pub clip: f64,
    pub noise_sigma_dp: f64,
    pub sampling_rate: f64,
    pub delta: f64,
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        Self {
            clip: 1.0,
            noise_sigma_dp: 0.9,
            sampling_rate: 0.2,
            delta: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub use_temperature: bool,
    pub threshold_tau: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            use_temperature: true,
            threshold_tau: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationConfig {
    /// Participation rates of interest; a run uses `privacy.sampling_rate`
    /// unless overridden.
    pub client_sampling: Vec<f64>,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            client_sampling: vec![0.2, 0.5, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// `synth`, or a directory holding `edges.csv`, `features.csv`, ...
    pub source: String,
    pub n_nodes: usize,
    pub n_classes: usize,
    pub intra_p: f64,
    pub inter_p: f64,
    pub feature_dim: usize,
    pub feature_noise: f64,
    pub class_separation: f64,
    pub text_vocab: usize,
    pub text_len: usize,
    pub topic_prob: f64,
    pub n_clients: usize,
    pub label_skew_alpha: f64,
    pub fewshot_k: usize,
    pub coldstart_fraction: f64,
    pub edge_val: f64,
    pub edge_test: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        let b = Benchmark::default();
        Self {
            source: "synth".into(),
            n_nodes: b.synth.n_nodes,
            n_classes: b.synth.n_classes,
            intra_p: b.synth.intra_p,
            inter_p: b.synth.inter_p,
            feature_dim: b.synth.feature_dim,
            feature_noise: b.synth.feature_noise,
            class_separation: b.synth.class_separation,
            text_vocab: b.synth.text_vocab,
            text_len: b.synth.text_len,
            topic_prob: b.synth.topic_prob,
            n_clients: b.split.n_clients,
            label_skew_alpha: b.split.label_skew_alpha,
            fewshot_k: b.split.fewshot_k,
            coldstart_fraction: b.split.coldstart_fraction,
            edge_val: b.edge_val,
            edge_test: b.edge_test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposerConfig {
    pub precision: f64,
    pub skew: f64,
    pub edge_budget: usize,
    pub label_budget: usize,
    pub calibration_fraction: f64,
}

impl Default for ProposerConfig {
    fn default() -> Self {
        let p = MockOracleProposer::default();
        Self {
            precision: p.precision,
            skew: p.skew,
            edge_budget: p.edge_budget,
            label_budget: p.label_budget,
            calibration_fraction: p.calibration_fraction,
        }
    }
}

/// Simulator knobs that the model schema leaves open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub steps_per_epoch: usize,
    pub n_neg: usize,
    pub kl_samples: usize,
    pub marker_samples: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub sigma_kern: f64,
    /// Hidden widths of the UMAP encoder; empty means one layer of `model.hidden`.
    pub umap_hidden: Vec<usize>,
    /// Overrides `privacy.sampling_rate` as the participation probability.
    pub participation: Option<f64>,
    pub mrr_k: usize,
    /// `lgdumap` and/or `local_only`.
    pub methods: Vec<String>,
    pub proposer: ProposerConfig,
    /// Provenance timestamp; falls back to `SOURCE_DATE_EPOCH`, then the clock.
    pub timestamp: Option<String>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let f = FedSettings::default();
        Self {
            steps_per_epoch: f.steps_per_epoch,
            n_neg: f.n_neg,
            kl_samples: f.kl_samples,
            marker_samples: f.marker_samples,
            min_dist: f.min_dist,
            spread: f.spread,
            sigma_kern: f.sigma_kern,
            umap_hidden: Vec::new(),
            participation: None,
            mrr_k: f.mrr_k,
            methods: vec![METHOD_LGDUMAP.into(), METHOD_LOCAL.into()],
            proposer: ProposerConfig::default(),
            timestamp: None,
        }
    }
}

pub const METHOD_LGDUMAP: &str = "lgdumap";
pub const METHOD_LOCAL: &str = "local_only";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub privacy: PrivacyConfig,
    pub calibration: CalibrationConfig,
    pub federation: FederationConfig,
    pub data: DataConfig,
    pub seeds: Vec<u64>,
    pub output_dir: String,
    pub simulation: SimulationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            privacy: PrivacyConfig::default(),
            calibration: CalibrationConfig::default(),
            federation: FederationConfig::default(),
            data: DataConfig::default(),
            seeds: vec![1, 2, 3, 4, 5],
            output_dir: "runs".into(),
            simulation: SimulationConfig::default(),
        }
    }
}

fn range_err(key: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        msg: msg.into(),
    }
}

fn check(ok: bool, key: &str, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(range_err(key, msg))
    }
}

fn unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

fn nonneg(x: f64) -> bool {
    x >= 0.0 && x.is_finite()
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

impl ExperimentConfig {
    /// Parses YAML text; an empty document gives the defaults.
    pub fn from_yaml(text: &str) -> Result<Self> {
        let cfg: Self = if text.trim().is_empty() {
            Self::default()
        } else {
            serde_yaml::from_str(text).map_err(|e| {
                let key = e
                    .location()
                    .map_or_else(|| "<document>".to_string(), |l| format!("line {} column {}", l.line(), l.column()));
                range_err(&key, e.to_string())
            })?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            key: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::from_yaml(&text)
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("config serialises")
    }

    /// First 16 hex digits of the SHA-256 of the canonical YAML form, with
    /// `output_dir` left out so a run hashes the same wherever it is written.
    pub fn hash(&self) -> String {
        let canonical = Self { output_dir: String::new(), ..self.clone() };
        let digest = Sha256::digest(canonical.to_yaml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        check(m.gnn == "graphsage", "model.gnn", "only `graphsage` is supported")?;
        check(m.hidden >= 1, "model.hidden", "must be >= 1")?;
        check(m.umap_dim >= 1, "model.umap_dim", "must be >= 1")?;
        check(m.neighbors >= 1, "model.neighbors", "must be >= 1")?;
        check(m.markers_pos >= 1, "model.markers_pos", "must be >= 1")?;
        check(m.markers_neg >= 1, "model.markers_neg", "must be >= 1")?;
        check(nonneg(m.align_weight), "model.align_weight", "must be finite and >= 0")?;
        check(nonneg(m.umap_weight), "model.umap_weight", "must be finite and >= 0")?;
        check(nonneg(m.kl_weight), "model.kl_weight", "must be finite and >= 0")?;

        let t = &self.train;
        check(t.batch_pairs >= 1, "train.batch_pairs", "must be >= 1")?;
        check(positive(t.lr_gnn_umap), "train.lr_gnn_umap", "must be positive")?;
        check(positive(t.lr_adapter), "train.lr_adapter", "must be positive")?;

        let p = &self.privacy;
        check(positive(p.clip), "privacy.clip", "must be positive")?;
        check(nonneg(p.noise_sigma_dp), "privacy.noise_sigma_dp", "must be finite and >= 0")?;
        check(p.sampling_rate > 0.0 && p.sampling_rate <= 1.0, "privacy.sampling_rate", "must lie in (0, 1]")?;
        check(p.delta > 0.0 && p.delta < 1.0, "privacy.delta", "must lie in (0, 1)")?;

        check(unit(self.calibration.threshold_tau), "calibration.threshold_tau", "must lie in [0, 1]")?;
        for (i, &q) in self.federation.client_sampling.iter().enumerate() {
            check(q > 0.0 && q <= 1.0, &format!("federation.client_sampling[{i}]"), "must lie in (0, 1]")?;
        }

        let d = &self.data;
        check(!d.source.is_empty(), "data.source", "must be `synth` or a directory")?;
        check(d.n_classes >= 2, "data.n_classes", "must be >= 2")?;
        check(d.n_nodes >= d.n_classes, "data.n_nodes", "must be >= data.n_classes")?;
        check(unit(d.intra_p), "data.intra_p", "must lie in [0, 1]")?;
        check(unit(d.inter_p) && d.inter_p <= d.intra_p, "data.inter_p", "must lie in [0, data.intra_p]")?;
        check(d.feature_dim >= 1, "data.feature_dim", "must be >= 1")?;
        check(nonneg(d.feature_noise), "data.feature_noise", "must be finite and >= 0")?;
        check(nonneg(d.class_separation), "data.class_separation", "must be finite and >= 0")?;
        check(d.text_vocab > d.n_classes, "data.text_vocab", "must exceed data.n_classes")?;
        check(d.text_len >= 1, "data.text_len", "must be >= 1")?;
        check(unit(d.topic_prob), "data.topic_prob", "must lie in [0, 1]")?;
        check(d.n_clients >= 1, "data.n_clients", "must be >= 1")?;
        check(positive(d.label_skew_alpha), "data.label_skew_alpha", "must be positive")?;
        check(unit(d.coldstart_fraction), "data.coldstart_fraction", "must lie in [0, 1]")?;
        check(unit(d.edge_val) && unit(d.edge_test) && d.edge_val + d.edge_test <= 1.0, "data.edge_test", "edge_val + edge_test must lie in [0, 1]")?;

        check(!self.seeds.is_empty(), "seeds", "must list at least one seed")?;
        check(!self.output_dir.is_empty(), "output_dir", "must be a path")?;

        let s = &self.simulation;
        check(s.steps_per_epoch >= 1, "simulation.steps_per_epoch", "must be >= 1")?;
        check(s.kl_samples >= 1, "simulation.kl_samples", "must be >= 1")?;
        check(s.marker_samples >= 1, "simulation.marker_samples", "must be >= 1")?;
        check(positive(s.spread), "simulation.spread", "must be positive")?;
        check(s.min_dist >= 0.0 && s.min_dist < s.spread, "simulation.min_dist", "must lie in [0, spread)")?;
        check(positive(s.sigma_kern), "simulation.sigma_kern", "must be positive")?;
        check(s.umap_hidden.iter().all(|&h| h >= 1), "simulation.umap_hidden", "widths must be >= 1")?;
        if let Some(q) = s.participation {
            check(unit(q), "simulation.participation", "must lie in [0, 1]")?;
        }
        check(s.mrr_k >= 1, "simulation.mrr_k", "must be >= 1")?;
        check(!s.methods.is_empty(), "simulation.methods", "must name at least one method")?;
        for (i, name) in s.methods.iter().enumerate() {
            check(
                name == METHOD_LGDUMAP || name == METHOD_LOCAL,
                &format!("simulation.methods[{i}]"),
                "must be `lgdumap` or `local_only`",
            )?;
        }
        let pr = &s.proposer;
        check(pr.precision > 0.0 && pr.precision <= 1.0, "simulation.proposer.precision", "must lie in (0, 1]")?;
        check(positive(pr.skew), "simulation.proposer.skew", "must be positive")?;
        check((0.0..1.0).contains(&pr.calibration_fraction), "simulation.proposer.calibration_fraction", "must lie in [0, 1)")?;
        Ok(())
    }

    pub fn benchmark(&self) -> Benchmark {
        let d = &self.data;
        Benchmark {
            synth: SynthParams {
                n_nodes: d.n_nodes,
                n_classes: d.n_classes,
                intra_p: d.intra_p,
                inter_p: d.inter_p,
                feature_dim: d.feature_dim,
                text_vocab: d.text_vocab,
                seed: 0,
                feature_noise: d.feature_noise,
                class_separation: d.class_separation,
                text_len: d.text_len,
                topic_prob: d.topic_prob,
            },
            split: SplitConfig {
                n_clients: d.n_clients,
                label_skew_alpha: d.label_skew_alpha,
                fewshot_k: d.fewshot_k,
                coldstart_fraction: d.coldstart_fraction,
                seed: 0,
            },
            edge_val: d.edge_val,
            edge_test: d.edge_test,
        }
    }

    /// Simulation settings for one seed and method.
    pub fn settings(&self, seed: u64, method: &str) -> FedSettings {
        let m = &self.model;
        let s = &self.simulation;
        let p = &self.privacy;
        let fed = FedSettings {
            aggregate: true,
            use_proposals: true,
            gnn_hidden: m.hidden,
            umap_hidden: if s.umap_hidden.is_empty() { vec![m.hidden] } else { s.umap_hidden.clone() },
            umap_dim: m.umap_dim,
            neighbors: m.neighbors,
            counts: MarkerCounts {
                positive: m.markers_pos,
                negative: m.markers_neg,
            },
            sigma_kern: s.sigma_kern,
            weights: LossWeights {
                nll: 1.0,
                bce: 1.0,
                lambda: m.kl_weight,
                gamma: m.align_weight,
                eta: m.umap_weight,
            },
            rounds: self.train.rounds,
            local_epochs: self.train.local_epochs,
            steps_per_epoch: s.steps_per_epoch,
            batch_pairs: self.train.batch_pairs,
            lr: self.train.lr_gnn_umap,
            n_neg: s.n_neg,
            kl_samples: s.kl_samples,
            marker_samples: s.marker_samples,
            min_dist: s.min_dist,
            spread: s.spread,
            dp: DpConfig {
                clip: p.clip,
                noise_sigma_dp: p.noise_sigma_dp,
                delta: p.delta,
                sampling_rate: p.sampling_rate,
                rounds: self.train.rounds as u64,
            },
            participation: s.participation.unwrap_or(p.sampling_rate),
            use_temperature: self.calibration.use_temperature,
            tau: self.calibration.threshold_tau,
            proposer: MockOracleProposer {
                precision: s.proposer.precision,
                skew: s.proposer.skew,
                edge_budget: s.proposer.edge_budget,
                label_budget: s.proposer.label_budget,
                calibration_fraction: s.proposer.calibration_fraction,
                seed,
            },
            mrr_k: s.mrr_k,
            seed,
        };
        if method == METHOD_LOCAL {
            fed.local_only()
        } else {
            fed
        }
    }

    /// Provenance timestamp: the configured value, else `SOURCE_DATE_EPOCH`,
    /// else the current time (RFC 3339, UTC).
    pub fn timestamp(&self) -> String {
        if let Some(t) = &self.simulation.timestamp {
            return t.clone();
        }
        let secs = std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|v| v.trim().parse::<i64>().ok())
            .unwrap_or_else(|| chrono::Utc::now().timestamp());
        chrono::DateTime::from_timestamp(secs, 0)
            .unwrap_or_default()
            .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    }
}
