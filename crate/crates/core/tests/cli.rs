use std::fs;
use std::path::{Path, PathBuf};

use lgdumap::cli::{self, DP_SETTINGS};
use lgdumap::config::ExperimentConfig;
use lgdumap::graph::load_graph_dir;
use lgdumap::llmguide::TAU_SWEEP;
use lgdumap::Error;

const BASE: &str = include_str!("../../../configs/base.yaml");

fn tiny_config(out: &Path) -> ExperimentConfig {
    let yaml = format!(
        "model: {{hidden: 8, umap_dim: 8, neighbors: 5}}
train: {{rounds: 3, local_epochs: 1, batch_pairs: 64}}
privacy: {{sampling_rate: 1.0}}
data: {{n_nodes: 150, n_classes: 3, n_clients: 3, fewshot_k: 5, label_skew_alpha: 1.0}}
seeds: [1, 2]
output_dir: {}
simulation: {{steps_per_epoch: 2, kl_samples: 8, timestamp: \"2026-01-01T00:00:00Z\"}}
",
        out.display()
    );
    ExperimentConfig::from_yaml(&yaml).unwrap()
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(csv_files(&p));
        } else if p.extension().is_some_and(|e| e == "csv") {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn reference_snippet_parses_verbatim() {
    let cfg = ExperimentConfig::from_yaml(BASE).unwrap();
    assert_eq!(cfg.model.hidden, 256);
    assert_eq!(cfg.model.markers_pos + cfg.model.markers_neg, 16);
    assert_eq!(cfg.train.lr_gnn_umap, 2e-3);
    assert_eq!(cfg.privacy.noise_sigma_dp, 0.9);
    assert_eq!(cfg.calibration.threshold_tau, 0.8);
    assert_eq!(cfg.federation.client_sampling, vec![0.2, 0.5, 1.0]);
    assert_eq!(ExperimentConfig::from_yaml(&cfg.to_yaml()).unwrap(), cfg);
}

#[test]
fn train_is_bit_identical_and_stamps_every_row() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    cli::cmd_train(&tiny_config(&a)).unwrap();
    cli::cmd_train(&tiny_config(&b)).unwrap();

    let files = csv_files(&a);
    assert!(files.len() >= 2 * 2 * 8, "expected per-seed logs for both methods, got {}", files.len());
    let hash = tiny_config(&a).hash();
    for f in &files {
        let rel = f.strip_prefix(&a).unwrap();
        let text = fs::read_to_string(f).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("seed,config_hash,timestamp"), "{}", rel.display());
        for line in lines {
            let cols: Vec<&str> = line.splitn(4, ',').collect();
            assert!(!cols[0].is_empty(), "{}: missing seed", rel.display());
            assert_eq!(cols[1], hash, "{}", rel.display());
            assert_eq!(cols[2], "2026-01-01T00:00:00Z");
        }
        if rel.file_name().unwrap() != "timing.csv" {
            assert_eq!(text, fs::read_to_string(b.join(rel)).unwrap(), "{} differs between runs", rel.display());
        }
    }
    // nothing lands beside the output directory
    let mut top: Vec<_> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    top.sort();
    assert_eq!(top, vec!["a", "b"]);
}

#[test]
fn metrics_and_report_read_back_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = tiny_config(&out);
    let trained = cli::cmd_train(&cfg).unwrap();

    let recomputed = cli::cmd_metrics(&out).unwrap();
    assert_eq!(recomputed.len(), trained.len());
    for (method, seed, vals) in &recomputed {
        let s = &trained.iter().find(|t| &t.0 == method && t.1 == *seed).unwrap().2;
        let acc = vals.iter().find(|(k, _)| k == "accuracy").unwrap().1;
        assert!((acc - s.accuracy).abs() < 1e-12);
        let auc = vals.iter().find(|(k, _)| k == "attack_auroc").unwrap().1;
        assert!((auc - s.attack_auroc).abs() < 1e-12);
    }

    let report = cli::cmd_report(&out).unwrap();
    let taus: Vec<f64> = report.calibration.iter().map(|c| c.0).collect();
    assert_eq!(taus, TAU_SWEEP.to_vec());
    assert_eq!(report.fairness.len(), cfg.simulation.methods.len());
    assert_eq!(report.cost.len(), cfg.simulation.methods.len());
    let local = report.cost.iter().find(|c| c.0 == "local_only").unwrap();
    assert_eq!(local.1, 0.0);
    for name in ["report_methods.csv", "report_cost.csv", "report_calibration.csv", "report_fairness.csv"] {
        assert!(out.join(name).exists(), "{name}");
    }
}

#[test]
fn partition_writes_loadable_clients() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(&tmp.path().join("p"));
    cfg.seeds = vec![3];
    let dirs = cli::cmd_partition(&cfg).unwrap();
    assert_eq!(dirs.len(), 3);
    let built = cfg.benchmark().build(3).unwrap();
    for (d, g) in dirs.iter().zip(&built) {
        let back = load_graph_dir(d).unwrap();
        assert_eq!(back.origin, g.origin);
        assert_eq!(back.edges, g.edges);
        assert_eq!(back.labels, g.labels);
        assert_eq!(back.texts, g.texts);
        assert_eq!(back.node_split, g.node_split);
        assert_eq!(back.edge_split, g.edge_split);
        assert_eq!(back.cold_start, g.cold_start);
        // absent rows are NaN on both sides
        assert_eq!(format!("{:?}", back.features), format!("{:?}", g.features));
    }
}

#[test]
fn accountant_table_covers_every_setting_and_round() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(&tmp.path().join("acc"));
    cfg.privacy.sampling_rate = 0.2;
    cfg.train.rounds = 50;
    let rows = cli::cmd_accountant(&cfg).unwrap();
    assert_eq!(rows.len(), DP_SETTINGS.len() * 50);
    let last = |name: &str| rows.iter().find(|r| r.setting == name && r.round == 50).unwrap().epsilon;
    assert!(last("no_dp").is_infinite());
    assert!(last("dp_0.6") > last("dp_0.9") && last("dp_0.9") > last("dp_1.3"));
    assert!(tmp.path().join("acc/accountant.csv").exists());
}

#[test]
fn attack_reads_existing_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = tiny_config(&out);
    cli::cmd_train(&cfg).unwrap();
    let rows = cli::cmd_attack(&cfg, &[out.join("lgdumap"), out.join("local_only")]).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r.auroc.len(), 2);
        assert!(r.auroc.iter().all(|a| (0.0..=1.0).contains(a)));
    }
    assert_eq!(rows[1].epsilon, 0.0);
    assert!(out.join("attack.csv").exists());
}

#[test]
fn gradcheck_passes_and_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let rows = cli::cmd_gradcheck(&[1, 2], Some(tmp.path())).unwrap();
    assert!(rows.iter().all(|r| r.3), "{rows:?}");
    let text = fs::read_to_string(tmp.path().join("gradcheck.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + rows.len());
}

#[test]
fn exit_codes_split_validation_from_runtime() {
    let missing = ExperimentConfig::load(Path::new("/nonexistent/config.yaml")).unwrap_err();
    assert_eq!(cli::exit_code(&missing), 1);
    let unknown = ExperimentConfig::from_yaml("train: {roundz: 3}").unwrap_err();
    assert!(matches!(unknown, Error::Config { .. }));
    assert_eq!(cli::exit_code(&unknown), 1);
    let range = ExperimentConfig::from_yaml("privacy: {delta: 2.0}").unwrap_err();
    assert_eq!(cli::exit_code(&range), 1);
    assert_eq!(cli::exit_code(&Error::NoConvergence("x".into())), 2);
    assert_eq!(cli::exit_code(&Error::Io(std::io::Error::other("disk"))), 2);
    assert!(cli::cmd_metrics(Path::new("/nonexistent/run")).is_err());
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_lgdumap");
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.yaml");
    fs::write(&bad, "model: {hiden: 3}").unwrap();
    let status = std::process::Command::new(bin).args(["train", "--config"]).arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(1));
    let status = std::process::Command::new(bin)
        .args(["accountant", "--output-dir"])
        .arg(tmp.path().join("acc"))
        .args(["--participation", "0.5"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let text = fs::read_to_string(tmp.path().join("acc/accountant.csv")).unwrap();
    assert!(text.lines().nth(1).unwrap().contains(",0.5,"));
}
