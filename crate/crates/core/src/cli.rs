//! Batch commands behind the executable: partitioning, training, privacy
//! accounting, the membership attack, metric summaries, reports and the
//! gradient check. Every CSV row carries `seed,config_hash,timestamp`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{ExperimentConfig, METHOD_LGDUMAP};
use crate::error::{Error, Result};
use crate::experiment::{run_experiment, RunOutcome, RunSummary};
use crate::graph::{load_graph_dir, write_graph_dir, ClientGraph};
use crate::llmguide::{brier, ece, ProposalSlice, ECE_BINS, TAU_SWEEP};
use crate::markers::LossWeights;
use crate::model::{isolate_term, GradcheckInstance, TERMS};
use crate::privacy::{epsilon_for, mi_attack};
use crate::stats::{mean, sample_std};

/// Process exit code for an error: 1 for invalid input, 2 for runtime failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Parse { .. } | Error::InvalidGraph(_) | Error::InvalidArgument(_) => 1,
        _ => 2,
    }
}

/// Noise settings of the privacy table: no DP and three noise multipliers.
pub const DP_SETTINGS: [(&str, f64); 4] = [("no_dp", 0.0), ("dp_0.6", 0.6), ("dp_0.9", 0.9), ("dp_1.3", 1.3)];

const PROVENANCE: [&str; 3] = ["seed", "config_hash", "timestamp"];

/// CSV file whose rows all start with the provenance columns.
struct Log {
    w: csv::Writer<fs::File>,
    prov: [String; 3],
}

impl Log {
    fn create(path: &Path, seed: &str, cfg_hash: &str, ts: &str, header: &[&str]) -> Result<Self> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let full: Vec<&str> = PROVENANCE.iter().copied().chain(header.iter().copied()).collect();
        w.write_record(&full).map_err(csv_err)?;
        Ok(Self {
            w,
            prov: [seed.to_string(), cfg_hash.to_string(), ts.to_string()],
        })
    }

    fn row(&mut self, values: &[String]) -> Result<()> {
        let full: Vec<&str> = self.prov.iter().map(String::as_str).chain(values.iter().map(String::as_str)).collect();
        self.w.write_record(&full).map_err(csv_err)
    }

    fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid(format!("csv: {other:?}")),
    }
}

fn f(x: f64) -> String {
    format!("{x}")
}

macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$($x.to_string()),*] };
}

/// Input graphs for one seed: the synthetic benchmark, or a loaded graph
/// partitioned the same way.
pub fn client_graphs(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<ClientGraph>> {
    let bench = cfg.benchmark();
    if cfg.data.source == "synth" {
        bench.build(seed)
    } else {
        let graph = load_graph_dir(Path::new(&cfg.data.source))?;
        bench.build_from(&graph, seed)
    }
}

pub fn seed_dir(out: &Path, method: &str, seed: u64) -> PathBuf {
    out.join(method).join(format!("seed_{seed}"))
}

/// Writes every client's graph and splits under `output_dir/partition/seed_<s>/client_<k>`.
pub fn cmd_partition(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let out = Path::new(&cfg.output_dir);
    let mut dirs = Vec::new();
    for &seed in &cfg.seeds {
        for (k, g) in client_graphs(cfg, seed)?.iter().enumerate() {
            let dir = out.join("partition").join(format!("seed_{seed}")).join(format!("client_{k}"));
            write_graph_dir(g, &dir)?;
            dirs.push(dir);
        }
    }
    Ok(dirs)
}

/// Trains every configured method for every seed and writes the run logs.
/// Returns the outcomes keyed by method.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Vec<(String, u64, RunSummary)>> {
    let out = PathBuf::from(&cfg.output_dir);
    fs::create_dir_all(&out)?;
    let hash = cfg.hash();
    let ts = cfg.timestamp();
    fs::write(out.join("config.yaml"), cfg.to_yaml())?;
    let mut results = Vec::new();
    for method in &cfg.simulation.methods {
        for &seed in &cfg.seeds {
            log::info!("training {method}, seed {seed}");
            let graphs = client_graphs(cfg, seed)?;
            let run = run_experiment(graphs, cfg.settings(seed, method))?;
            write_run(&seed_dir(&out, method, seed), &run, seed, &hash, &ts)?;
            results.push((method.clone(), seed, run.summary));
        }
    }
    write_summary(&out.join("summary.csv"), &results, cfg, &hash, &ts)?;
    Ok(results)
}

fn write_run(dir: &Path, run: &RunOutcome, seed: u64, hash: &str, ts: &str) -> Result<()> {
    let sd = seed.to_string();
    let mut rounds = Log::create(
        &dir.join("rounds.csv"),
        &sd,
        hash,
        ts,
        &["round", "participants", "update_norm", "epsilon", "payload_bytes", "skipped"],
    )?;
    for r in &run.rounds {
        rounds.row(&row![r.round, r.participants.len(), f(r.update_norm), f(r.epsilon), r.payload_bytes, r.skipped])?;
    }
    rounds.finish()?;

    let mut clients = Log::create(
        &dir.join("clients.csv"),
        &sd,
        hash,
        ts,
        &[
            "round", "client", "steps", "loss", "nll", "bce", "kl", "align", "umap", "umap_only", "grad_norm",
            "delta_norm", "accepted_edges", "accepted_labels", "payload_bytes",
        ],
    )?;
    let mut timing = Log::create(&dir.join("timing.csv"), &sd, hash, ts, &["round", "client", "elapsed_ms"])?;
    for r in &run.rounds {
        for c in &r.clients {
            let l = &c.loss;
            clients.row(&row![
                c.round,
                c.client,
                c.steps,
                f(l.total),
                f(l.nll),
                f(l.bce),
                f(l.kl),
                f(l.align),
                f(l.umap),
                f(c.umap_only_loss),
                f(c.grad_norm),
                f(c.payload_delta_norm),
                c.accepted_edges,
                c.accepted_labels,
                c.payload_bytes,
            ])?;
            timing.row(&row![c.round, c.client, f(c.elapsed_ms)])?;
        }
    }
    clients.finish()?;
    timing.finish()?;

    let mut metrics = Log::create(
        &dir.join("metrics.csv"),
        &sd,
        hash,
        ts,
        &[
            "client", "n_test_nodes", "correct", "accuracy", "micro_f1", "n_test_edges", "mrr", "hits",
            "trustworthiness", "continuity", "cka", "procrustes", "cosine",
        ],
    )?;
    for e in &run.evals {
        metrics.row(&row![
            e.client,
            e.n_test_nodes,
            e.correct,
            f(e.accuracy),
            f(e.micro_f1),
            e.n_test_edges,
            f(e.mrr),
            f(e.hits),
            f(e.trustworthiness),
            f(e.continuity),
            f(e.cka),
            f(e.procrustes),
            f(e.cosine),
        ])?;
    }
    metrics.finish()?;

    let mut membership = Log::create(&dir.join("membership.csv"), &sd, hash, ts, &["client", "member", "nll"])?;
    for e in &run.evals {
        for &l in &e.member_nll {
            membership.row(&row![e.client, 1, f(l)])?;
        }
        for &l in &e.nonmember_nll {
            membership.row(&row![e.client, 0, f(l)])?;
        }
    }
    membership.finish()?;

    let mut proposals = Log::create(
        &dir.join("proposals.csv"),
        &sd,
        hash,
        ts,
        &["client", "slice", "kind", "target", "payload", "raw_logit", "confidence", "accepted", "correct"],
    )?;
    for c in &run.federation.clients {
        for p in &c.proposals {
            let base = p.csv_row();
            let mut cols: Vec<String> = vec![c.id.to_string(), format!("{:?}", p.slice).to_lowercase()];
            cols.extend(base.split(',').map(str::to_string));
            cols.push(p.correct.to_string());
            proposals.row(&cols)?;
        }
    }
    proposals.finish()?;

    write_calibration(&dir.join("calibration.csv"), run, &sd, hash, ts)?;

    let mut summary = Log::create(&dir.join("summary.csv"), &sd, hash, ts, &["metric", "value"])?;
    for (name, v) in summary_fields(&run.summary) {
        summary.row(&row![name, f(v)])?;
    }
    summary.finish()
}

/// Deterministic run-level fields (wall time is kept out; it lives in `timing.csv`).
pub fn summary_fields(s: &RunSummary) -> Vec<(&'static str, f64)> {
    vec![
        ("accuracy", s.accuracy),
        ("micro_f1", s.micro_f1),
        ("worst_client_accuracy", s.worst_client_accuracy),
        ("p10_accuracy", s.p10_accuracy),
        ("mrr", s.mrr),
        ("hits", s.hits),
        ("trustworthiness", s.trustworthiness),
        ("continuity", s.continuity),
        ("cka", s.cka),
        ("procrustes", s.procrustes),
        ("cosine", s.cosine),
        ("attack_auroc", s.attack_auroc),
        ("epsilon", s.epsilon),
        ("kb_per_round", s.kb_per_round),
        ("proposals_per_round", s.proposals_per_round),
    ]
}

/// Pooled calibration of the admission slice before (`T = 1`) and after
/// temperature scaling, and acceptance per threshold.
fn write_calibration(path: &Path, run: &RunOutcome, sd: &str, hash: &str, ts: &str) -> Result<()> {
    let (mut pre, mut post, mut outcome) = (Vec::new(), Vec::new(), Vec::new());
    for c in &run.federation.clients {
        for p in c.proposals.iter().filter(|p| p.slice == ProposalSlice::Admission) {
            pre.push(p.confidence_at(1.0));
            post.push(p.confidence_at(c.calibration.temperature));
            outcome.push(p.correct);
        }
    }
    let temps: Vec<f64> = run.federation.clients.iter().map(|c| c.calibration.temperature).collect();
    let mut log = Log::create(
        path,
        sd,
        hash,
        ts,
        &["tau", "candidates", "accepted", "precision", "ece_pre", "ece_post", "brier_pre", "brier_post", "temperature"],
    )?;
    let nan_if_empty = |r: Result<f64>| r.unwrap_or(f64::NAN);
    let (ece_pre, ece_post) = (nan_if_empty(ece(&pre, &outcome, ECE_BINS)), nan_if_empty(ece(&post, &outcome, ECE_BINS)));
    let (brier_pre, brier_post) = (nan_if_empty(brier(&pre, &outcome)), nan_if_empty(brier(&post, &outcome)));
    for tau in TAU_SWEEP {
        let accepted: Vec<bool> = post.iter().zip(&outcome).filter(|(c, _)| **c >= tau).map(|(_, o)| *o).collect();
        let precision = if accepted.is_empty() {
            f64::NAN
        } else {
            accepted.iter().filter(|&&o| o).count() as f64 / accepted.len() as f64
        };
        log.row(&row![
            f(tau),
            post.len(),
            accepted.len(),
            f(precision),
            f(ece_pre),
            f(ece_post),
            f(brier_pre),
            f(brier_post),
            f(mean(&temps)),
        ])?;
    }
    log.finish()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let v: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    match v.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (v[0], 0.0),
        _ => (mean(&v), sample_std(&v)),
    }
}

fn seeds_label(seeds: &[u64]) -> String {
    seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";")
}

fn write_summary(path: &Path, results: &[(String, u64, RunSummary)], cfg: &ExperimentConfig, hash: &str, ts: &str) -> Result<()> {
    let mut log = Log::create(path, &seeds_label(&cfg.seeds), hash, ts, &["method", "metric", "mean", "std", "n"])?;
    for method in &cfg.simulation.methods {
        let runs: Vec<&RunSummary> = results.iter().filter(|r| &r.0 == method).map(|r| &r.2).collect();
        if runs.is_empty() {
            continue;
        }
        for (k, (name, _)) in summary_fields(runs[0]).into_iter().enumerate() {
            let vals: Vec<f64> = runs.iter().map(|r| summary_fields(r)[k].1).collect();
            let (m, s) = mean_std(&vals);
            log.row(&row![method, name, f(m), f(s), vals.len()])?;
        }
    }
    log.finish()
}

/// One line of the accounting table.
#[derive(Debug, Clone, PartialEq)]
pub struct AccountantRow {
    pub setting: String,
    pub sigma: f64,
    pub round: u64,
    pub epsilon: f64,
}

/// Epsilon after every round for each noise setting, with `q` the
/// participation rate and `delta` from the config. No training.
pub fn cmd_accountant(cfg: &ExperimentConfig) -> Result<Vec<AccountantRow>> {
    let q = cfg.simulation.participation.unwrap_or(cfg.privacy.sampling_rate);
    let mut rows = Vec::new();
    for (name, sigma) in DP_SETTINGS {
        for t in 1..=cfg.train.rounds as u64 {
            rows.push(AccountantRow {
                setting: name.to_string(),
                sigma,
                round: t,
                epsilon: epsilon_for(q, sigma, t, cfg.privacy.delta),
            });
        }
    }
    let out = Path::new(&cfg.output_dir);
    let mut log = Log::create(
        &out.join("accountant.csv"),
        "",
        &cfg.hash(),
        &cfg.timestamp(),
        &["setting", "sigma", "q", "delta", "round", "epsilon"],
    )?;
    for r in &rows {
        log.row(&row![r.setting, f(r.sigma), f(q), f(cfg.privacy.delta), r.round, f(r.epsilon)])?;
    }
    log.finish()?;
    Ok(rows)
}

fn read_rows(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::invalid(format!("{}: {io}", path.display())),
        other => Error::invalid(format!("{}: {other:?}", path.display())),
    })?;
    let header = r.headers().map_err(csv_err)?.clone();
    let rows = r.records().collect::<std::result::Result<Vec<_>, _>>().map_err(csv_err)?;
    Ok((header, rows))
}

fn column(header: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::invalid(format!("{}: missing column `{name}`", path.display())))
}

fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::invalid(format!("{}: `{s}` is not a number", path.display())))
}

/// Seed directories (`seed_<n>`) under a method directory, sorted by seed.
pub fn seed_dirs(method_dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(method_dir)? {
        let p = entry?.path();
        if let Some(seed) = p.file_name().and_then(|n| n.to_str()).and_then(|n| n.strip_prefix("seed_")).and_then(|s| s.parse().ok()) {
            out.push((seed, p));
        }
    }
    out.sort();
    Ok(out)
}

/// Membership-attack AUROC of one finished seed directory.
pub fn attack_seed(dir: &Path) -> Result<f64> {
    let path = dir.join("membership.csv");
    let (h, rows) = read_rows(&path)?;
    let (m, l) = (column(&h, "member", &path)?, column(&h, "nll", &path)?);
    let (mut members, mut non) = (Vec::new(), Vec::new());
    for r in &rows {
        let v = parse_f64(&r[l], &path)?;
        if &r[m] == "1" {
            members.push(v);
        } else {
            non.push(v);
        }
    }
    mi_attack(&members, &non)
}

fn last_epsilon(dir: &Path) -> Result<f64> {
    let path = dir.join("rounds.csv");
    let (h, rows) = read_rows(&path)?;
    let e = column(&h, "epsilon", &path)?;
    rows.last().map_or(Ok(0.0), |r| parse_f64(&r[e], &path))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackRow {
    pub setting: String,
    pub epsilon: f64,
    pub auroc: Vec<f64>,
}

/// Attack AUROC per seed for each method directory (one per DP setting).
pub fn attack_runs(settings: &[(String, PathBuf)]) -> Result<Vec<AttackRow>> {
    settings
        .iter()
        .map(|(name, dir)| {
            let seeds = seed_dirs(dir)?;
            if seeds.is_empty() {
                return Err(Error::invalid(format!("{}: no seed_<n> directories", dir.display())));
            }
            Ok(AttackRow {
                setting: name.clone(),
                epsilon: last_epsilon(&seeds[0].1)?,
                auroc: seeds.iter().map(|(_, d)| attack_seed(d)).collect::<Result<_>>()?,
            })
        })
        .collect()
}

/// Trains LG-DUMAP under each DP setting into `output_dir/attack/<setting>`
/// and reports the attack. With `run_dirs` given, only evaluates those.
pub fn cmd_attack(cfg: &ExperimentConfig, run_dirs: &[PathBuf]) -> Result<Vec<AttackRow>> {
    let out = PathBuf::from(&cfg.output_dir);
    let settings: Vec<(String, PathBuf)> = if run_dirs.is_empty() {
        let mut v = Vec::new();
        for (name, sigma) in DP_SETTINGS {
            let mut c = cfg.clone();
            c.privacy.noise_sigma_dp = sigma;
            c.simulation.methods = vec![METHOD_LGDUMAP.into()];
            c.output_dir = out.join("attack").join(name).to_string_lossy().into_owned();
            cmd_train(&c)?;
            v.push((name.to_string(), Path::new(&c.output_dir).join(METHOD_LGDUMAP)));
        }
        v
    } else {
        run_dirs.iter().map(|d| (d.to_string_lossy().into_owned(), d.clone())).collect()
    };
    let rows = attack_runs(&settings)?;
    let mut log = Log::create(
        &out.join("attack.csv"),
        &seeds_label(&cfg.seeds),
        &cfg.hash(),
        &cfg.timestamp(),
        &["setting", "epsilon", "auroc_mean", "auroc_std", "n"],
    )?;
    for r in &rows {
        let (m, s) = mean_std(&r.auroc);
        log.row(&row![r.setting, f(r.epsilon), f(m), f(s), r.auroc.len()])?;
    }
    log.finish()?;
    Ok(rows)
}

/// Recomputes each seed's run-level metrics from its per-client and
/// membership CSVs into `<run>/metrics_summary.csv`.
pub fn cmd_metrics(run_dir: &Path) -> Result<Vec<(String, u64, Vec<(String, f64)>)>> {
    let mut out = Vec::new();
    for (method, dir) in method_dirs(run_dir)? {
        for (seed, sdir) in seed_dirs(&dir)? {
            let path = sdir.join("metrics.csv");
            let (h, rows) = read_rows(&path)?;
            let col = |n: &str| column(&h, n, &path);
            let (nt, cor, ne) = (col("n_test_nodes")?, col("correct")?, col("n_test_edges")?);
            let (mut nodes, mut correct, mut mrr_num, mut edges) = (0.0, 0.0, 0.0, 0.0);
            let mut accs = Vec::new();
            let (mrr_i, acc_i) = (col("mrr")?, col("accuracy")?);
            for r in &rows {
                let n = parse_f64(&r[nt], &path)?;
                nodes += n;
                correct += parse_f64(&r[cor], &path)?;
                let m = parse_f64(&r[mrr_i], &path)?;
                let e = parse_f64(&r[ne], &path)?;
                if m.is_finite() {
                    mrr_num += m * e;
                    edges += e;
                }
                let a = parse_f64(&r[acc_i], &path)?;
                if a.is_finite() {
                    accs.push(a);
                }
            }
            let vals = vec![
                ("accuracy".to_string(), if nodes > 0.0 { correct / nodes } else { f64::NAN }),
                ("mrr".to_string(), if edges > 0.0 { mrr_num / edges } else { f64::NAN }),
                ("worst_client_accuracy".to_string(), accs.iter().copied().fold(f64::NAN, f64::min)),
                ("p10_accuracy".to_string(), if accs.is_empty() { f64::NAN } else { crate::stats::quantile(&accs, 0.1) }),
                ("attack_auroc".to_string(), attack_seed(&sdir).unwrap_or(f64::NAN)),
            ];
            let (_, first) = read_rows(&sdir.join("rounds.csv"))?;
            let hash = first.first().map_or(String::new(), |r| r[1].to_string());
            let ts = first.first().map_or(String::new(), |r| r[2].to_string());
            let mut log = Log::create(&sdir.join("metrics_summary.csv"), &seed.to_string(), &hash, &ts, &["metric", "value"])?;
            for (k, v) in &vals {
                log.row(&row![k, f(*v)])?;
            }
            log.finish()?;
            out.push((method.clone(), seed, vals));
        }
    }
    Ok(out)
}

fn method_dirs(run_dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(run_dir)? {
        let p = entry?.path();
        if p.is_dir() {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            if !seed_dirs(&p)?.is_empty() {
                out.push((name, p));
            }
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::invalid(format!("{}: no method directories with seed runs", run_dir.display())));
    }
    Ok(out)
}

fn summary_map(dir: &Path) -> Result<Vec<(String, f64)>> {
    let path = dir.join("summary.csv");
    let (h, rows) = read_rows(&path)?;
    let (m, v) = (column(&h, "metric", &path)?, column(&h, "value", &path)?);
    rows.iter().map(|r| Ok((r[m].to_string(), parse_f64(&r[v], &path)?))).collect()
}

/// Rendered report tables, also written as `report_*.csv` in the run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// (method, metric, mean, std)
    pub methods: Vec<(String, String, f64, f64)>,
    /// (method, KB per round, ms per round, proposals per round, payload bytes per round)
    pub cost: Vec<(String, f64, f64, f64, f64)>,
    /// (tau, accepted mean, precision mean, ece_pre, ece_post, brier_pre, brier_post)
    pub calibration: Vec<(f64, f64, f64, f64, f64, f64, f64)>,
    /// (method, worst-client mean, worst-client std, p10 mean, p10 std)
    pub fairness: Vec<(String, f64, f64, f64, f64)>,
}

pub fn cmd_report(run_dir: &Path) -> Result<Report> {
    let mut report = Report {
        methods: Vec::new(),
        cost: Vec::new(),
        calibration: Vec::new(),
        fairness: Vec::new(),
    };
    let mut cal_rows: Vec<Vec<f64>> = Vec::new();
    for (method, dir) in method_dirs(run_dir)? {
        let seeds = seed_dirs(&dir)?;
        let maps: Vec<Vec<(String, f64)>> = seeds.iter().map(|(_, d)| summary_map(d)).collect::<Result<_>>()?;
        let get = |name: &str| -> Vec<f64> {
            maps.iter().filter_map(|m| m.iter().find(|(k, _)| k == name).map(|(_, v)| *v)).collect()
        };
        for (name, _) in &maps[0] {
            let (m, s) = mean_std(&get(name));
            report.methods.push((method.clone(), name.clone(), m, s));
        }
        let (w, ws) = mean_std(&get("worst_client_accuracy"));
        let (p, ps) = mean_std(&get("p10_accuracy"));
        report.fairness.push((method.clone(), w, ws, p, ps));

        let (mut ms, mut bytes) = (Vec::new(), Vec::new());
        for (_, d) in &seeds {
            let path = d.join("timing.csv");
            let (h, rows) = read_rows(&path)?;
            let (ri, ei) = (column(&h, "round", &path)?, column(&h, "elapsed_ms", &path)?);
            let mut per_round: std::collections::BTreeMap<String, f64> = Default::default();
            for r in &rows {
                let e = parse_f64(&r[ei], &path)?;
                let slot = per_round.entry(r[ri].to_string()).or_insert(0.0);
                *slot = slot.max(e);
            }
            let path = d.join("rounds.csv");
            let (h, rows) = read_rows(&path)?;
            let bi = column(&h, "payload_bytes", &path)?;
            let total: f64 = rows.iter().map(|r| parse_f64(&r[bi], &path)).sum::<Result<f64>>()?;
            let n_rounds = rows.len().max(1) as f64;
            ms.push(per_round.values().sum::<f64>() / n_rounds);
            bytes.push(total / n_rounds);
        }
        report.cost.push((
            method.clone(),
            mean_std(&get("kb_per_round")).0,
            mean_std(&ms).0,
            mean_std(&get("proposals_per_round")).0,
            mean_std(&bytes).0,
        ));

        if method == METHOD_LGDUMAP {
            for (_, d) in &seeds {
                let path = d.join("calibration.csv");
                let (h, rows) = read_rows(&path)?;
                let cols: Vec<usize> = ["tau", "accepted", "precision", "ece_pre", "ece_post", "brier_pre", "brier_post"]
                    .iter()
                    .map(|n| column(&h, n, &path))
                    .collect::<Result<_>>()?;
                for r in &rows {
                    cal_rows.push(cols.iter().map(|&c| parse_f64(&r[c], &path)).collect::<Result<_>>()?);
                }
            }
        }
    }
    for tau in TAU_SWEEP {
        let rows: Vec<&Vec<f64>> = cal_rows.iter().filter(|r| (r[0] - tau).abs() < 1e-12).collect();
        let col = |k: usize| mean_std(&rows.iter().map(|r| r[k]).collect::<Vec<_>>()).0;
        report.calibration.push((tau, col(1), col(2), col(3), col(4), col(5), col(6)));
    }
    write_report(run_dir, &report)?;
    Ok(report)
}

fn write_report(dir: &Path, r: &Report) -> Result<()> {
    let (hash, ts) = provenance_of(dir);
    let mut log = Log::create(&dir.join("report_methods.csv"), "all", &hash, &ts, &["method", "metric", "mean", "std"])?;
    for (m, k, mean, std) in &r.methods {
        log.row(&row![m, k, f(*mean), f(*std)])?;
    }
    log.finish()?;
    let mut log = Log::create(
        &dir.join("report_cost.csv"),
        "all",
        &hash,
        &ts,
        &["method", "kb_per_round", "ms_per_round", "proposals_per_round", "payload_bytes_per_round"],
    )?;
    for (m, kb, ms, props, bytes) in &r.cost {
        log.row(&row![m, f(*kb), f(*ms), f(*props), f(*bytes)])?;
    }
    log.finish()?;
    let mut log = Log::create(
        &dir.join("report_calibration.csv"),
        "all",
        &hash,
        &ts,
        &["tau", "accepted", "precision", "ece_pre", "ece_post", "brier_pre", "brier_post"],
    )?;
    for c in &r.calibration {
        log.row(&row![f(c.0), f(c.1), f(c.2), f(c.3), f(c.4), f(c.5), f(c.6)])?;
    }
    log.finish()?;
    let mut log = Log::create(
        &dir.join("report_fairness.csv"),
        "all",
        &hash,
        &ts,
        &["method", "worst_client_mean", "worst_client_std", "p10_mean", "p10_std"],
    )?;
    for (m, w, ws, p, ps) in &r.fairness {
        log.row(&row![m, f(*w), f(*ws), f(*p), f(*ps)])?;
    }
    log.finish()
}

fn provenance_of(dir: &Path) -> (String, String) {
    read_rows(&dir.join("summary.csv"))
        .ok()
        .and_then(|(_, rows)| rows.first().map(|r| (r[1].to_string(), r[2].to_string())))
        .unwrap_or_default()
}

/// Finite-difference check of every loss term on a random 6-node instance per seed.
pub fn cmd_gradcheck(seeds: &[u64], out: Option<&Path>) -> Result<Vec<(u64, String, f64, bool)>> {
    let mut rows = Vec::new();
    for &seed in seeds {
        let inst = GradcheckInstance::random(seed)?;
        for term in TERMS {
            let w: LossWeights = isolate_term(term).expect("known term");
            let rep = inst.check(w)?;
            rows.push((seed, term.to_string(), rep.max_rel_err, rep.passed));
        }
    }
    if let Some(dir) = out {
        let mut log = Log::create(&dir.join("gradcheck.csv"), &seeds_label(seeds), "", "", &["seed", "term", "max_rel_err", "passed"])?;
        for (s, t, e, p) in &rows {
            log.row(&row![s, t, f(*e), p])?;
        }
        log.finish()?;
    }
    Ok(rows)
}
