use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lgdumap::cli;
use lgdumap::config::ExperimentConfig;
use lgdumap::{Error, Result};

#[derive(Parser)]
#[command(name = "lgdumap", version, about = "Federated graph UMAP simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// YAML experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated seeds, overriding the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Client participation rate per round, overriding the config.
    #[arg(long)]
    participation: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(o) = &self.output_dir {
            cfg.output_dir = o.to_string_lossy().into_owned();
        }
        if let Some(q) = self.participation {
            cfg.simulation.participation = Some(q);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Partition the graph into clients and write them out.
    Partition(Common),
    /// Train every configured method for every seed.
    Train(Common),
    /// Tabulate epsilon per round for each noise setting.
    Accountant(Common),
    /// Membership-inference attack on trained runs.
    Attack {
        #[command(flatten)]
        common: Common,
        /// Method directory holding `seed_<n>` runs; repeatable. Without it the
        /// DP sweep is trained first.
        #[arg(long)]
        run_dir: Vec<PathBuf>,
    },
    /// Recompute run-level metrics from per-client logs.
    Metrics {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Method, cost, calibration and fairness tables.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Finite-difference gradient check of every loss term.
    Gradcheck {
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Partition(c) => {
            let dirs = cli::cmd_partition(&c.load()?)?;
            println!("wrote {} client directories", dirs.len());
        }
        Command::Train(c) => {
            let cfg = c.load()?;
            for (method, seed, s) in cli::cmd_train(&cfg)? {
                println!(
                    "{method} seed {seed}: accuracy {:.4} mrr {:.4} trustworthiness {:.4} epsilon {:.3}",
                    s.accuracy, s.mrr, s.trustworthiness, s.epsilon
                );
            }
        }
        Command::Accountant(c) => {
            let cfg = c.load()?;
            let rows = cli::cmd_accountant(&cfg)?;
            let last = cfg.train.rounds as u64;
            for r in rows.iter().filter(|r| r.round == last) {
                println!("{:<8} sigma {:<4} epsilon after {last} rounds: {:.3}", r.setting, r.sigma, r.epsilon);
            }
        }
        Command::Attack { common, run_dir } => {
            for r in cli::cmd_attack(&common.load()?, &run_dir)? {
                let m = r.auroc.iter().sum::<f64>() / r.auroc.len() as f64;
                println!("{}: epsilon {:.3} auroc {:.4}", r.setting, r.epsilon, m);
            }
        }
        Command::Metrics { run_dir } => {
            for (method, seed, vals) in cli::cmd_metrics(&run_dir)? {
                let line: Vec<String> = vals.iter().map(|(k, v)| format!("{k} {v:.4}")).collect();
                println!("{method} seed {seed}: {}", line.join(", "));
            }
        }
        Command::Report { run_dir } => {
            let r = cli::cmd_report(&run_dir)?;
            for (m, k, mean, std) in &r.methods {
                println!("{m:<12} {k:<24} {mean:.4} ± {std:.4}");
            }
            for (m, kb, ms, props, _) in &r.cost {
                println!("{m:<12} {kb:.3} KB/round, {ms:.1} ms/round, {props:.1} proposals/round");
            }
            for c in &r.calibration {
                println!("tau {:.1}: accepted {:.1}, precision {:.3}, ECE {:.4} -> {:.4}", c.0, c.1, c.2, c.3, c.4);
            }
        }
        Command::Gradcheck { seeds, output_dir } => {
            let rows = cli::cmd_gradcheck(&seeds, output_dir.as_deref())?;
            let mut failed = 0;
            for (seed, term, err, ok) in &rows {
                println!("seed {seed} {term:<6} max rel err {err:.2e} {}", if *ok { "ok" } else { "FAIL" });
                failed += usize::from(!ok);
            }
            if failed > 0 {
                return Err(Error::NoConvergence(format!("{failed} gradient checks failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
