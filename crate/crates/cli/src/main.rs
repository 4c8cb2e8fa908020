use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rflpa_cli::bench::{bench_comm, bench_comp, BenchConfig};
use rflpa_cli::{attack_eval, train, verify, write_costs, CliError};
use rflpa_core::vss::Backend;
use rflpa_protocol::CryptoMode;
use rflpa_sim::{Aggregation, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "rflpa",
    version,
    about = "Robust federated learning with packed secure aggregation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Overrides the seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Cryptography mode: real or fast-sim.
    #[arg(long, global = true)]
    backend: Option<CryptoMode>,
    /// Commitment scheme: feldman or kzg.
    #[arg(long, global = true)]
    vss: Option<Backend>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Trains one configuration and writes per-iteration metrics.
    Train,
    /// Exact per-round byte counts, packed against unpacked.
    BenchComm,
    /// Wall-clock per round and role, packed against unpacked.
    BenchComp,
    /// Runs several aggregation rules with and without the attackers.
    AttackEval {
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "rflpa,fedavg,trimmed_mean,plaintext_fltrust"
        )]
        rules: Vec<String>,
    },
    /// Runs the invariant suite.
    Verify,
}

fn experiment(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config: an experiment config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(b) = cli.backend {
        cfg.protocol.crypto = b;
    }
    if let Some(v) = cli.vss {
        cfg.protocol.backend = v;
    }
    Ok(cfg)
}

fn bench_config(cli: &Cli) -> Result<BenchConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => BenchConfig::from_toml(&std::fs::read_to_string(p)?)?,
        None => BenchConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(b) = cli.backend {
        cfg.crypto = b;
    }
    if let Some(v) = cli.vss {
        cfg.vss = v;
    }
    Ok(cfg)
}

fn out_path(cfg_out: Option<&Path>, cli: &Cli, name: &str) -> PathBuf {
    cfg_out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cli.out.clone())
        .join(name)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.cmd {
        Cmd::Train => {
            let cfg = experiment(cli)?;
            let s = train(&cfg, &cli.out)?;
            println!("{}", serde_json::to_string(&s)?);
        }
        Cmd::BenchComm => {
            let cfg = bench_config(cli)?;
            let rows = bench_comm(&cfg);
            let path = out_path(cfg.out.as_deref(), cli, "bench_comm.csv");
            write_costs(&rows, &path)?;
            println!(
                "{}",
                serde_json::json!({"config_hash": cfg.hash(), "seed": cfg.seed, "rows": rows.len(), "path": path})
            );
        }
        Cmd::BenchComp => {
            let cfg = bench_config(cli)?;
            let rows = bench_comp(&cfg)?;
            let path = out_path(cfg.out.as_deref(), cli, "bench_comp.csv");
            write_costs(&rows, &path)?;
            println!(
                "{}",
                serde_json::json!({"config_hash": cfg.hash(), "seed": cfg.seed, "rows": rows.len(), "path": path})
            );
        }
        Cmd::AttackEval { rules } => {
            let cfg = experiment(cli)?;
            let rules = rules
                .iter()
                .map(|r| {
                    serde_json::from_value::<Aggregation>(serde_json::Value::String(r.clone()))
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Config(format!("rules: {e}")))?;
            let rows = attack_eval(&cfg, &rules, &cli.out)?;
            for r in rows {
                println!("{}", serde_json::to_string(&r)?);
            }
        }
        Cmd::Verify => {
            let checks = verify::run(cli.seed.unwrap_or(0));
            let failed = checks.iter().filter(|c| !c.passed).count();
            for c in &checks {
                println!("{}", serde_json::to_string(c)?);
            }
            if failed > 0 {
                return Err(CliError::Verify(failed));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            println!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
