//! Command-line plumbing: training runs, attack evaluation and the cost
//! benchmarks.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use rflpa_sim::{run_experiment, Aggregation, ExperimentConfig, Metrics, SimError};
use serde::Serialize;
use thiserror::Error;

pub mod bench;
pub mod verify;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Engine(#[from] rflpa_protocol::EngineError),
    #[error("bench: {0}")]
    Bench(String),
    #[error("verify: {0} check(s) failed")]
    Verify(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) | CliError::Sim(SimError::Config(_)) => "config",
            CliError::Sim(_) => "simulation",
            CliError::Engine(_) => "engine",
            CliError::Bench(_) => "bench",
            CliError::Verify(_) => "verify",
            CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) => "io",
        }
    }

    /// Single-line machine-readable form printed on failure.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub config_hash: String,
    pub seed: u64,
    pub iterations: usize,
    pub final_accuracy: Option<f64>,
    pub final_loss: Option<f64>,
    pub mean_ts_honest: Option<f64>,
    pub mean_ts_malicious: Option<f64>,
    pub aborted: usize,
}

impl TrainSummary {
    pub fn of(m: &Metrics) -> Self {
        TrainSummary {
            config_hash: m.config_hash.clone(),
            seed: m.seed,
            iterations: m.rows.len(),
            final_accuracy: m.final_accuracy(),
            final_loss: m.rows.last().map(|r| r.loss),
            mean_ts_honest: m.mean_ts_honest(),
            mean_ts_malicious: m.mean_ts_malicious(),
            aborted: m.rows.iter().filter(|r| r.aborted).count(),
        }
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, v)?;
    Ok(())
}

/// Writes `metrics.csv` and `summary.json` under `out`.
pub fn train(cfg: &ExperimentConfig, out: &Path) -> Result<TrainSummary, CliError> {
    fs::create_dir_all(out)?;
    let m = run_experiment(cfg)?;
    m.write_csv(BufWriter::new(File::create(out.join("metrics.csv"))?))?;
    let s = TrainSummary::of(&m);
    write_json(&out.join("summary.json"), &s)?;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackRow {
    pub config_hash: String,
    pub seed: u64,
    pub aggregation: Aggregation,
    pub attacked: bool,
    pub final_accuracy: Option<f64>,
    pub final_loss: Option<f64>,
    pub mean_ts_malicious: Option<f64>,
}

/// Runs each aggregation rule with and without the configured behaviours
/// on the same seeds; writes `attack_eval.csv`.
pub fn attack_eval(
    cfg: &ExperimentConfig,
    rules: &[Aggregation],
    out: &Path,
) -> Result<Vec<AttackRow>, CliError> {
    fs::create_dir_all(out)?;
    let hash = cfg.hash();
    let mut rows = Vec::new();
    for &aggregation in rules {
        for attacked in [false, true] {
            let mut c = cfg.clone();
            c.aggregation = aggregation;
            if !attacked {
                c.behaviors.clear();
            }
            let m = run_experiment(&c)?;
            tracing::info!(?aggregation, attacked, acc = ?m.final_accuracy(), "attack-eval run");
            rows.push(AttackRow {
                config_hash: hash.clone(),
                seed: cfg.seed,
                aggregation,
                attacked,
                final_accuracy: m.final_accuracy(),
                final_loss: m.rows.last().map(|r| r.loss),
                mean_ts_malicious: m.mean_ts_malicious(),
            });
        }
    }
    let mut w = csv::Writer::from_path(out.join("attack_eval.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

/// Writes cost records to `path` as CSV.
pub fn write_costs(rows: &[bench::CostRecord], path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
