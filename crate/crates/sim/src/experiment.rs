//! Training runs: workload, behaviours, aggregation rule, metrics.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rflpa_core::vss::Backend;
use rflpa_core::Exec;
use rflpa_protocol::round::derive_seed;
use rflpa_protocol::wire::SERVER;
use rflpa_protocol::{CryptoMode, Engine, ProtocolConfig};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::attack::{gradient_manipulation, label_flip, ClientBehavior};
use crate::baseline::{fedavg, fltrust, trimmed_mean};
use crate::data::{federate, Dataset, Federation, SyntheticTask};
use crate::model::{Classifier, Quadratic};
use crate::SimError;

mod as_str {
    use super::*;

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskConfig {
    Blobs(SyntheticTask),
    Csv {
        path: PathBuf,
        seed: u64,
        clients: usize,
        root_size: usize,
        #[serde(default)]
        test_size: usize,
        #[serde(default)]
        dirichlet_alpha: Option<f64>,
    },
    Quadratic {
        seed: u64,
        dim: usize,
        clients: usize,
        #[serde(default = "one")]
        mu: f64,
        #[serde(default = "two")]
        l: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

impl TaskConfig {
    pub fn clients(&self) -> usize {
        match self {
            TaskConfig::Blobs(t) => t.clients,
            TaskConfig::Csv { clients, .. } | TaskConfig::Quadratic { clients, .. } => *clients,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Rflpa,
    UnpackedRflpa,
    Fedavg,
    PlaintextFltrust,
    TrimmedMean,
}

impl Aggregation {
    pub fn is_secure(self) -> bool {
        matches!(self, Aggregation::Rflpa | Aggregation::UnpackedRflpa)
    }
}

/// Optional overrides of the paper-rule protocol parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolOverrides {
    pub d: Option<usize>,
    pub l: Option<usize>,
    pub p: Option<usize>,
    pub threshold: Option<usize>,
    pub corrupt: Option<usize>,
    pub scale: Option<u64>,
    pub max_norm: Option<f64>,
    #[serde(with = "as_str")]
    pub backend: Backend,
    #[serde(with = "as_str")]
    pub crypto: CryptoMode,
    pub sequential: bool,
}

impl Default for ProtocolOverrides {
    fn default() -> Self {
        ProtocolOverrides {
            d: None,
            l: None,
            p: None,
            threshold: None,
            corrupt: None,
            scale: None,
            max_norm: None,
            backend: Backend::Feldman,
            crypto: CryptoMode::Real,
            sequential: false,
        }
    }
}

impl ProtocolOverrides {
    pub fn apply(&self, n: usize, m: usize, unpacked: bool) -> ProtocolConfig {
        let mut c = ProtocolConfig::paper_rule(n, m);
        c.d = self.d.unwrap_or(c.d);
        c.l = self.l.unwrap_or(c.l);
        c.p = self.p.unwrap_or(c.p);
        c.threshold = self.threshold.unwrap_or(c.threshold);
        c.corrupt = self.corrupt.unwrap_or(c.corrupt);
        c.field.scale = self.scale.unwrap_or(c.field.scale);
        c.field.max_norm = self.max_norm.unwrap_or(c.field.max_norm);
        c.vss = self.backend;
        c.crypto = self.crypto;
        c.exec = if self.sequential {
            Exec::Sequential
        } else {
            Exec::Parallel
        };
        if unpacked {
            c = c.unpacked();
        }
        c
    }
}

/// A share of the clients with one behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorSpec {
    pub behavior: ClientBehavior,
    /// Fraction of N; the count is rounded down.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub aggregation: Aggregation,
    pub task: TaskConfig,
    #[serde(default)]
    pub behaviors: Vec<BehaviorSpec>,
    #[serde(default)]
    pub protocol: ProtocolOverrides,
    /// Trimmed-mean cut per side.
    #[serde(default = "default_trim")]
    pub trim_fraction: f64,
    /// Redraw the Dirichlet allocation every this many iterations.
    #[serde(default)]
    pub redraw_every: Option<usize>,
}

fn default_trim() -> f64 {
    0.1
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let c: ExperimentConfig =
            toml::from_str(text).map_err(|e| SimError::Config(e.message().to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Hex SHA-256 prefix of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(json)[..8])
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |f: &str, why: String| Err(SimError::Config(format!("{f}: {why}")));
        if self.iterations == 0 {
            return bad("iterations", "must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(
                "learning_rate",
                format!("must be positive, got {}", self.learning_rate),
            );
        }
        if !(0.0..0.5).contains(&self.trim_fraction) {
            return bad("trim_fraction", "must lie in [0, 0.5)".into());
        }
        match &self.task {
            TaskConfig::Blobs(t) => t.validate()?,
            TaskConfig::Csv {
                root_size, clients, ..
            } => {
                if *root_size == 0 {
                    return bad("task.root_size", "the server needs a root dataset".into());
                }
                if *clients == 0 {
                    return bad("task.clients", "must be positive".into());
                }
            }
            TaskConfig::Quadratic {
                dim,
                clients,
                mu,
                l,
                ..
            } => {
                if *dim == 0 || *clients == 0 {
                    return bad("task", "dim and clients must be positive".into());
                }
                if !(*mu > 0.0 && mu <= l) {
                    return bad("task.mu", format!("need 0 < mu <= l, got mu={mu}, l={l}"));
                }
            }
        }
        let mut total = 0.0;
        for b in &self.behaviors {
            if !(0.0..=1.0).contains(&b.fraction) {
                return bad(
                    "behaviors.fraction",
                    format!("{} outside [0, 1]", b.fraction),
                );
            }
            if let Some(r) = b.behavior.dropout_round() {
                if !(1..=4).contains(&r) {
                    return bad(
                        "behaviors.round",
                        format!("dropout round {r} outside 1..=4"),
                    );
                }
            }
            if b.behavior == ClientBehavior::LabelFlip
                && matches!(self.task, TaskConfig::Quadratic { .. })
            {
                return bad(
                    "behaviors",
                    "label flipping needs a classification task".into(),
                );
            }
            total += b.fraction;
        }
        if total > 1.0 + 1e-12 {
            return bad("behaviors", format!("fractions sum to {total} > 1"));
        }
        if self.aggregation.is_secure() {
            let n = self.task.clients();
            let pc = self
                .protocol
                .apply(n, 1, self.aggregation == Aggregation::UnpackedRflpa);
            pc.validate()
                .map_err(|e| SimError::Config(format!("protocol.{e}")))?;
            let behaviors = self.assign(n);
            let share_faults = behaviors
                .iter()
                .filter(|b| b.fault() != rflpa_protocol::Fault::Honest)
                .count();
            if share_faults > pc.corrupt {
                return bad(
                    "behaviors",
                    format!(
                        "{share_faults} share-level attackers exceed A = {}",
                        pc.corrupt
                    ),
                );
            }
            let drops = behaviors
                .iter()
                .filter(|b| b.dropout_round().is_some())
                .count();
            if drops > n - pc.threshold {
                return bad(
                    "behaviors",
                    format!("{drops} dropouts exceed N - K = {}", n - pc.threshold),
                );
            }
        }
        Ok(())
    }

    /// One behaviour per client, placed by a seeded shuffle.
    pub fn assign(&self, n: usize) -> Vec<ClientBehavior> {
        let mut ids: Vec<usize> = (0..n).collect();
        ids.shuffle(&mut ChaCha20Rng::seed_from_u64(derive_seed(
            self.seed, 0, 0xbe,
        )));
        let mut out = vec![ClientBehavior::Honest; n];
        let mut next = ids.into_iter();
        for b in &self.behaviors {
            let k = (b.fraction * n as f64 + 1e-9).floor() as usize;
            for i in next.by_ref().take(k) {
                out[i] = b.behavior;
            }
        }
        out
    }
}

enum Workload {
    Classify {
        model: Classifier,
        base: Federation,
        live: Federation,
    },
    Quadratic(Quadratic),
}

impl Workload {
    fn build(task: &TaskConfig) -> Result<Self, SimError> {
        match task {
            TaskConfig::Blobs(t) => {
                let fed = t.generate()?;
                Ok(Workload::Classify {
                    model: Classifier::for_task(t.features, t.classes),
                    live: fed.clone(),
                    base: fed,
                })
            }
            TaskConfig::Csv {
                path,
                seed,
                clients,
                root_size,
                test_size,
                dirichlet_alpha,
            } => {
                let data = Dataset::from_csv(std::fs::File::open(path)?)?;
                let mut rng = ChaCha20Rng::seed_from_u64(*seed);
                let fed = federate(
                    &data,
                    *clients,
                    *root_size,
                    *test_size,
                    *dirichlet_alpha,
                    &mut rng,
                )?;
                Ok(Workload::Classify {
                    model: Classifier::for_task(data.dim, data.classes().max(2)),
                    live: fed.clone(),
                    base: fed,
                })
            }
            TaskConfig::Quadratic {
                seed,
                dim,
                clients,
                mu,
                l,
            } => Ok(Workload::Quadratic(Quadratic::generate(
                *dim, *clients, *mu, *l, *seed,
            ))),
        }
    }

    fn dim(&self) -> usize {
        match self {
            Workload::Classify { model, .. } => model.dim(),
            Workload::Quadratic(q) => q.dim(),
        }
    }

    fn classes(&self) -> usize {
        match self {
            Workload::Classify {
                model: Classifier::Logistic(_),
                ..
            } => 2,
            Workload::Classify {
                model: Classifier::Softmax(s),
                ..
            } => s.classes,
            Workload::Quadratic(_) => 0,
        }
    }

    /// Rebuilds the live shards from the base ones, flipping labels where asked.
    fn refresh(&mut self, flipped: &[bool]) -> Result<(), SimError> {
        let classes = self.classes();
        if let Workload::Classify { base, live, .. } = self {
            *live = base.clone();
            for (c, &f) in live.clients.iter_mut().zip(flipped) {
                if f {
                    for y in c.y.iter_mut() {
                        *y = label_flip(*y, classes)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn client_gradient(&self, i: usize, w: &[f64]) -> Vec<f64> {
        match self {
            Workload::Classify { model, live, .. } => model.gradient(w, &live.clients[i]),
            Workload::Quadratic(q) => q.client_gradient(i, w),
        }
    }

    fn root_gradient(&self, w: &[f64]) -> Vec<f64> {
        match self {
            Workload::Classify { model, live, .. } => model.gradient(w, &live.root),
            Workload::Quadratic(q) => q.root_gradient(w),
        }
    }

    fn evaluate(&self, w: &[f64]) -> (Option<f64>, f64, Option<f64>) {
        match self {
            Workload::Classify { model, live, .. } => (
                Some(model.accuracy(w, &live.test)),
                model.loss(w, &live.test),
                None,
            ),
            Workload::Quadratic(q) => (None, q.loss(w), Some(q.distance(w))),
        }
    }
}

/// One row per iteration, evaluated after the update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRow {
    pub config_hash: String,
    pub seed: u64,
    pub iteration: usize,
    pub accuracy: Option<f64>,
    pub loss: f64,
    pub distance: Option<f64>,
    pub ts_honest: Option<f64>,
    pub ts_malicious: Option<f64>,
    pub aborted: bool,
    pub excluded: usize,
    pub client_bytes: Option<f64>,
    pub server_bytes: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub config_hash: String,
    pub seed: u64,
    pub behaviors: Vec<ClientBehavior>,
    pub rows: Vec<IterationRow>,
    /// Every trust score seen, split by ground truth.
    pub ts_honest: Vec<f64>,
    pub ts_malicious: Vec<f64>,
    pub final_model: Vec<f64>,
    /// Accuracy (or loss for regression tasks) before any update.
    pub initial: (Option<f64>, f64),
    /// Per-iteration wall clock for protocol rounds 0..=4; not part of the CSV.
    #[serde(skip)]
    pub round_secs: Vec<[f64; 5]>,
}

impl Metrics {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SimError> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r).map_err(|e| SimError::Data(e.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.accuracy)
    }

    pub fn mean_ts_malicious(&self) -> Option<f64> {
        mean(&self.ts_malicious)
    }

    pub fn mean_ts_honest(&self) -> Option<f64> {
        mean(&self.ts_honest)
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Runs `cfg.iterations` rounds of training. Protocol aborts skip the
/// update and are recorded, not returned as errors.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Metrics, SimError> {
    cfg.validate()?;
    let mut work = Workload::build(&cfg.task)?;
    let n = cfg.task.clients();
    let m = work.dim();
    let behaviors = cfg.assign(n);
    let flipped: Vec<bool> = behaviors
        .iter()
        .map(|b| *b == ClientBehavior::LabelFlip)
        .collect();
    work.refresh(&flipped)?;
    let exec = if cfg.protocol.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    };

    let mut engine = if cfg.aggregation.is_secure() {
        let pc = cfg
            .protocol
            .apply(n, m, cfg.aggregation == Aggregation::UnpackedRflpa);
        let mut e = Engine::new(pc, cfg.seed)?;
        for (i, b) in behaviors.iter().enumerate() {
            e.set_fault(i as u32, b.fault());
        }
        let drops: BTreeMap<u32, u8> = behaviors
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.dropout_round().map(|r| (i as u32, r)))
            .collect();
        e.set_dropouts(drops);
        Some(e)
    } else {
        None
    };
    // plaintext rules lose clients that drop before sending anything
    let present: Vec<usize> = (0..n)
        .filter(|&i| behaviors[i].dropout_round().map_or(true, |r| r > 1))
        .collect();

    let hash = cfg.hash();
    let mut w = vec![0.0; m];
    let initial = {
        let (a, l, _) = work.evaluate(&w);
        (a, l)
    };
    let mut rows = Vec::with_capacity(cfg.iterations);
    let mut ts_honest = Vec::new();
    let mut ts_malicious = Vec::new();
    let mut round_secs = Vec::new();
    let mut redraw_rng = ChaCha20Rng::seed_from_u64(derive_seed(cfg.seed, 0, 0xd1));

    for t in 0..cfg.iterations {
        if let (
            Some(every),
            TaskConfig::Blobs(SyntheticTask {
                dirichlet_alpha: Some(a),
                ..
            }),
        ) = (cfg.redraw_every, &cfg.task)
        {
            if t > 0 && every > 0 && t % every == 0 {
                if let Workload::Classify { base, .. } = &mut work {
                    base.reallocate(*a, &mut redraw_rng)?;
                }
                work.refresh(&flipped)?;
            }
        }
        let seed = cfg.seed;
        let grads: Vec<Vec<f64>> = exec.map_range(n, |i| {
            if behaviors[i] == ClientBehavior::GradientManipulation {
                let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, t as u64, i as u32));
                gradient_manipulation(m, &mut rng)
            } else {
                work.client_gradient(i, &w)
            }
        });
        let g0 = work.root_gradient(&w);

        let mut row = IterationRow {
            config_hash: hash.clone(),
            seed: cfg.seed,
            iteration: t,
            accuracy: None,
            loss: 0.0,
            distance: None,
            ts_honest: None,
            ts_malicious: None,
            aborted: false,
            excluded: 0,
            client_bytes: None,
            server_bytes: None,
        };
        let mut scores: Vec<(usize, f64)> = Vec::new();
        let update = match (&mut engine, cfg.aggregation) {
            (Some(e), _) => {
                e.mailbox_mut().reset_counters();
                let r = e.run_iteration(t as u64, &w, &g0, &grads)?;
                round_secs.push(r.round_secs);
                row.aborted = r.abort.is_some();
                row.excluded = r.offenses.len();
                let mb = e.mailbox();
                let per_client: u64 = (0..n as u32).map(|i| mb.party_total(i).total()).sum();
                row.client_bytes = Some(per_client as f64 / n as f64);
                row.server_bytes = Some(mb.party_total(SERVER).total());
                scores = r.scores.iter().map(|(&j, &s)| (j as usize, s)).collect();
                r.aggregate
            }
            (None, rule) => {
                let gs: Vec<&[f64]> = present.iter().map(|&i| grads[i].as_slice()).collect();
                Some(match rule {
                    Aggregation::Fedavg => fedavg(&gs),
                    Aggregation::TrimmedMean => trimmed_mean(&gs, cfg.trim_fraction),
                    _ => {
                        let (g, ts) = fltrust(&g0, &gs);
                        scores = present.iter().copied().zip(ts).collect();
                        g
                    }
                })
            }
        };
        let (h, mal): (Vec<_>, Vec<_>) = scores
            .iter()
            .partition(|(j, _)| !behaviors[*j].is_malicious());
        let h: Vec<f64> = h.into_iter().map(|(_, s)| s).collect();
        let mal: Vec<f64> = mal.into_iter().map(|(_, s)| s).collect();
        row.ts_honest = mean(&h);
        row.ts_malicious = mean(&mal);
        ts_honest.extend(h);
        ts_malicious.extend(mal);

        if let Some(g) = update {
            for (wk, gk) in w.iter_mut().zip(&g) {
                *wk -= cfg.learning_rate * gk;
            }
        }
        let (acc, loss, dist) = work.evaluate(&w);
        row.accuracy = acc;
        row.loss = loss;
        row.distance = dist;
        tracing::debug!(iteration = t, ?acc, loss, "iteration done");
        rows.push(row);
    }
    Ok(Metrics {
        config_hash: hash,
        seed: cfg.seed,
        behaviors,
        rows,
        ts_honest,
        ts_malicious,
        final_model: w,
        initial,
        round_secs,
    })
}
