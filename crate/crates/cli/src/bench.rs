//! Communication and computation sweeps for packed and unpacked runs.

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rflpa_core::vss::{Backend, Vss};
use rflpa_protocol::mailbox::Traffic;
use rflpa_protocol::traffic::{simulate, SizeModel};
use rflpa_protocol::wire::HEADER_BYTES;
use rflpa_protocol::{CryptoMode, Engine, ProtocolConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Sweep description. Every point uses the paper packing rule
/// (`d = floor(0.4N)`, `l = p = ceil(0.1N)`); the baseline is the same
/// point with `l = p = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub seed: u64,
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    #[serde(with = "as_str")]
    pub vss: Backend,
    #[serde(with = "as_str")]
    pub crypto: CryptoMode,
    /// Iterations timed per point by the computation sweep.
    pub iterations: usize,
    /// Run the unpacked baseline next to every packed point.
    pub baseline: bool,
    pub out: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            seed: 0,
            n: vec![20, 40],
            m: vec![200],
            vss: Backend::Feldman,
            crypto: CryptoMode::FastSim,
            iterations: 1,
            baseline: true,
            out: None,
        }
    }
}

mod as_str {
    use std::fmt::Display;
    use std::str::FromStr;

    use serde::{Deserialize, Deserializer, Serializer};

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

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let c: BenchConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.n.is_empty() || self.m.is_empty() {
            return Err(CliError::Config(
                "n, m: sweep axes must not be empty".into(),
            ));
        }
        if self.iterations == 0 {
            return Err(CliError::Config("iterations: must be positive".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(json)[..8])
    }

    /// Feasible protocol configurations of the sweep, packed first. Points
    /// that fail validation are logged and skipped.
    pub fn points(&self) -> Vec<(Variant, ProtocolConfig)> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &m in &self.m {
                let mut packed = ProtocolConfig::paper_rule(n, m);
                packed.vss = self.vss;
                packed.crypto = self.crypto;
                let mut variants = vec![(Variant::Packed, packed.clone())];
                if self.baseline {
                    variants.push((Variant::Unpacked, packed.unpacked()));
                }
                for (v, c) in variants {
                    match c.validate() {
                        Ok(()) => out.push((v, c)),
                        Err(e) => {
                            tracing::warn!(n, m, variant = %v, error = %e, "skipping infeasible point")
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Packed,
    Unpacked,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Packed => "packed",
            Variant::Unpacked => "unpacked",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Server,
    Client,
}

/// One row of a cost table. `phase` is the protocol round, 0 to 4.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRecord {
    pub config_hash: String,
    pub seed: u64,
    pub variant: Variant,
    pub n: usize,
    pub m: usize,
    pub role: Role,
    pub phase: u8,
    pub bytes: u64,
    /// Closed-form byte count for the same cell.
    pub predicted: u64,
    pub wall_ns: u64,
}

/// Per-round traffic of client 0 (all clients are symmetric in an honest
/// run) and of the server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RoundBytes {
    pub client: [Traffic; 5],
    pub server: [Traffic; 5],
}

impl RoundBytes {
    pub fn client_total(&self) -> u64 {
        self.client.iter().map(Traffic::total).sum()
    }

    pub fn server_total(&self) -> u64 {
        self.server.iter().map(Traffic::total).sum()
    }
}

/// Message sizes written out from the wire formats, independently of the
/// encoders.
pub fn predict(cfg: &ProtocolConfig, clen: usize, plen: usize) -> RoundBytes {
    let n = cfg.n as u64;
    let m = cfg.m as u64;
    let h = HEADER_BYTES as u64;
    let b = cfg.m.div_ceil(cfg.l).max(1) as u64;
    let g = cfg.n.div_ceil(cfg.p) as u64;
    let t = cfg.n.saturating_sub(2 * cfg.d + 1) as u64;
    let (clen, plen) = (clen as u64, plen as u64);

    // kind, iteration, norm, bound, model, v0
    let model = h + 1 + 8 + 8 + 8 + (4 + 8 * m) + (4 + 8 * b);
    let commits = |c: u64| h + 1 + 4 + c * clen;
    // kind, ciphertext length, nonce and tag, signature
    let sealed = |c: u64| h + 1 + 4 + (4 + c * (8 + plen) + 28) + 64;
    let complaints = h + 1 + 4;
    let decision = h + 1 + 4 + 4 * n;
    let finals = h + 1 + 4 + 4 + 2 * g * (1 + t) * 8;
    let scores = h + 1 + 4 + 12 * n + 4;
    let aggregate = h + 1 + 4 + 8 * b;

    let tr = |sent, received| Traffic { sent, received };
    let mut r = RoundBytes::default();
    r.client[0] = tr(0, model);
    r.server[0] = tr(n * model, 0);
    for (round, count) in [(1usize, b), (2, 2 * g)] {
        let (c, s) = (commits(count), sealed(count));
        r.client[round].sent += c + (n - 1) * s;
        r.client[round].received += (n - 1) * (c + s);
        r.server[round].received += n * (c + (n - 1) * s);
        r.server[round].sent += n * (n - 1) * (c + s);
        r.client[round + 1].sent += complaints;
        r.server[round + 1].received += n * complaints;
        r.client[round + 1].received += decision;
        r.server[round + 1].sent += decision;
    }
    r.client[3].sent += finals;
    r.server[3].received += n * finals;
    r.client[4].received += scores;
    r.server[4].sent += scores;
    r.client[4].sent += aggregate;
    r.server[4].received += n * aggregate;
    r
}

/// Reads per-round counters of client 0 and the server out of a mailbox.
pub fn measured(mb: &rflpa_protocol::mailbox::Mailbox) -> RoundBytes {
    let mut r = RoundBytes::default();
    for round in 0..5u8 {
        r.client[round as usize] = mb.traffic(0, round);
        r.server[round as usize] = mb.traffic(rflpa_protocol::wire::SERVER, round);
    }
    r
}

fn size_model(cfg: &ProtocolConfig, seed: u64) -> SizeModel {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    SizeModel::of(&Vss::setup(cfg.vss, cfg.d, &mut rng))
}

/// Exact bytes of one honest iteration per point, from the size-only run.
pub fn bench_comm(bc: &BenchConfig) -> Vec<CostRecord> {
    let hash = bc.hash();
    let mut out = Vec::new();
    for (variant, cfg) in bc.points() {
        let size = size_model(&cfg, bc.seed);
        let got = measured(&simulate(&cfg, size));
        let want = predict(&cfg, size.commitment, size.proof);
        tracing::info!(n = cfg.n, m = cfg.m, %variant, client = got.client_total(), "comm point");
        push_rows(
            &mut out, &hash, bc.seed, variant, &cfg, &got, &want, [0; 5], [0; 5],
        );
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn push_rows(
    out: &mut Vec<CostRecord>,
    hash: &str,
    seed: u64,
    variant: Variant,
    cfg: &ProtocolConfig,
    got: &RoundBytes,
    want: &RoundBytes,
    client_ns: [u64; 5],
    server_ns: [u64; 5],
) {
    for (role, bytes, pred, ns) in [
        (Role::Client, &got.client, &want.client, client_ns),
        (Role::Server, &got.server, &want.server, server_ns),
    ] {
        for phase in 0..5 {
            out.push(CostRecord {
                config_hash: hash.to_string(),
                seed,
                variant,
                n: cfg.n,
                m: cfg.m,
                role,
                phase: phase as u8,
                bytes: bytes[phase].total(),
                predicted: pred[phase].total(),
                wall_ns: ns[phase],
            });
        }
    }
}

/// Runs the full engine at every point and records mean wall time per round
/// for a client and for the server.
pub fn bench_comp(bc: &BenchConfig) -> Result<Vec<CostRecord>, CliError> {
    let hash = bc.hash();
    let mut out = Vec::new();
    for (variant, cfg) in bc.points() {
        let size = size_model(&cfg, bc.seed);
        let want = predict(&cfg, size.commitment, size.proof);
        let mut rng = ChaCha20Rng::seed_from_u64(bc.seed ^ ((cfg.n as u64) << 32) ^ cfg.m as u64);
        let mut engine = Engine::new(cfg.clone(), bc.seed)?;
        let model = vec![0.0; cfg.m];
        let mut client = [0.0; 5];
        let mut server = [0.0; 5];
        let start = Instant::now();
        for it in 0..bc.iterations {
            let g0: Vec<f64> = (0..cfg.m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let grads: Vec<Vec<f64>> = (0..cfg.n)
                .map(|_| g0.iter().map(|x| x + rng.random_range(-0.5..0.5)).collect())
                .collect();
            engine.mailbox_mut().reset_counters();
            let rep = engine.run_iteration(it as u64, &model, &g0, &grads)?;
            if let Some(a) = rep.abort {
                return Err(CliError::Bench(format!("n={} m={}: {a}", cfg.n, cfg.m)));
            }
            for r in 0..5 {
                client[r] += rep.client_secs[r] / bc.iterations as f64;
                server[r] += rep.server_secs[r] / bc.iterations as f64;
            }
        }
        tracing::info!(n = cfg.n, m = cfg.m, %variant, secs = start.elapsed().as_secs_f64(), "comp point");
        let got = measured(engine.mailbox());
        let ns = |s: [f64; 5]| s.map(|x| (x * 1e9) as u64);
        push_rows(
            &mut out,
            &hash,
            bc.seed,
            variant,
            &cfg,
            &got,
            &want,
            ns(client),
            ns(server),
        );
    }
    Ok(out)
}

/// Per-client total bytes of a point, summed over phases.
pub fn client_bytes(rows: &[CostRecord], variant: Variant, n: usize, m: usize) -> Option<u64> {
    let mut it = rows
        .iter()
        .filter(|r| r.variant == variant && r.n == n && r.m == m && r.role == Role::Client)
        .peekable();
    it.peek()?;
    Some(it.map(|r| r.bytes).sum())
}
