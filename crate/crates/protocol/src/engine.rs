//! Drives the clients and the server through one iteration over the mailbox.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rflpa_core::dotprod::DotProductSetup;
use rflpa_core::vss::Vss;
use serde::Serialize;
use thiserror::Error;

use crate::client::{Client, Phase};
use crate::config::{ConfigError, ProtocolConfig};
use crate::crypto::{setup_keys, CryptoError};
use crate::mailbox::Mailbox;
use crate::round::{derive_seed, Abort, Fault, Offense, Rejection, RoundState, Shared};
use crate::server::Server;
use crate::wire::{Envelope, SERVER};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("setup: {0}")]
    Setup(String),
    #[error("expected {expected} gradients of length {m}, got {got}")]
    Gradients {
        expected: usize,
        m: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationReport {
    pub iteration: u64,
    pub state: RoundState,
    /// Decoded `<v_j, v0>`.
    pub dots: BTreeMap<u32, i64>,
    /// Decoded `||v_j||^2`.
    pub norms: BTreeMap<u32, i64>,
    pub bound: u64,
    pub scores: BTreeMap<u32, f64>,
    pub offenses: BTreeMap<u32, Offense>,
    pub rejections: Vec<Rejection>,
    pub aggregate: Option<Vec<f64>>,
    pub abort: Option<Abort>,
    /// Wall-clock seconds spent in rounds 0 to 4.
    pub round_secs: [f64; 5],
    /// Mean client compute time per round.
    pub client_secs: [f64; 5],
    /// Server compute time per round.
    pub server_secs: [f64; 5],
}

pub struct Engine {
    shared: Arc<Shared>,
    clients: Vec<Client>,
    server: Server,
    mailbox: Mailbox,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("cfg", &self.shared.cfg)
            .field("mailbox", &self.mailbox)
            .finish()
    }
}

impl Engine {
    /// Validates the configuration and runs the trusted setup: signing and
    /// agreement keys, commitment parameters and sharing points.
    pub fn new(cfg: ProtocolConfig, seed: u64) -> Result<Self, EngineError> {
        cfg.validate()?;
        let ids: Vec<u32> = (0..cfg.n as u32).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, u64::MAX, SERVER - 7));
        let keys = setup_keys(&ids, cfg.crypto, &mut rng)?;
        let vss = Vss::setup(cfg.vss, cfg.d, &mut rng);
        let setup = DotProductSetup::new(cfg.n, cfg.d, cfg.l, cfg.p, cfg.m)
            .map_err(|e| EngineError::Setup(e.to_string()))?;
        let shared = Arc::new(Shared {
            cfg,
            vss,
            setup,
            verifying: keys.verifying,
            clients: ids.clone(),
        });
        let clients = keys
            .parties
            .into_iter()
            .map(|k| Client::new(k, Arc::clone(&shared), seed))
            .collect();
        let server = Server::new(Arc::clone(&shared), seed);
        Ok(Engine {
            shared,
            clients,
            server,
            mailbox: Mailbox::new(ids),
        })
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.shared.cfg
    }

    pub fn shared(&self) -> &Arc<Shared> {
        &self.shared
    }

    pub fn mailbox(&self) -> &Mailbox {
        &self.mailbox
    }

    pub fn mailbox_mut(&mut self) -> &mut Mailbox {
        &mut self.mailbox
    }

    pub fn set_fault(&mut self, id: u32, fault: Fault) {
        self.clients[id as usize].set_fault(fault);
    }

    pub fn faults(&self) -> BTreeMap<u32, Fault> {
        self.clients
            .iter()
            .filter(|c| c.fault() != Fault::Honest)
            .map(|c| (c.id(), c.fault()))
            .collect()
    }

    pub fn set_dropouts(&mut self, schedule: BTreeMap<u32, u8>) {
        self.mailbox.set_dropouts(schedule);
    }

    fn post_all(&mut self, msgs: Vec<Envelope>) {
        for e in msgs {
            self.mailbox.post(e);
        }
    }

    /// Delivers the queue; returns client inboxes and what reached the server.
    fn route(&mut self) -> (Vec<Vec<Envelope>>, Vec<Envelope>) {
        let mut inboxes = vec![Vec::new(); self.clients.len()];
        let mut server = Vec::new();
        for e in self.mailbox.deliver() {
            if e.recipient == SERVER {
                server.push(e);
            } else if let Some(b) = inboxes.get_mut(e.recipient as usize) {
                b.push(e);
            }
        }
        (inboxes, server)
    }

    fn step(&mut self, phase: Phase, inboxes: &[Vec<Envelope>]) {
        let round = phase.round();
        let active: Vec<bool> = self
            .clients
            .iter()
            .map(|c| self.mailbox.is_active(c.id(), round))
            .collect();
        self.shared
            .cfg
            .exec
            .for_each_mut(&mut self.clients, |i, c| {
                if active[i] {
                    c.step(phase, &inboxes[i]);
                }
            });
        let out: Vec<Envelope> = self
            .clients
            .iter_mut()
            .flat_map(|c| c.take_outbox())
            .collect();
        self.post_all(out);
    }

    /// One full aggregation. `grads[i]` is client `i`'s local gradient.
    pub fn run_iteration(
        &mut self,
        iteration: u64,
        model: &[f64],
        g0: &[f64],
        grads: &[Vec<f64>],
    ) -> Result<IterationReport, EngineError> {
        let cfg = &self.shared.cfg;
        if grads.len() != cfg.n {
            return Err(EngineError::Gradients {
                expected: cfg.n,
                m: cfg.m,
                got: grads.len(),
            });
        }
        self.server.begin(iteration);
        for (c, g) in self.clients.iter_mut().zip(grads) {
            c.begin(iteration, g.clone());
        }
        let mut secs = [0.0; 5];
        let mut server_secs = [0.0; 5];
        let result = self.rounds(model, g0, &mut secs, &mut server_secs);
        let (aggregate, abort) = match result {
            Ok(g) => (Some(g), None),
            Err(a) => {
                tracing::warn!(iteration, %a, "iteration aborted");
                (None, Some(a))
            }
        };
        let scores = self.server.scores();
        Ok(IterationReport {
            iteration,
            state: self.server.state().clone(),
            dots: self.server.dots().clone(),
            norms: self.server.norms().clone(),
            bound: self.server.bound(),
            scores: scores
                .numerators
                .keys()
                .map(|&j| (j, scores.score(j)))
                .collect(),
            offenses: self.server.offenses().clone(),
            rejections: self
                .clients
                .iter()
                .flat_map(|c| c.rejections().iter().cloned())
                .collect(),
            aggregate,
            abort,
            round_secs: secs,
            client_secs: {
                let mut c = [0.0; 5];
                for b in self.clients.iter().map(Client::busy) {
                    c.iter_mut()
                        .zip(b)
                        .for_each(|(a, x)| *a += x / self.clients.len() as f64);
                }
                c
            },
            server_secs,
        })
    }

    fn rounds(
        &mut self,
        model: &[f64],
        g0: &[f64],
        secs: &mut [f64; 5],
        server: &mut [f64; 5],
    ) -> Result<Vec<f64>, Abort> {
        macro_rules! timed {
            ($r:expr, $e:expr) => {{
                let t = Instant::now();
                let v = $e;
                server[$r] += t.elapsed().as_secs_f64();
                v
            }};
        }
        let t = Instant::now();
        let out = timed!(0, self.server.round0(model, g0))?;
        self.post_all(out);
        let (inboxes, _) = self.route();
        self.mailbox.take_relayed();
        secs[0] = t.elapsed().as_secs_f64();

        let t = Instant::now();
        self.step(Phase::Round1, &inboxes);
        let (inboxes, _) = self.route();
        let relayed = self.mailbox.take_relayed();
        timed!(1, self.server.observe_dealings(&relayed, 1));
        self.step(Phase::Complain1, &inboxes);
        let (_, complaints) = self.route();
        self.mailbox.take_relayed();
        timed!(1, self.server.adjudicate(&complaints, 1));
        let d = timed!(1, self.server.decide(1))?;
        secs[1] = t.elapsed().as_secs_f64();

        let t = Instant::now();
        self.mailbox.post(d);
        let (inboxes, _) = self.route();
        self.mailbox.take_relayed();
        self.step(Phase::Round2, &inboxes);
        let (inboxes, _) = self.route();
        let relayed = self.mailbox.take_relayed();
        timed!(2, self.server.observe_dealings(&relayed, 2));
        self.step(Phase::Complain2, &inboxes);
        let (_, complaints) = self.route();
        self.mailbox.take_relayed();
        timed!(2, self.server.adjudicate(&complaints, 2));
        let d = timed!(2, self.server.decide(2))?;
        secs[2] = t.elapsed().as_secs_f64();

        let t = Instant::now();
        self.mailbox.post(d);
        let (inboxes, _) = self.route();
        self.mailbox.take_relayed();
        self.step(Phase::Round3, &inboxes);
        let (_, finals) = self.route();
        self.mailbox.take_relayed();
        let scores = timed!(3, self.server.round3(&finals))?;
        secs[3] = t.elapsed().as_secs_f64();

        let t = Instant::now();
        self.mailbox.post(scores);
        let (inboxes, _) = self.route();
        self.mailbox.take_relayed();
        self.step(Phase::Round4, &inboxes);
        let (_, aggs) = self.route();
        self.mailbox.take_relayed();
        let g = timed!(4, self.server.round4(&aggs))?;
        secs[4] = t.elapsed().as_secs_f64();
        Ok(g)
    }
}
