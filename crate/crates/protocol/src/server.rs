//! Server side of one aggregation iteration. The server sees commitments,
//! ciphertexts, signatures, final shares, scores and the aggregate; no
//! method returns an individual gradient or a raw share of one.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rflpa_core::dotprod::SenderCode;
use rflpa_core::{Field, F61};
use sha2::{Digest, Sha256};

use crate::client::{check_dealing, Dealing};
use crate::crypto::unseal;
use crate::round::{derive_seed, Abort, Offense, RoundState, Shared};
use crate::trust::{clip_norm, l2, root_vector, TrustScores};
use crate::wire::{
    decode_aggregate, decode_commitments, decode_complaints, decode_sealed, encode_ids,
    signed_payload, Envelope, FinalsMsg, Kind, ModelMsg, ScoresMsg, BROADCAST, SERVER,
};

#[derive(Debug)]
pub struct Server {
    shared: Arc<Shared>,
    seed: u64,
    rng: ChaCha20Rng,
    iteration: u64,
    bound: u64,
    state: RoundState,
    commits: [BTreeMap<u32, Vec<u8>>; 2],
    sealed: [BTreeMap<(u32, u32), Vec<u8>>; 2],
    offenses: BTreeMap<u32, Offense>,
    dots: BTreeMap<u32, i64>,
    norms: BTreeMap<u32, i64>,
    scores: TrustScores,
}

fn abort(round: u8, reason: impl Into<String>) -> Abort {
    Abort {
        round,
        reason: reason.into(),
    }
}

impl Server {
    pub fn new(shared: Arc<Shared>, seed: u64) -> Self {
        let threshold = shared.cfg.threshold;
        Server {
            shared,
            seed,
            rng: ChaCha20Rng::seed_from_u64(seed),
            iteration: 0,
            bound: 0,
            state: RoundState {
                threshold,
                ..RoundState::default()
            },
            commits: Default::default(),
            sealed: Default::default(),
            offenses: BTreeMap::new(),
            dots: BTreeMap::new(),
            norms: BTreeMap::new(),
            scores: TrustScores::default(),
        }
    }

    pub fn begin(&mut self, iteration: u64) {
        let shared = Arc::clone(&self.shared);
        *self = Server::new(shared, self.seed);
        self.iteration = iteration;
        self.rng = ChaCha20Rng::seed_from_u64(derive_seed(self.seed, iteration, SERVER));
    }

    pub fn state(&self) -> &RoundState {
        &self.state
    }

    pub fn offenses(&self) -> &BTreeMap<u32, Offense> {
        &self.offenses
    }

    pub fn scores(&self) -> &TrustScores {
        &self.scores
    }

    /// Decoded `<v_j, v0>` per user.
    pub fn dots(&self) -> &BTreeMap<u32, i64> {
        &self.dots
    }

    /// Decoded `||v_j||^2` per user.
    pub fn norms(&self) -> &BTreeMap<u32, i64> {
        &self.norms
    }

    pub fn bound(&self) -> u64 {
        self.bound
    }

    fn offend(&mut self, id: u32, o: Offense) {
        self.offenses.entry(id).or_insert(o);
    }

    /// Clips and quantizes the root gradient, shares it and sends every
    /// client the model, `||g0||`, the bound and its root-gradient shares.
    pub fn round0(&mut self, model: &[f64], g0: &[f64]) -> Result<Vec<Envelope>, Abort> {
        let shared = Arc::clone(&self.shared);
        let cfg = &shared.cfg;
        if g0.len() != cfg.m {
            return Err(abort(
                0,
                format!("root gradient has {} entries, expected {}", g0.len(), cfg.m),
            ));
        }
        let g0 = clip_norm(g0, cfg.field.max_norm);
        let (v0, bound) = root_vector(&g0, cfg.field.scale).map_err(|e| abort(0, e.to_string()))?;
        self.bound = bound;
        let vf: Vec<F61> = v0.iter().map(|&x| F61::from_i64(x)).collect();
        let polys = shared
            .setup
            .share_polys(&vf, &mut self.rng)
            .map_err(|e| abort(0, e.to_string()))?;
        let evals: Vec<Vec<F61>> = polys
            .iter()
            .map(|p| shared.setup.grad.evaluate(p))
            .collect();
        let norm_g0 = l2(&g0);
        Ok(shared
            .clients
            .iter()
            .map(|&c| {
                let msg = ModelMsg {
                    iteration: self.iteration,
                    norm_g0,
                    bound,
                    model: model.to_vec(),
                    v0: evals.iter().map(|e| e[c as usize]).collect(),
                };
                Envelope::new(SERVER, c, 0, msg.encode())
            })
            .collect())
    }

    fn dealing(&self, round: u8) -> (Dealing, Vec<u32>) {
        let cfg = &self.shared.cfg;
        if round == 1 {
            (Dealing::gradient(cfg.blocks()), self.shared.clients.clone())
        } else {
            let q1 = self.state.qualified[0].clone();
            (Dealing::reshare(2 * cfg.groups(q1.len())), q1)
        }
    }

    /// Stores the relayed dealings of `round` and fixes its respondent set:
    /// dealers whose commitments and shares reached every other eligible party.
    pub fn observe_dealings(&mut self, relayed: &[Envelope], round: u8) {
        let (dealing, eligible) = self.dealing(round);
        let slot = (round - 1) as usize;
        let clen = self.shared.vss.commitment_len();
        for e in relayed
            .iter()
            .filter(|e| e.round == round && eligible.contains(&e.sender))
        {
            match e.kind() {
                Some(k) if k == dealing.commit_kind && e.recipient == BROADCAST => {
                    if decode_commitments(&e.body, k, clen, dealing.count).is_ok() {
                        self.commits[slot].insert(e.sender, e.body.clone());
                    }
                }
                Some(k) if k == dealing.share_kind && eligible.contains(&e.recipient) => {
                    self.sealed[slot].insert((e.sender, e.recipient), e.body.clone());
                }
                _ => {}
            }
        }
        let u: Vec<u32> = eligible
            .iter()
            .copied()
            .filter(|&d| {
                self.commits[slot].contains_key(&d)
                    && eligible
                        .iter()
                        .all(|&r| r == d || self.sealed[slot].contains_key(&(d, r)))
            })
            .collect();
        self.state.respondents[slot] = u;
    }

    /// Opens each complained-about message with the revealed key. A dealer
    /// is disqualified when its own signed message fails the share check;
    /// complaints that do not reproduce are dismissed.
    pub fn adjudicate(&mut self, complaints: &[Envelope], round: u8) -> Vec<u32> {
        let (dealing, _) = self.dealing(round);
        let slot = (round - 1) as usize;
        let respondents: BTreeSet<u32> = self.state.respondents[slot].iter().copied().collect();
        let shared = Arc::clone(&self.shared);
        let mut guilty = BTreeSet::new();
        for e in complaints
            .iter()
            .filter(|e| e.round == round + 1 && e.kind() == Some(Kind::Complaints))
        {
            let Ok(list) = decode_complaints(&e.body) else {
                continue;
            };
            for c in list {
                if !respondents.contains(&c.accused) || guilty.contains(&c.accused) {
                    continue;
                }
                let (Some(cb), Some(sb)) = (
                    self.commits[slot].get(&c.accused),
                    self.sealed[slot].get(&(c.accused, e.sender)),
                ) else {
                    continue;
                };
                let clen = shared.vss.commitment_len();
                let Ok(raw) = decode_commitments(cb, dealing.commit_kind, clen, dealing.count)
                else {
                    continue;
                };
                let Ok(s) = decode_sealed(sb, dealing.share_kind) else {
                    continue;
                };
                let digest: [u8; 32] = Sha256::digest(raw).into();
                let payload = signed_payload(
                    dealing.share_kind,
                    round,
                    c.accused,
                    e.sender,
                    &digest,
                    s.ciphertext,
                );
                let signed = shared
                    .verifying
                    .get(&c.accused)
                    .is_some_and(|vk| vk.verify(&payload, s.signature));
                if !signed || unseal(&c.key, &[], s.ciphertext).is_err() {
                    continue;
                }
                if check_dealing(&shared, e.sender, &c.key, c.accused, dealing, cb, sb).is_err() {
                    guilty.insert(c.accused);
                }
            }
        }
        let offense = if round == 1 {
            Offense::InvalidShares
        } else {
            Offense::InvalidReshares
        };
        for &g in &guilty {
            self.offend(g, offense);
        }
        guilty.into_iter().collect()
    }

    /// Applies the threshold and broadcasts the qualified dealers.
    pub fn decide(&mut self, round: u8) -> Result<Envelope, Abort> {
        let slot = (round - 1) as usize;
        let cfg = &self.shared.cfg;
        let u = &self.state.respondents[slot];
        if u.len() < cfg.threshold {
            return Err(abort(
                round,
                format!("|U{round}| = {} < K = {}", u.len(), cfg.threshold),
            ));
        }
        let q: Vec<u32> = u
            .iter()
            .copied()
            .filter(|i| !self.offenses.contains_key(i))
            .collect();
        if round == 2 && q.len() < 2 * cfg.d + 1 {
            return Err(abort(
                round,
                format!(
                    "{} qualified re-sharers < 2d+1 = {}",
                    q.len(),
                    2 * cfg.d + 1
                ),
            ));
        }
        self.state.qualified[slot] = q.clone();
        self.state.round = round;
        Ok(Envelope::new(
            SERVER,
            BROADCAST,
            round + 1,
            encode_ids(Kind::Decision, &q),
        ))
    }

    /// Decodes dot products and norms, locates wrong re-sharers, applies the
    /// norm check and broadcasts the trust-score numerators.
    pub fn round3(&mut self, inbox: &[Envelope]) -> Result<Envelope, Abort> {
        let shared = Arc::clone(&self.shared);
        let cfg = &shared.cfg;
        let q1 = self.state.qualified[0].clone();
        let q2 = self.state.qualified[1].clone();
        let g = cfg.groups(q1.len());
        let t = q2.len() - 2 * cfg.d - 1;
        let mut finals: BTreeMap<u32, FinalsMsg> = BTreeMap::new();
        for e in inbox
            .iter()
            .filter(|e| e.round == 3 && e.kind() == Some(Kind::Finals) && q2.contains(&e.sender))
        {
            if let Ok(f) = FinalsMsg::decode(&e.body) {
                let ok = f.cs.len() == g
                    && f.nr.len() == g
                    && f.cs_syn.iter().chain(&f.nr_syn).all(|s| s.len() == t);
                if ok {
                    finals.insert(e.sender, f);
                }
            }
        }
        let u3: Vec<u32> = finals.keys().copied().collect();
        if u3.len() < cfg.threshold {
            return Err(abort(
                3,
                format!("|U3| = {} < K = {}", u3.len(), cfg.threshold),
            ));
        }
        self.state.respondents[2] = u3;
        let points: Vec<F61> = q2.iter().map(|&s| shared.alpha(s)).collect();
        let code = SenderCode::new(points, shared.setup.grad.secret_points(), 2 * cfg.d)
            .map_err(|e| abort(3, e.to_string()))?;
        let mut dec = shared.setup.reshare.batch_decoder(cfg.d);
        let p = cfg.p;
        let mut results: [BTreeMap<u32, i64>; 2] = Default::default();
        for (which, out) in results.iter_mut().enumerate() {
            let pick = |f: &FinalsMsg, k: usize| if which == 0 { f.cs[k] } else { f.nr[k] };
            let pick_syn = |f: &FinalsMsg, k: usize, s: usize| {
                if which == 0 {
                    f.cs_syn[k][s]
                } else {
                    f.nr_syn[k][s]
                }
            };
            for k in 0..g {
                let mut slots = vec![None; cfg.n];
                for (&id, f) in &finals {
                    slots[id as usize] = Some(pick(f, k));
                }
                let (vals, bad) = dec
                    .decode(&slots)
                    .map_err(|e| abort(3, format!("final shares: {e}")))?;
                for b in bad {
                    self.offend(b as u32, Offense::WrongFinal);
                }
                let mut syn = vec![vec![F61::zero(); t]; p];
                for s in 0..t {
                    let mut slots = vec![None; cfg.n];
                    for (&id, f) in &finals {
                        slots[id as usize] = Some(pick_syn(f, k, s));
                    }
                    let (v, bad) = dec
                        .decode(&slots)
                        .map_err(|e| abort(3, format!("syndrome shares: {e}")))?;
                    for b in bad {
                        self.offend(b as u32, Offense::WrongFinal);
                    }
                    for (slot, x) in v.into_iter().enumerate() {
                        syn[slot][s] = x;
                    }
                }
                for (slot, &val) in vals.iter().enumerate() {
                    let Some(&user) = q1.get(k * p + slot) else {
                        break;
                    };
                    let errs = code.locate(&syn[slot]).ok_or_else(|| {
                        abort(
                            3,
                            format!(
                                "re-shares for user {user} have more than {} wrong senders",
                                code.budget()
                            ),
                        )
                    })?;
                    for &(i, _) in &errs {
                        self.offend(q2[i], Offense::WrongPartial);
                    }
                    out.insert(user, (val - code.correction(&errs)).to_signed());
                }
            }
        }
        let [dots, norms] = results;
        for (&j, &nr) in &norms {
            if nr < 0 || nr as u64 > self.bound {
                self.offend(j, Offense::NormBound);
            }
        }
        let numerators: BTreeMap<u32, u64> = q1
            .iter()
            .map(|&j| {
                let num = if self.offenses.contains_key(&j) {
                    0
                } else {
                    dots[&j].max(0) as u64
                };
                (j, num)
            })
            .collect();
        self.scores = TrustScores {
            numerators,
            bound: self.bound,
        };
        self.dots = dots;
        self.norms = norms;
        self.state.round = 3;
        let msg = ScoresMsg {
            scores: self
                .scores
                .numerators
                .iter()
                .map(|(&j, &n)| (j, n))
                .collect(),
            excluded: self.offenses.keys().copied().collect(),
        };
        Ok(Envelope::new(SERVER, BROADCAST, 4, msg.encode()))
    }

    /// Decodes the trust-weighted sum and divides by the total weight.
    pub fn round4(&mut self, inbox: &[Envelope]) -> Result<Vec<f64>, Abort> {
        let shared = Arc::clone(&self.shared);
        let cfg = &shared.cfg;
        let blocks = cfg.blocks();
        let u3 = self.state.respondents[2].clone();
        let mut aggs: BTreeMap<u32, Vec<F61>> = BTreeMap::new();
        for e in inbox
            .iter()
            .filter(|e| e.round == 4 && e.kind() == Some(Kind::Aggregate) && u3.contains(&e.sender))
        {
            if let Ok(v) = decode_aggregate(&e.body) {
                if v.len() == blocks {
                    aggs.insert(e.sender, v);
                }
            }
        }
        let u4: Vec<u32> = aggs.keys().copied().collect();
        if u4.len() < cfg.threshold {
            return Err(abort(
                4,
                format!("|U4| = {} < K = {}", u4.len(), cfg.threshold),
            ));
        }
        self.state.respondents[3] = u4;
        let mut dec = shared.setup.grad.batch_decoder(cfg.d);
        let mut secrets = Vec::with_capacity(blocks);
        for b in 0..blocks {
            let mut slots = vec![None; cfg.n];
            for (&id, v) in &aggs {
                slots[id as usize] = Some(v[b]);
            }
            let (vals, bad) = dec
                .decode(&slots)
                .map_err(|e| abort(4, format!("aggregate shares: {e}")))?;
            for i in bad {
                self.offend(i as u32, Offense::WrongAggregate);
            }
            secrets.push(vals);
        }
        self.state.round = 4;
        let total = self.scores.total();
        if total == 0 {
            tracing::info!(
                iteration = self.iteration,
                "all trust scores are zero; aggregate is zero"
            );
            return Ok(vec![0.0; cfg.m]);
        }
        let denom = cfg.field.scale as f64 * total as f64;
        Ok(shared
            .setup
            .layout
            .unpack(&secrets)
            .iter()
            .map(|x| x.to_signed() as f64 / denom)
            .collect())
    }
}
