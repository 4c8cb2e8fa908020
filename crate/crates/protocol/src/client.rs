//! Client side of one aggregation iteration.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rflpa_core::dotprod::{partial_product, SenderCode};
use rflpa_core::vss::Witness;
use rflpa_core::{poly, Field, F61};
use sha2::{Digest, Sha256};

use crate::crypto::{nonce, seal, unseal, PartyKeys};
use crate::round::{derive_seed, Fault, RejectReason, Rejection, Shared};
use crate::trust::normalize_and_quantize;
use crate::wire::{
    decode_commitments, decode_ids, decode_sealed, decode_share_plaintext, encode_aggregate,
    encode_commitments, encode_complaints, encode_sealed, encode_share_plaintext, signed_payload,
    Complaint, Envelope, FinalsMsg, Kind, ModelMsg, ScoresMsg, BROADCAST, SERVER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Round1,
    Complain1,
    Round2,
    Complain2,
    Round3,
    Round4,
}

impl Phase {
    /// Protocol round the phase's messages are tagged with.
    pub fn round(self) -> u8 {
        match self {
            Phase::Round1 => 1,
            Phase::Complain1 | Phase::Round2 => 2,
            Phase::Complain2 | Phase::Round3 => 3,
            Phase::Round4 => 4,
        }
    }
}

/// Which dealing a check refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dealing {
    pub round: u8,
    pub commit_kind: Kind,
    pub share_kind: Kind,
    pub count: usize,
}

impl Dealing {
    pub fn gradient(count: usize) -> Self {
        Dealing {
            round: 1,
            commit_kind: Kind::Commitments,
            share_kind: Kind::Shares,
            count,
        }
    }

    pub fn reshare(count: usize) -> Self {
        Dealing {
            round: 2,
            commit_kind: Kind::ReshareCommitments,
            share_kind: Kind::Reshares,
            count,
        }
    }
}

#[derive(Debug, Default)]
struct State {
    iteration: u64,
    v0: Vec<F61>,
    /// dealer -> my verified shares of its blocks (own dealing included)
    shares: BTreeMap<u32, Vec<F61>>,
    q1: Vec<u32>,
    reshares: BTreeMap<u32, Vec<F61>>,
    rejections: Vec<Rejection>,
}

#[derive(Debug)]
pub struct Client {
    id: u32,
    keys: PartyKeys,
    shared: Arc<Shared>,
    fault: Fault,
    seed: u64,
    rng: ChaCha20Rng,
    raw: Vec<f64>,
    st: State,
    outbox: Vec<Envelope>,
    busy: [f64; 5],
}

/// Checks one dealer's commitments and sealed shares addressed to `me`.
/// Returns the share values on success.
#[allow(clippy::too_many_arguments)]
pub fn check_dealing(
    shared: &Shared,
    me: u32,
    key: &[u8; 32],
    dealer: u32,
    dealing: Dealing,
    commit_body: &[u8],
    share_body: &[u8],
) -> Result<Vec<F61>, RejectReason> {
    let vss = &shared.vss;
    let clen = vss.commitment_len();
    let raw = decode_commitments(commit_body, dealing.commit_kind, clen, dealing.count)
        .map_err(|_| RejectReason::Commitment)?;
    let sealed =
        decode_sealed(share_body, dealing.share_kind).map_err(|_| RejectReason::Malformed)?;
    let digest: [u8; 32] = Sha256::digest(raw).into();
    let vk = shared
        .verifying
        .get(&dealer)
        .ok_or(RejectReason::Signature)?;
    let msg = signed_payload(
        dealing.share_kind,
        dealing.round,
        dealer,
        me,
        &digest,
        sealed.ciphertext,
    );
    if !vk.verify(&msg, sealed.signature) {
        return Err(RejectReason::Signature);
    }
    let pt = unseal(key, &[], sealed.ciphertext).map_err(|_| RejectReason::Decrypt)?;
    let (values, proofs) =
        decode_share_plaintext(&pt, vss.proof_len()).map_err(|_| RejectReason::Malformed)?;
    if values.len() != dealing.count {
        return Err(RejectReason::Malformed);
    }
    let point = shared.alpha(me);
    for (i, (&value, proof)) in values.iter().zip(proofs).enumerate() {
        let c = vss
            .read_commitment(&raw[i * clen..(i + 1) * clen])
            .ok_or(RejectReason::Commitment)?;
        let proof = vss.read_proof(proof).ok_or(RejectReason::Malformed)?;
        if !vss.verify(
            &c,
            &Witness {
                point,
                value,
                proof,
            },
        ) {
            return Err(RejectReason::Share);
        }
    }
    Ok(values)
}

fn decision(inbox: &[Envelope], round: u8) -> Option<Vec<u32>> {
    inbox
        .iter()
        .find(|e| e.sender == SERVER && e.round == round && e.kind() == Some(Kind::Decision))
        .and_then(|e| decode_ids(&e.body, Kind::Decision).ok())
}

impl Client {
    pub fn new(keys: PartyKeys, shared: Arc<Shared>, seed: u64) -> Self {
        Client {
            id: keys.id,
            keys,
            shared,
            fault: Fault::Honest,
            seed,
            rng: ChaCha20Rng::seed_from_u64(seed),
            raw: Vec::new(),
            st: State::default(),
            outbox: Vec::new(),
            busy: [0.0; 5],
        }
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn fault(&self) -> Fault {
        self.fault
    }

    pub fn set_fault(&mut self, fault: Fault) {
        self.fault = fault;
    }

    /// Resets per-iteration state and hands over the local gradient.
    pub fn begin(&mut self, iteration: u64, gradient: Vec<f64>) {
        self.st = State {
            iteration,
            ..State::default()
        };
        self.rng = ChaCha20Rng::seed_from_u64(derive_seed(self.seed, iteration, self.id));
        self.raw = gradient;
        self.outbox.clear();
        self.busy = [0.0; 5];
    }

    /// Seconds spent computing in each round of the current iteration.
    pub fn busy(&self) -> [f64; 5] {
        self.busy
    }

    pub fn take_outbox(&mut self) -> Vec<Envelope> {
        std::mem::take(&mut self.outbox)
    }

    pub fn rejections(&self) -> &[Rejection] {
        &self.st.rejections
    }

    pub fn step(&mut self, phase: Phase, inbox: &[Envelope]) {
        let t = Instant::now();
        match phase {
            Phase::Round1 => self.round1(inbox),
            Phase::Complain1 => self.complain(inbox, 1),
            Phase::Round2 => self.round2(inbox),
            Phase::Complain2 => self.complain(inbox, 2),
            Phase::Round3 => self.round3(inbox),
            Phase::Round4 => self.round4(inbox),
        }
        self.busy[phase.round() as usize] += t.elapsed().as_secs_f64();
    }

    fn reject(&mut self, sender: u32, round: u8, reason: RejectReason) {
        self.st.rejections.push(Rejection {
            recipient: self.id,
            sender,
            round,
            reason,
        });
    }

    fn round1(&mut self, inbox: &[Envelope]) {
        let cfg = &self.shared.cfg;
        let Some(model) = inbox
            .iter()
            .find(|e| e.sender == SERVER && e.kind() == Some(Kind::Model))
            .and_then(|e| ModelMsg::decode(&e.body).ok())
        else {
            self.reject(SERVER, 0, RejectReason::Missing);
            return;
        };
        if model.v0.len() != cfg.blocks() || self.raw.len() != cfg.m {
            self.reject(SERVER, 0, RejectReason::Malformed);
            return;
        }
        let q = cfg.field.scale;
        let v = normalize_and_quantize(&self.raw, model.norm_g0, q, model.bound)
            .unwrap_or_else(|_| vec![0; cfg.m]);
        let vf: Vec<F61> = v.iter().map(|&x| F61::from_i64(x)).collect();
        self.st.v0 = model.v0;
        let shared = Arc::clone(&self.shared);
        let polys = shared
            .setup
            .share_polys(&vf, &mut self.rng)
            .expect("length checked");
        let recipients: Vec<u32> = shared
            .clients
            .iter()
            .copied()
            .filter(|&c| c != self.id)
            .collect();
        let own = self.deal(
            Dealing::gradient(polys.len()),
            &polys,
            &recipients,
            self.fault == Fault::InvalidShares,
        );
        self.st.shares.insert(self.id, own);
    }

    /// Broadcasts commitments and sends each recipient its sealed, signed
    /// shares. Returns this party's own shares.
    fn deal(
        &mut self,
        dealing: Dealing,
        polys: &[Vec<F61>],
        recipients: &[u32],
        corrupt: bool,
    ) -> Vec<F61> {
        let shared = Arc::clone(&self.shared);
        let vss = &shared.vss;
        let clen = vss.commitment_len();
        let plen = vss.proof_len();
        let mut cbytes = Vec::with_capacity(polys.len() * clen);
        for p in polys {
            vss.write_commitment(&vss.commit(p).expect("degree d"), &mut cbytes);
        }
        let digest: [u8; 32] = Sha256::digest(&cbytes).into();
        self.outbox.push(Envelope::new(
            self.id,
            BROADCAST,
            dealing.round,
            encode_commitments(dealing.commit_kind, clen, &cbytes),
        ));
        let other: Vec<Vec<F61>> = if corrupt {
            let d = shared.cfg.d;
            polys
                .iter()
                .map(|p| {
                    let mut q = p.clone();
                    q.resize(d + 1, F61::zero());
                    for c in q.iter_mut() {
                        *c += F61::random(&mut self.rng);
                    }
                    q
                })
                .collect()
        } else {
            Vec::new()
        };
        for (n, &r) in recipients.iter().enumerate() {
            let src = if corrupt && n % 2 == 0 { &other } else { polys };
            let point = shared.alpha(r);
            let mut values = Vec::with_capacity(src.len());
            let mut proofs = Vec::with_capacity(src.len() * plen);
            for p in src {
                let w = vss.open(p, point).expect("degree d");
                values.push(w.value);
                vss.write_proof(&w.proof, &mut proofs);
            }
            let pt = encode_share_plaintext(&values, &proofs, plen);
            let key = self
                .keys
                .session(r, self.st.iteration)
                .expect("pairwise key");
            let ct = seal(&key, nonce(self.id, dealing.round, r), &[], &pt);
            let sig = self.keys.signing.sign(&signed_payload(
                dealing.share_kind,
                dealing.round,
                self.id,
                r,
                &digest,
                &ct,
            ));
            self.outbox.push(Envelope::new(
                self.id,
                r,
                dealing.round,
                encode_sealed(dealing.share_kind, &ct, &sig),
            ));
        }
        let me = shared.alpha(self.id);
        polys.iter().map(|p| poly::eval(p, me)).collect()
    }

    /// Verifies every dealing in the inbox; failures become complaints that
    /// reveal this iteration's pairwise key to the server.
    fn complain(&mut self, inbox: &[Envelope], which: u8) {
        let shared = Arc::clone(&self.shared);
        let (dealing, dealers): (Dealing, Vec<u32>) = if which == 1 {
            (
                Dealing::gradient(shared.cfg.blocks()),
                shared.clients.clone(),
            )
        } else {
            if !self.st.q1.contains(&self.id) {
                return;
            }
            (
                Dealing::reshare(2 * shared.cfg.groups(self.st.q1.len())),
                self.st.q1.clone(),
            )
        };
        let mut commits = BTreeMap::new();
        let mut sealed = BTreeMap::new();
        for e in inbox.iter().filter(|e| e.round == dealing.round) {
            match e.kind() {
                Some(k) if k == dealing.commit_kind => {
                    commits.insert(e.sender, &e.body);
                }
                Some(k) if k == dealing.share_kind && e.recipient == self.id => {
                    sealed.insert(e.sender, &e.body);
                }
                _ => {}
            }
        }
        let mut complaints = Vec::new();
        let me = self.id;
        for dealer in dealers.into_iter().filter(|&d| d != me) {
            match (commits.get(&dealer), sealed.get(&dealer)) {
                (Some(c), Some(s)) => {
                    let key = self
                        .keys
                        .session(dealer, self.st.iteration)
                        .expect("pairwise key");
                    match check_dealing(&shared, self.id, &key, dealer, dealing, c, s) {
                        Ok(v) => {
                            let store = if which == 1 {
                                &mut self.st.shares
                            } else {
                                &mut self.st.reshares
                            };
                            store.insert(dealer, v);
                        }
                        Err(reason) => {
                            self.reject(dealer, dealing.round, reason);
                            complaints.push(Complaint {
                                accused: dealer,
                                key,
                            });
                        }
                    }
                }
                (None, None) => {}
                _ => self.reject(dealer, dealing.round, RejectReason::Missing),
            }
        }
        self.outbox.push(Envelope::new(
            self.id,
            SERVER,
            dealing.round + 1,
            encode_complaints(&complaints),
        ));
    }

    /// Holds verified shares from every listed dealer; records the gaps.
    fn holds_all(&mut self, dealers: &[u32], round: u8) -> bool {
        let store = if round == 1 {
            &self.st.shares
        } else {
            &self.st.reshares
        };
        let missing: Vec<u32> = dealers
            .iter()
            .copied()
            .filter(|d| !store.contains_key(d))
            .collect();
        for &d in &missing {
            self.reject(d, round, RejectReason::Missing);
        }
        missing.is_empty()
    }

    fn round2(&mut self, inbox: &[Envelope]) {
        let Some(q1) = decision(inbox, 2) else { return };
        if !q1.contains(&self.id) || !self.holds_all(&q1, 1) {
            return;
        }
        let shared = Arc::clone(&self.shared);
        let v0 = &self.st.v0;
        let mut cs: Vec<F61> = q1
            .iter()
            .map(|j| partial_product(&self.st.shares[j], v0))
            .collect();
        let nr: Vec<F61> = q1
            .iter()
            .map(|j| partial_product(&self.st.shares[j], &self.st.shares[j]))
            .collect();
        if self.fault == Fault::WrongPartial {
            for x in cs.iter_mut() {
                *x += F61::new(self.rng.random_range(1..1_000_000));
            }
        }
        let mut polys = shared
            .setup
            .reshare_polys(&cs, &mut self.rng)
            .expect("group width p");
        polys.extend(
            shared
                .setup
                .reshare_polys(&nr, &mut self.rng)
                .expect("group width p"),
        );
        let recipients: Vec<u32> = q1.iter().copied().filter(|&c| c != self.id).collect();
        self.st.q1 = q1;
        let own = self.deal(
            Dealing::reshare(polys.len()),
            &polys,
            &recipients,
            self.fault == Fault::InvalidReshares,
        );
        self.st.reshares.insert(self.id, own);
    }

    fn round3(&mut self, inbox: &[Envelope]) {
        let Some(q2) = decision(inbox, 3) else { return };
        if !q2.contains(&self.id) || !self.holds_all(&q2, 2) {
            return;
        }
        let shared = Arc::clone(&self.shared);
        let cfg = &shared.cfg;
        let points: Vec<F61> = q2.iter().map(|&s| shared.alpha(s)).collect();
        let Ok(code) = SenderCode::new(points, shared.setup.grad.secret_points(), 2 * cfg.d) else {
            return;
        };
        let g = cfg.groups(self.st.q1.len());
        let column = |k: usize| -> Vec<F61> { q2.iter().map(|s| self.st.reshares[s][k]).collect() };
        let mut msg = FinalsMsg {
            cs: Vec::with_capacity(g),
            nr: Vec::with_capacity(g),
            cs_syn: Vec::with_capacity(g),
            nr_syn: Vec::with_capacity(g),
        };
        for k in 0..g {
            let c = column(k);
            msg.cs.push(code.collapse(&c));
            msg.cs_syn.push(code.syndromes(&c));
            let c = column(g + k);
            msg.nr.push(code.collapse(&c));
            msg.nr_syn.push(code.syndromes(&c));
        }
        if self.fault == Fault::WrongFinal {
            for x in msg.cs.iter_mut().chain(msg.nr.iter_mut()) {
                *x += F61::new(self.rng.random_range(1..1_000_000));
            }
        }
        self.outbox
            .push(Envelope::new(self.id, SERVER, 3, msg.encode()));
    }

    fn round4(&mut self, inbox: &[Envelope]) {
        let Some(scores) = inbox
            .iter()
            .find(|e| e.sender == SERVER && e.kind() == Some(Kind::Scores))
            .and_then(|e| ScoresMsg::decode(&e.body).ok())
        else {
            return;
        };
        let blocks = self.shared.cfg.blocks();
        let mut agg = vec![F61::zero(); blocks];
        for &(j, num) in &scores.scores {
            if num == 0 {
                continue;
            }
            let Some(sh) = self.st.shares.get(&j) else {
                self.reject(j, 1, RejectReason::Missing);
                return;
            };
            let w = F61::new(num);
            for (a, &s) in agg.iter_mut().zip(sh) {
                *a += w * s;
            }
        }
        if self.fault == Fault::WrongAggregate {
            agg[0] += F61::new(self.rng.random_range(1..1_000_000));
        }
        self.outbox
            .push(Envelope::new(self.id, SERVER, 4, encode_aggregate(&agg)));
    }
}
