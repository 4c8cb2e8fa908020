//! Size-only execution: counts the bytes of an honest, dropout-free
//! iteration without doing any cryptography. Every message shape is built
//! once with the real encoders, so lengths match the full engine exactly.

use rflpa_core::vss::Vss;
use rflpa_core::F61;

use crate::config::ProtocolConfig;
use crate::crypto::{SEAL_OVERHEAD, SIG_BYTES};
use crate::mailbox::Mailbox;
use crate::wire::{
    encode_aggregate, encode_commitments, encode_complaints, encode_ids, encode_sealed,
    encode_share_plaintext, FinalsMsg, Kind, ModelMsg, ScoresMsg, BROADCAST, SERVER,
};

/// Serialized commitment and proof lengths of a backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeModel {
    pub commitment: usize,
    pub proof: usize,
}

impl SizeModel {
    pub fn of(vss: &Vss) -> Self {
        SizeModel {
            commitment: vss.commitment_len(),
            proof: vss.proof_len(),
        }
    }
}

fn commitments_len(size: SizeModel, kind: Kind, count: usize) -> usize {
    encode_commitments(kind, size.commitment, &vec![0u8; count * size.commitment]).len()
}

fn sealed_len(size: SizeModel, kind: Kind, count: usize) -> usize {
    let pt = encode_share_plaintext(
        &vec![F61::default(); count],
        &vec![0u8; count * size.proof],
        size.proof,
    );
    encode_sealed(
        kind,
        &vec![0u8; pt.len() + SEAL_OVERHEAD],
        &[0u8; SIG_BYTES],
    )
    .len()
}

/// Counts one honest iteration into a fresh mailbox.
pub fn simulate(cfg: &ProtocolConfig, size: SizeModel) -> Mailbox {
    let ids: Vec<u32> = (0..cfg.n as u32).collect();
    let mut mb = Mailbox::new(ids.clone());
    let blocks = cfg.blocks();
    let groups = cfg.groups(cfg.n);
    let t = cfg.n.saturating_sub(2 * cfg.d + 1);

    let model = ModelMsg {
        iteration: 0,
        norm_g0: 0.0,
        bound: 0,
        model: vec![0.0; cfg.m],
        v0: vec![F61::default(); blocks],
    }
    .encode()
    .len();
    for &c in &ids {
        mb.account(SERVER, c, 0, Kind::Model, model);
    }

    let dealings = [
        (1u8, Kind::Commitments, Kind::Shares, blocks),
        (2, Kind::ReshareCommitments, Kind::Reshares, 2 * groups),
    ];
    let complaints = encode_complaints(&[]).len();
    let decision = encode_ids(Kind::Decision, &ids).len();
    for (round, ck, sk, count) in dealings {
        let clen = commitments_len(size, ck, count);
        let slen = sealed_len(size, sk, count);
        for &c in &ids {
            mb.account(c, BROADCAST, round, ck, clen);
            for &r in ids.iter().filter(|&&r| r != c) {
                mb.account(c, r, round, sk, slen);
            }
        }
        for &c in &ids {
            mb.account(c, SERVER, round + 1, Kind::Complaints, complaints);
        }
        mb.account(SERVER, BROADCAST, round + 1, Kind::Decision, decision);
    }

    let finals = FinalsMsg {
        cs: vec![F61::default(); groups],
        nr: vec![F61::default(); groups],
        cs_syn: vec![vec![F61::default(); t]; groups],
        nr_syn: vec![vec![F61::default(); t]; groups],
    }
    .encode()
    .len();
    for &c in &ids {
        mb.account(c, SERVER, 3, Kind::Finals, finals);
    }
    let scores = ScoresMsg {
        scores: ids.iter().map(|&i| (i, 0)).collect(),
        excluded: Vec::new(),
    }
    .encode()
    .len();
    mb.account(SERVER, BROADCAST, 4, Kind::Scores, scores);
    let agg = encode_aggregate(&vec![F61::default(); blocks]).len();
    for &c in &ids {
        mb.account(c, SERVER, 4, Kind::Aggregate, agg);
    }
    mb
}
