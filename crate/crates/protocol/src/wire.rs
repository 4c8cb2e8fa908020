//! Envelope framing and message bodies.
//!
//! Header: sender u32 LE, recipient u32 LE, round u8, body length u32 LE.
//! The first body byte is the [`Kind`].

use rflpa_core::{Field, F61};
use serde::Serialize;
use thiserror::Error;

use crate::crypto::SIG_BYTES;

pub const HEADER_BYTES: usize = 13;
pub const SERVER: u32 = u32::MAX;
pub const BROADCAST: u32 = u32::MAX - 1;
pub const ELEM_BYTES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("truncated message")]
    Truncated,
    #[error("trailing bytes")]
    Trailing,
    #[error("unexpected message kind {0}")]
    Kind(u8),
    #[error("non-canonical field element")]
    Element,
    #[error("malformed {0}")]
    Malformed(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Kind {
    Model = 1,
    Commitments = 2,
    Shares = 3,
    Complaints = 4,
    Decision = 5,
    ReshareCommitments = 6,
    Reshares = 7,
    Finals = 8,
    Scores = 9,
    Aggregate = 10,
}

impl Kind {
    pub fn from_u8(b: u8) -> Option<Kind> {
        use Kind::*;
        Some(match b {
            1 => Model,
            2 => Commitments,
            3 => Shares,
            4 => Complaints,
            5 => Decision,
            6 => ReshareCommitments,
            7 => Reshares,
            8 => Finals,
            9 => Scores,
            10 => Aggregate,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub sender: u32,
    pub recipient: u32,
    pub round: u8,
    pub body: Vec<u8>,
}

impl Envelope {
    pub fn new(sender: u32, recipient: u32, round: u8, body: Vec<u8>) -> Self {
        Envelope {
            sender,
            recipient,
            round,
            body,
        }
    }

    pub fn kind(&self) -> Option<Kind> {
        self.body.first().and_then(|&b| Kind::from_u8(b))
    }

    pub fn wire_len(&self) -> usize {
        HEADER_BYTES + self.body.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        out.extend_from_slice(&self.sender.to_le_bytes());
        out.extend_from_slice(&self.recipient.to_le_bytes());
        out.push(self.round);
        out.extend_from_slice(&(self.body.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.body);
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(b);
        let sender = r.u32()?;
        let recipient = r.u32()?;
        let round = r.u8()?;
        let len = r.u32()? as usize;
        let body = r.bytes(len)?.to_vec();
        r.finish()?;
        Ok(Envelope {
            sender,
            recipient,
            round,
            body,
        })
    }
}

#[derive(Debug, Default)]
pub struct Writer(pub Vec<u8>);

impl Writer {
    pub fn new(kind: Kind) -> Self {
        Writer(vec![kind as u8])
    }
    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }
    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }
    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }
    pub fn elem(&mut self, v: F61) -> &mut Self {
        self.0.extend_from_slice(&v.to_bytes());
        self
    }
    pub fn elems(&mut self, v: &[F61]) -> &mut Self {
        self.u32(v.len() as u32);
        v.iter().for_each(|&x| {
            self.elem(x);
        });
        self
    }
    pub fn raw(&mut self, b: &[u8]) -> &mut Self {
        self.0.extend_from_slice(b);
        self
    }
    /// Length-prefixed bytes.
    pub fn blob(&mut self, b: &[u8]) -> &mut Self {
        self.u32(b.len() as u32);
        self.raw(b)
    }
    pub fn finish(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.0)
    }
}

#[derive(Debug)]
pub struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(b: &'a [u8]) -> Self {
        Reader { b, pos: 0 }
    }

    /// Reader positioned after the kind byte, which must match.
    pub fn body(b: &'a [u8], kind: Kind) -> Result<Self, WireError> {
        let mut r = Reader::new(b);
        let k = r.u8()?;
        if k != kind as u8 {
            return Err(WireError::Kind(k));
        }
        Ok(r)
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        let end = self.pos.checked_add(n).ok_or(WireError::Truncated)?;
        let s = self.b.get(self.pos..end).ok_or(WireError::Truncated)?;
        self.pos = end;
        Ok(s)
    }
    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.bytes(1)?[0])
    }
    pub fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }
    pub fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    pub fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    pub fn elem(&mut self) -> Result<F61, WireError> {
        F61::from_bytes(self.bytes(ELEM_BYTES)?.try_into().unwrap()).ok_or(WireError::Element)
    }
    pub fn elems(&mut self) -> Result<Vec<F61>, WireError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(ELEM_BYTES) > self.remaining() {
            return Err(WireError::Truncated);
        }
        (0..n).map(|_| self.elem()).collect()
    }
    pub fn blob(&mut self) -> Result<&'a [u8], WireError> {
        let n = self.u32()? as usize;
        self.bytes(n)
    }
    pub fn remaining(&self) -> usize {
        self.b.len() - self.pos
    }
    pub fn finish(&self) -> Result<(), WireError> {
        if self.remaining() == 0 {
            Ok(())
        } else {
            Err(WireError::Trailing)
        }
    }
}

/// Server to client, round 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMsg {
    pub iteration: u64,
    pub norm_g0: f64,
    /// `||v0||^2`, the quantized norm bound.
    pub bound: u64,
    pub model: Vec<f64>,
    /// The recipient's shares of the root gradient, one per block.
    pub v0: Vec<F61>,
}

impl ModelMsg {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new(Kind::Model);
        w.u64(self.iteration).f64(self.norm_g0).u64(self.bound);
        w.u32(self.model.len() as u32);
        self.model.iter().for_each(|&x| {
            w.f64(x);
        });
        w.elems(&self.v0).finish()
    }

    pub fn decode(b: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::body(b, Kind::Model)?;
        let iteration = r.u64()?;
        let norm_g0 = r.f64()?;
        let bound = r.u64()?;
        let m = r.u32()? as usize;
        if m.saturating_mul(8) > r.remaining() {
            return Err(WireError::Truncated);
        }
        let model = (0..m).map(|_| r.f64()).collect::<Result<_, _>>()?;
        let v0 = r.elems()?;
        r.finish()?;
        Ok(ModelMsg {
            iteration,
            norm_g0,
            bound,
            model,
            v0,
        })
    }
}

/// Broadcast commitments, one serialized commitment per polynomial.
pub fn encode_commitments(kind: Kind, commitment_len: usize, serialized: &[u8]) -> Vec<u8> {
    debug_assert_eq!(serialized.len() % commitment_len.max(1), 0);
    let count = serialized.len().checked_div(commitment_len).unwrap_or(0);
    let mut w = Writer::new(kind);
    w.u32(count as u32).raw(serialized).finish()
}

/// Returns the commitment bytes, checked against the expected count.
pub fn decode_commitments(
    b: &[u8],
    kind: Kind,
    commitment_len: usize,
    count: usize,
) -> Result<&[u8], WireError> {
    let mut r = Reader::body(b, kind)?;
    if r.u32()? as usize != count {
        return Err(WireError::Malformed("commitment count"));
    }
    let raw = r.bytes(count * commitment_len)?;
    r.finish()?;
    Ok(raw)
}

/// Pairwise sealed shares with the dealer's signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedMsg<'a> {
    pub ciphertext: &'a [u8],
    pub signature: &'a [u8],
}

pub fn encode_sealed(kind: Kind, ciphertext: &[u8], signature: &[u8; SIG_BYTES]) -> Vec<u8> {
    Writer::new(kind).blob(ciphertext).raw(signature).finish()
}

pub fn decode_sealed(b: &[u8], kind: Kind) -> Result<SealedMsg<'_>, WireError> {
    let mut r = Reader::body(b, kind)?;
    let ciphertext = r.blob()?;
    let signature = r.bytes(SIG_BYTES)?;
    r.finish()?;
    Ok(SealedMsg {
        ciphertext,
        signature,
    })
}

/// Byte offsets of the ciphertext and signature inside a sealed body.
pub fn sealed_fields(body_len: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let ct_end = body_len - SIG_BYTES;
    (5..ct_end, ct_end..body_len)
}

/// Share plaintext: per polynomial, the value followed by its proof bytes.
pub fn encode_share_plaintext(values: &[F61], proofs: &[u8], proof_len: usize) -> Vec<u8> {
    let mut w = Writer::default();
    w.u32(values.len() as u32);
    for (i, &v) in values.iter().enumerate() {
        w.elem(v).raw(&proofs[i * proof_len..(i + 1) * proof_len]);
    }
    w.finish()
}

pub fn decode_share_plaintext(
    b: &[u8],
    proof_len: usize,
) -> Result<(Vec<F61>, Vec<&[u8]>), WireError> {
    let mut r = Reader::new(b);
    let n = r.u32()? as usize;
    if n.saturating_mul(ELEM_BYTES + proof_len) != r.remaining() {
        return Err(WireError::Malformed("share count"));
    }
    let mut values = Vec::with_capacity(n);
    let mut proofs = Vec::with_capacity(n);
    for _ in 0..n {
        values.push(r.elem()?);
        proofs.push(r.bytes(proof_len)?);
    }
    Ok((values, proofs))
}

/// A complaint reveals the pairwise key so the server can open the message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Complaint {
    pub accused: u32,
    pub key: [u8; 32],
}

pub fn encode_complaints(cs: &[Complaint]) -> Vec<u8> {
    let mut w = Writer::new(Kind::Complaints);
    w.u32(cs.len() as u32);
    for c in cs {
        w.u32(c.accused).raw(&c.key);
    }
    w.finish()
}

pub fn decode_complaints(b: &[u8]) -> Result<Vec<Complaint>, WireError> {
    let mut r = Reader::body(b, Kind::Complaints)?;
    let n = r.u32()? as usize;
    if n.saturating_mul(36) != r.remaining() {
        return Err(WireError::Malformed("complaint count"));
    }
    (0..n)
        .map(|_| {
            Ok(Complaint {
                accused: r.u32()?,
                key: r.bytes(32)?.try_into().unwrap(),
            })
        })
        .collect()
}

pub fn encode_ids(kind: Kind, ids: &[u32]) -> Vec<u8> {
    let mut w = Writer::new(kind);
    w.u32(ids.len() as u32);
    ids.iter().for_each(|&i| {
        w.u32(i);
    });
    w.finish()
}

pub fn decode_ids(b: &[u8], kind: Kind) -> Result<Vec<u32>, WireError> {
    let mut r = Reader::body(b, kind)?;
    let n = r.u32()? as usize;
    if n.saturating_mul(4) != r.remaining() {
        return Err(WireError::Malformed("id count"));
    }
    (0..n).map(|_| r.u32()).collect()
}

/// Round-3 upload: collapsed shares and syndrome shares per group, for the
/// dot-product and the norm pipelines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalsMsg {
    pub cs: Vec<F61>,
    pub nr: Vec<F61>,
    /// `[group][t]`
    pub cs_syn: Vec<Vec<F61>>,
    pub nr_syn: Vec<Vec<F61>>,
}

impl FinalsMsg {
    pub fn encode(&self) -> Vec<u8> {
        let groups = self.cs.len();
        let t = self.cs_syn.first().map_or(0, Vec::len);
        let mut w = Writer::new(Kind::Finals);
        w.u32(groups as u32).u32(t as u32);
        for v in [&self.cs, &self.nr] {
            v.iter().for_each(|&x| {
                w.elem(x);
            });
        }
        for s in [&self.cs_syn, &self.nr_syn] {
            s.iter().flatten().for_each(|&x| {
                w.elem(x);
            });
        }
        w.finish()
    }

    pub fn decode(b: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::body(b, Kind::Finals)?;
        let groups = r.u32()? as usize;
        let t = r.u32()? as usize;
        let total = groups.saturating_mul(2).saturating_mul(t.saturating_add(1));
        if total.saturating_mul(ELEM_BYTES) != r.remaining() {
            return Err(WireError::Malformed("finals size"));
        }
        let mut vec = |n: usize| (0..n).map(|_| r.elem()).collect::<Result<Vec<_>, _>>();
        let cs = vec(groups)?;
        let nr = vec(groups)?;
        let mut cs_syn = Vec::with_capacity(groups);
        for _ in 0..groups {
            cs_syn.push(vec(t)?);
        }
        let mut nr_syn = Vec::with_capacity(groups);
        for _ in 0..groups {
            nr_syn.push(vec(t)?);
        }
        Ok(FinalsMsg {
            cs,
            nr,
            cs_syn,
            nr_syn,
        })
    }
}

/// Trust-score numerators `max(0, <v_j, v0>)` and the users excluded so far.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoresMsg {
    pub scores: Vec<(u32, u64)>,
    pub excluded: Vec<u32>,
}

impl ScoresMsg {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new(Kind::Scores);
        w.u32(self.scores.len() as u32);
        for &(id, s) in &self.scores {
            w.u32(id).u64(s);
        }
        w.u32(self.excluded.len() as u32);
        self.excluded.iter().for_each(|&i| {
            w.u32(i);
        });
        w.finish()
    }

    pub fn decode(b: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::body(b, Kind::Scores)?;
        let n = r.u32()? as usize;
        if n.saturating_mul(12) > r.remaining() {
            return Err(WireError::Truncated);
        }
        let scores = (0..n)
            .map(|_| Ok((r.u32()?, r.u64()?)))
            .collect::<Result<_, WireError>>()?;
        let k = r.u32()? as usize;
        if k.saturating_mul(4) != r.remaining() {
            return Err(WireError::Malformed("excluded count"));
        }
        let excluded = (0..k).map(|_| r.u32()).collect::<Result<_, _>>()?;
        Ok(ScoresMsg { scores, excluded })
    }
}

pub fn encode_aggregate(blocks: &[F61]) -> Vec<u8> {
    Writer::new(Kind::Aggregate).elems(blocks).finish()
}

pub fn decode_aggregate(b: &[u8]) -> Result<Vec<F61>, WireError> {
    let mut r = Reader::body(b, Kind::Aggregate)?;
    let v = r.elems()?;
    r.finish()?;
    Ok(v)
}

/// Bytes covered by a dealer's pairwise signature.
pub fn signed_payload(
    kind: Kind,
    round: u8,
    sender: u32,
    recipient: u32,
    commitments_digest: &[u8; 32],
    ciphertext: &[u8],
) -> Vec<u8> {
    let mut m = Vec::with_capacity(48 + ciphertext.len());
    m.extend_from_slice(b"rflpa/share");
    m.push(kind as u8);
    m.push(round);
    m.extend_from_slice(&sender.to_le_bytes());
    m.extend_from_slice(&recipient.to_le_bytes());
    m.extend_from_slice(commitments_digest);
    m.extend_from_slice(ciphertext);
    m
}
