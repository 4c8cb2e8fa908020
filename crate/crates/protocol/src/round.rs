//! Types shared by the client and server state machines.

use std::collections::BTreeMap;
use std::fmt;

use rflpa_core::dotprod::DotProductSetup;
use rflpa_core::vss::Vss;
use rflpa_core::F61;
use serde::Serialize;

use crate::config::ProtocolConfig;
use crate::crypto::VerifyingKey;

/// Public, read-only state every party holds.
#[derive(Debug)]
pub struct Shared {
    pub cfg: ProtocolConfig,
    pub vss: Vss,
    pub setup: DotProductSetup<F61>,
    pub verifying: BTreeMap<u32, VerifyingKey>,
    pub clients: Vec<u32>,
}

impl Shared {
    pub fn alpha(&self, id: u32) -> F61 {
        self.setup.grad.eval_points()[id as usize]
    }
}

/// Deviations a client can be scripted to make.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    #[default]
    Honest,
    /// Round 1 shares to half the recipients come from a second polynomial.
    InvalidShares,
    /// Same, for the round-2 re-shares.
    InvalidReshares,
    /// Re-shares consistent polynomials of wrong partial products.
    WrongPartial,
    /// Sends wrong round-3 final shares.
    WrongFinal,
    /// Sends a wrong round-4 aggregate share.
    WrongAggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Offense {
    InvalidShares,
    InvalidReshares,
    WrongPartial,
    WrongFinal,
    WrongAggregate,
    NormBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Missing,
    Malformed,
    Commitment,
    Signature,
    Decrypt,
    Share,
}

/// A recipient refusing a sender's message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub recipient: u32,
    pub sender: u32,
    pub round: u8,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Abort {
    pub round: u8,
    pub reason: String,
}

impl fmt::Display for Abort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "round {} aborted: {}", self.round, self.reason)
    }
}

impl std::error::Error for Abort {}

/// Server-side snapshot of the respondent chain.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RoundState {
    /// Last round that completed.
    pub round: u8,
    pub threshold: usize,
    /// `U1 .. U4`.
    pub respondents: [Vec<u32>; 4],
    /// Dealers kept after the round-1 and round-2 complaints.
    pub qualified: [Vec<u32>; 2],
}

impl RoundState {
    pub fn is_monotone(&self) -> bool {
        let sub = |a: &[u32], b: &[u32]| a.iter().all(|x| b.contains(x));
        let [u1, u2, u3, u4] = &self.respondents;
        let [q1, q2] = &self.qualified;
        sub(q1, u1) && sub(u2, q1) && sub(q2, u2) && sub(u3, q2) && sub(u4, u3)
    }
}

pub(crate) fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed for one party in one iteration.
pub fn derive_seed(seed: u64, iteration: u64, party: u32) -> u64 {
    splitmix(splitmix(seed ^ splitmix(iteration)) ^ party as u64)
}
