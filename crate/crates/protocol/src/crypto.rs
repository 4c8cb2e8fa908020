//! Key agreement, authenticated encryption and signatures.
//!
//! `CryptoMode::FastSim` swaps the signature scheme for a keyed SHA-512 tag
//! of the same width. Encryption and key agreement are always real, so the
//! two modes produce byte-identical traffic.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use ed25519_dalek::{Signer, Verifier};
use rand::Rng;
use sha2::{Digest, Sha256, Sha512};
use thiserror::Error;
use x25519_dalek::{PublicKey, StaticSecret};

pub const KEY_BYTES: usize = 32;
pub const SIG_BYTES: usize = 64;
pub const NONCE_BYTES: usize = 12;
pub const TAG_BYTES: usize = 16;
/// Bytes added by [`seal`]: the nonce prefix and the tag.
pub const SEAL_OVERHEAD: usize = NONCE_BYTES + TAG_BYTES;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("authentication failed")]
    Auth,
    #[error("ciphertext shorter than {SEAL_OVERHEAD} bytes")]
    Truncated,
    #[error("signature on the agreement key of party {0} does not verify")]
    BadKeySignature(u32),
    #[error("duplicate party id {0}")]
    DuplicateParty(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum CryptoMode {
    #[default]
    Real,
    FastSim,
}

impl fmt::Display for CryptoMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CryptoMode::Real => "real",
            CryptoMode::FastSim => "fast-sim",
        })
    }
}

impl FromStr for CryptoMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real" | "real-crypto" => Ok(CryptoMode::Real),
            "fast-sim" | "fast" => Ok(CryptoMode::FastSim),
            other => Err(format!(
                "unknown crypto mode {other:?} (expected real or fast-sim)"
            )),
        }
    }
}

#[derive(Clone)]
pub enum SigningKey {
    Ed(Box<ed25519_dalek::SigningKey>),
    Keyed([u8; 32]),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerifyingKey {
    Ed(ed25519_dalek::VerifyingKey),
    Keyed([u8; 32]),
}

impl fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SigningKey(..)")
    }
}

fn keyed_tag(key: &[u8; 32], m: &[u8]) -> [u8; SIG_BYTES] {
    let mut h = Sha512::new();
    h.update(b"rflpa/fast-sig");
    h.update(key);
    h.update(m);
    h.finalize().into()
}

impl SigningKey {
    pub fn generate<R: Rng + ?Sized>(mode: CryptoMode, rng: &mut R) -> Self {
        let seed: [u8; 32] = rng.random();
        match mode {
            CryptoMode::Real => {
                SigningKey::Ed(Box::new(ed25519_dalek::SigningKey::from_bytes(&seed)))
            }
            CryptoMode::FastSim => SigningKey::Keyed(seed),
        }
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        match self {
            SigningKey::Ed(k) => VerifyingKey::Ed(k.verifying_key()),
            SigningKey::Keyed(k) => VerifyingKey::Keyed(*k),
        }
    }

    pub fn sign(&self, m: &[u8]) -> [u8; SIG_BYTES] {
        match self {
            SigningKey::Ed(k) => k.sign(m).to_bytes(),
            SigningKey::Keyed(k) => keyed_tag(k, m),
        }
    }
}

impl VerifyingKey {
    pub fn verify(&self, m: &[u8], sig: &[u8]) -> bool {
        let Ok(sig) = <[u8; SIG_BYTES]>::try_from(sig) else {
            return false;
        };
        match self {
            VerifyingKey::Ed(k) => k
                .verify(m, &ed25519_dalek::Signature::from_bytes(&sig))
                .is_ok(),
            VerifyingKey::Keyed(k) => keyed_tag(k, m) == sig,
        }
    }
}

/// `nonce || ChaCha20-Poly1305(k, nonce, plaintext, aad)`.
pub fn seal(
    key: &[u8; KEY_BYTES],
    nonce: [u8; NONCE_BYTES],
    aad: &[u8],
    plaintext: &[u8],
) -> Vec<u8> {
    let cipher = ChaCha20Poly1305::new(Key::from_slice(key));
    let ct = cipher
        .encrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: plaintext,
                aad,
            },
        )
        .expect("in-memory encryption cannot fail");
    let mut out = Vec::with_capacity(NONCE_BYTES + ct.len());
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&ct);
    out
}

pub fn unseal(key: &[u8; KEY_BYTES], aad: &[u8], sealed: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if sealed.len() < SEAL_OVERHEAD {
        return Err(CryptoError::Truncated);
    }
    let (nonce, ct) = sealed.split_at(NONCE_BYTES);
    ChaCha20Poly1305::new(Key::from_slice(key))
        .decrypt(Nonce::from_slice(nonce), Payload { msg: ct, aad })
        .map_err(|_| CryptoError::Auth)
}

/// Counter nonce; the sender id keeps the two directions of a pair apart.
pub fn nonce(sender: u32, round: u8, counter: u32) -> [u8; NONCE_BYTES] {
    let mut n = [0u8; NONCE_BYTES];
    n[..4].copy_from_slice(&sender.to_le_bytes());
    n[4] = round;
    n[8..].copy_from_slice(&counter.to_le_bytes());
    n
}

fn pairwise_key(dh: &[u8; 32], a: u32, b: u32) -> [u8; KEY_BYTES] {
    let (lo, hi) = (a.min(b), a.max(b));
    let mut h = Sha256::new();
    h.update(b"rflpa/pairwise");
    h.update(dh);
    h.update(lo.to_le_bytes());
    h.update(hi.to_le_bytes());
    h.finalize().into()
}

pub fn session_key(pairwise: &[u8; KEY_BYTES], iteration: u64) -> [u8; KEY_BYTES] {
    let mut h = Sha256::new();
    h.update(b"rflpa/session");
    h.update(pairwise);
    h.update(iteration.to_le_bytes());
    h.finalize().into()
}

fn agreement_statement(id: u32, pk: &[u8; 32]) -> Vec<u8> {
    let mut m = b"rflpa/agreement-key".to_vec();
    m.extend_from_slice(&id.to_le_bytes());
    m.extend_from_slice(pk);
    m
}

/// One party's secrets after key setup.
#[derive(Debug, Clone)]
pub struct PartyKeys {
    pub id: u32,
    pub signing: SigningKey,
    pairwise: BTreeMap<u32, [u8; KEY_BYTES]>,
}

impl PartyKeys {
    pub fn pairwise(&self, other: u32) -> Option<&[u8; KEY_BYTES]> {
        self.pairwise.get(&other)
    }

    /// Key for one iteration. Complaints reveal this key, never the pairwise one.
    pub fn session(&self, other: u32, iteration: u64) -> Option<[u8; KEY_BYTES]> {
        self.pairwise.get(&other).map(|k| session_key(k, iteration))
    }

    pub fn peers(&self) -> impl Iterator<Item = u32> + '_ {
        self.pairwise.keys().copied()
    }
}

#[derive(Debug, Clone)]
pub struct KeyPairSet {
    pub parties: Vec<PartyKeys>,
    pub verifying: BTreeMap<u32, VerifyingKey>,
}

impl KeyPairSet {
    /// Number of distinct unordered pairwise keys.
    pub fn distinct_pairwise(&self) -> usize {
        let mut all: Vec<[u8; KEY_BYTES]> = self
            .parties
            .iter()
            .flat_map(|p| p.pairwise.values().copied())
            .collect();
        all.sort_unstable();
        all.dedup();
        all.len()
    }
}

/// The trusted party hands out signing keys, every party publishes a signed
/// agreement key, every party checks all other signatures and derives the
/// pairwise keys. `tamper` may rewrite a published key in transit.
pub fn setup_keys_with<R, T>(
    ids: &[u32],
    mode: CryptoMode,
    rng: &mut R,
    mut tamper: T,
) -> Result<KeyPairSet, CryptoError>
where
    R: Rng + ?Sized,
    T: FnMut(u32, &mut [u8; 32]),
{
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(CryptoError::DuplicateParty(w[0]));
    }
    let signing: Vec<SigningKey> = ids
        .iter()
        .map(|_| SigningKey::generate(mode, rng))
        .collect();
    let verifying: BTreeMap<u32, VerifyingKey> = ids
        .iter()
        .zip(&signing)
        .map(|(&i, s)| (i, s.verifying_key()))
        .collect();
    let secrets: Vec<StaticSecret> = ids
        .iter()
        .map(|_| StaticSecret::from(rng.random::<[u8; 32]>()))
        .collect();
    let published: Vec<([u8; 32], [u8; SIG_BYTES])> = ids
        .iter()
        .zip(&secrets)
        .zip(&signing)
        .map(|((&id, s), sk)| {
            let pk = PublicKey::from(s).to_bytes();
            (pk, sk.sign(&agreement_statement(id, &pk)))
        })
        .collect();
    let mut received = published.clone();
    for (&id, (pk, _)) in ids.iter().zip(received.iter_mut()) {
        tamper(id, pk);
    }
    for (&id, (pk, sig)) in ids.iter().zip(&received) {
        if !verifying[&id].verify(&agreement_statement(id, pk), sig) {
            return Err(CryptoError::BadKeySignature(id));
        }
    }
    let parties = ids
        .iter()
        .zip(secrets)
        .zip(signing)
        .map(|((&id, secret), signing)| {
            let pairwise = ids
                .iter()
                .zip(&received)
                .filter(|(&j, _)| j != id)
                .map(|(&j, (pk, _))| {
                    let dh = secret.diffie_hellman(&PublicKey::from(*pk));
                    (j, pairwise_key(dh.as_bytes(), id, j))
                })
                .collect();
            PartyKeys {
                id,
                signing,
                pairwise,
            }
        })
        .collect();
    Ok(KeyPairSet { parties, verifying })
}

pub fn setup_keys<R: Rng + ?Sized>(
    ids: &[u32],
    mode: CryptoMode,
    rng: &mut R,
) -> Result<KeyPairSet, CryptoError> {
    setup_keys_with(ids, mode, rng, |_, _| {})
}
