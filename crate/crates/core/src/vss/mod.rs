//! Verifiable sharing: polynomial commitments with per-point witnesses.
//!
//! Two backends share one interface. `Feldman` commits to every coefficient
//! in a prime-order subgroup of `Z_Q^*` and needs no witness; `Kzg` commits
//! to the whole polynomial with one curve point and checks openings with a
//! pairing.

pub mod curve;
pub mod feldman;
pub mod kzg;
pub mod mont;
pub mod schnorr;

use core::fmt;
use core::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::field::F61;
use curve::G1;
use feldman::FeldmanParams;
use kzg::KzgParams;
use schnorr::GroupElem;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VssError {
    #[error("polynomial of degree {degree} exceeds the setup degree {max}")]
    DegreeOverflow { degree: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Feldman,
    Kzg,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Feldman => "feldman",
            Backend::Kzg => "kzg",
        })
    }
}

impl FromStr for Backend {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "feldman" => Ok(Backend::Feldman),
            "kzg" | "pairing" => Ok(Backend::Kzg),
            other => Err(format!("unknown commitment backend `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Commitment {
    Feldman(Vec<GroupElem>),
    Kzg(G1),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Proof {
    Empty,
    Kzg(G1),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub point: F61,
    pub value: F61,
    pub proof: Proof,
}

#[derive(Debug, Clone)]
pub enum Vss {
    Feldman(FeldmanParams),
    Kzg(KzgParams),
}

impl Vss {
    /// Run once by the trusted setup role. The Feldman backend draws no
    /// randomness.
    pub fn setup<R: Rng + ?Sized>(backend: Backend, max_degree: usize, rng: &mut R) -> Self {
        match backend {
            Backend::Feldman => Vss::Feldman(FeldmanParams::setup(max_degree)),
            Backend::Kzg => Vss::Kzg(KzgParams::setup(max_degree, rng)),
        }
    }

    pub fn backend(&self) -> Backend {
        match self {
            Vss::Feldman(_) => Backend::Feldman,
            Vss::Kzg(_) => Backend::Kzg,
        }
    }

    pub fn max_degree(&self) -> usize {
        match self {
            Vss::Feldman(p) => p.max_degree(),
            Vss::Kzg(p) => p.max_degree(),
        }
    }

    fn check_degree(&self, coeffs: &[F61]) -> Result<(), VssError> {
        let max = self.max_degree();
        match crate::poly::degree(coeffs) {
            Some(degree) if degree > max => Err(VssError::DegreeOverflow { degree, max }),
            _ => Ok(()),
        }
    }

    fn trimmed<'a>(&self, coeffs: &'a [F61]) -> &'a [F61] {
        &coeffs[..coeffs.len().min(self.max_degree() + 1)]
    }

    pub fn commit(&self, coeffs: &[F61]) -> Result<Commitment, VssError> {
        self.check_degree(coeffs)?;
        let c = self.trimmed(coeffs);
        Ok(match self {
            Vss::Feldman(p) => Commitment::Feldman(p.commit(c)),
            Vss::Kzg(p) => Commitment::Kzg(p.commit(c)),
        })
    }

    pub fn open(&self, coeffs: &[F61], point: F61) -> Result<Witness, VssError> {
        self.check_degree(coeffs)?;
        let c = self.trimmed(coeffs);
        Ok(match self {
            Vss::Feldman(_) => Witness {
                point,
                value: crate::poly::eval(c, point),
                proof: Proof::Empty,
            },
            Vss::Kzg(p) => {
                let (value, w) = p.open(c, point);
                Witness {
                    point,
                    value,
                    proof: Proof::Kzg(w),
                }
            }
        })
    }

    /// False on any mismatch, including a commitment or proof from the
    /// other backend.
    pub fn verify(&self, c: &Commitment, w: &Witness) -> bool {
        match (self, c, &w.proof) {
            (Vss::Feldman(p), Commitment::Feldman(cs), Proof::Empty) => {
                cs.len() == p.max_degree() + 1 && p.verify(cs, w.point, w.value)
            }
            (Vss::Kzg(p), Commitment::Kzg(cm), Proof::Kzg(pf)) => {
                p.verify(cm, w.point, w.value, pf)
            }
            _ => false,
        }
    }

    /// Serialized commitment size for one polynomial.
    pub fn commitment_len(&self) -> usize {
        match self {
            Vss::Feldman(p) => (p.max_degree() + 1) * schnorr::ELEMENT_BYTES,
            Vss::Kzg(_) => curve::POINT_BYTES,
        }
    }

    /// Serialized witness size, excluding the share value itself.
    pub fn proof_len(&self) -> usize {
        match self {
            Vss::Feldman(_) => 0,
            Vss::Kzg(_) => curve::POINT_BYTES,
        }
    }

    pub fn write_commitment(&self, c: &Commitment, out: &mut Vec<u8>) {
        match c {
            Commitment::Feldman(cs) => cs.iter().for_each(|e| out.extend_from_slice(&e.to_bytes())),
            Commitment::Kzg(p) => out.extend_from_slice(&p.to_bytes()),
        }
    }

    pub fn read_commitment(&self, b: &[u8]) -> Option<Commitment> {
        if b.len() != self.commitment_len() {
            return None;
        }
        match self {
            Vss::Feldman(_) => b
                .chunks_exact(schnorr::ELEMENT_BYTES)
                .map(GroupElem::from_bytes)
                .collect::<Option<Vec<_>>>()
                .map(Commitment::Feldman),
            Vss::Kzg(_) => G1::from_bytes(b).map(Commitment::Kzg),
        }
    }

    pub fn write_proof(&self, p: &Proof, out: &mut Vec<u8>) {
        if let Proof::Kzg(w) = p {
            out.extend_from_slice(&w.to_bytes());
        }
    }

    pub fn read_proof(&self, b: &[u8]) -> Option<Proof> {
        if b.len() != self.proof_len() {
            return None;
        }
        match self {
            Vss::Feldman(_) => Some(Proof::Empty),
            Vss::Kzg(_) => G1::from_bytes(b).map(Proof::Kzg),
        }
    }
}

impl Commitment {
    /// Commitment to `a * phi1 + b * phi2` from the two commitments.
    pub fn combine(&self, a: F61, other: &Commitment, b: F61) -> Option<Commitment> {
        match (self, other) {
            (Commitment::Feldman(x), Commitment::Feldman(y)) if x.len() == y.len() => {
                Some(Commitment::Feldman(
                    x.iter()
                        .zip(y)
                        .map(|(&p, &q)| p.pow_f(a).op(q.pow_f(b)))
                        .collect(),
                ))
            }
            (Commitment::Kzg(x), Commitment::Kzg(y)) => {
                Some(Commitment::Kzg(x.mul(a).add(y.mul(b)).normalize()))
            }
            _ => None,
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            Commitment::Feldman(cs) => cs.iter().all(|c| c.is_identity()),
            Commitment::Kzg(p) => p.is_identity(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Field;
    use crate::packed::SharingConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_poly(rng: &mut ChaCha8Rng, d: usize) -> Vec<F61> {
        (0..=d).map(|_| F61::random(rng)).collect()
    }

    fn both(d: usize, seed: u64) -> [Vss; 2] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        [
            Vss::setup(Backend::Feldman, d, &mut rng),
            Vss::setup(Backend::Kzg, d, &mut rng),
        ]
    }

    #[test]
    fn setup_shapes_and_determinism() {
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(1);
        let (Vss::Kzg(a), Vss::Kzg(b)) = (
            Vss::setup(Backend::Kzg, 0, &mut r1),
            Vss::setup(Backend::Kzg, 0, &mut r2),
        ) else {
            unreachable!()
        };
        assert_eq!(a.powers().len(), 1);
        assert_eq!(a.powers(), b.powers());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let Vss::Kzg(big) = Vss::setup(Backend::Kzg, 40, &mut rng) else {
            unreachable!()
        };
        assert_eq!(big.powers().len(), 41);
    }

    #[test]
    fn completeness_and_soundness_smoke() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for vss in both(4, 4) {
            for _ in 0..5 {
                let phi = rand_poly(&mut rng, 4);
                let c = vss.commit(&phi).unwrap();
                for z in [1u64, 7, 99] {
                    let w = vss.open(&phi, F61::new(z)).unwrap();
                    assert!(vss.verify(&c, &w));
                    let mut bad = w.clone();
                    bad.value += F61::one();
                    assert!(!vss.verify(&c, &bad));
                }
            }
        }
    }

    #[test]
    fn zero_and_constant_polynomials() {
        for vss in both(3, 5) {
            assert!(vss.commit(&[]).unwrap().is_identity());
            assert!(vss.commit(&[F61::zero(); 4]).unwrap().is_identity());
            let w = vss.open(&[F61::new(9)], F61::new(4)).unwrap();
            assert_eq!(w.value, F61::new(9));
            if let Proof::Kzg(p) = &w.proof {
                assert!(p.is_identity());
            }
            assert!(vss.verify(&vss.commit(&[F61::new(9)]).unwrap(), &w));
        }
    }

    #[test]
    fn degree_overflow() {
        for vss in both(2, 6) {
            let err = vss.commit(&[F61::one(); 4]).unwrap_err();
            assert_eq!(err, VssError::DegreeOverflow { degree: 3, max: 2 });
            assert!(vss.open(&[F61::one(); 4], F61::one()).is_err());
            // trailing zeros beyond the setup degree are fine
            let mut p = vec![F61::one(); 3];
            p.push(F61::zero());
            assert!(vss.commit(&p).is_ok());
        }
    }

    #[test]
    fn homomorphism() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for vss in both(3, 8) {
            let p1 = rand_poly(&mut rng, 3);
            let p2 = rand_poly(&mut rng, 3);
            let (a, b) = (F61::random(&mut rng), F61::random(&mut rng));
            let lin: Vec<F61> = p1.iter().zip(&p2).map(|(&x, &y)| a * x + b * y).collect();
            let c1 = vss.commit(&p1).unwrap();
            let c2 = vss.commit(&p2).unwrap();
            assert_eq!(c1.combine(a, &c2, b).unwrap(), vss.commit(&lin).unwrap());
        }
    }

    #[test]
    fn distinct_polynomials_distinct_commitments() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let [feld, kzg] = both(3, 10);
        for i in 0..1000 {
            let p = rand_poly(&mut rng, 3);
            let mut q = p.clone();
            q[i % 4] += F61::new(1 + (i as u64 % 17));
            assert_ne!(feld.commit(&p).unwrap(), feld.commit(&q).unwrap());
            if i % 20 == 0 {
                assert_ne!(kzg.commit(&p).unwrap(), kzg.commit(&q).unwrap());
            }
        }
    }

    #[test]
    fn malicious_dealer_is_caught() {
        // shares from two polynomials agreeing on the secrets: every
        // recipient holding a share of the second polynomial fails
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = SharingConfig::<F61>::standard(2, 3, 8, 2).unwrap();
        for vss in both(3, 12) {
            for _ in 0..50 {
                let s = [F61::random(&mut rng), F61::random(&mut rng)];
                let good = cfg.sharing_poly(&s, &mut rng).unwrap();
                let evil = cfg.sharing_poly(&s, &mut rng).unwrap();
                let c = vss.commit(&good).unwrap();
                let mut rejected = 0;
                for (j, &a) in cfg.eval_points().iter().enumerate() {
                    let src = if j % 2 == 0 { &good } else { &evil };
                    let w = vss.open(src, a).unwrap();
                    if !vss.verify(&c, &w) {
                        rejected += 1;
                    }
                }
                assert!(rejected >= 1);
            }
        }
    }

    #[test]
    fn serialization_roundtrip_and_bit_flips() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for vss in both(2, 14) {
            let phi = rand_poly(&mut rng, 2);
            let c = vss.commit(&phi).unwrap();
            let w = vss.open(&phi, F61::new(5)).unwrap();
            let mut cb = Vec::new();
            vss.write_commitment(&c, &mut cb);
            assert_eq!(cb.len(), vss.commitment_len());
            assert_eq!(vss.read_commitment(&cb), Some(c.clone()));
            let mut pb = Vec::new();
            vss.write_proof(&w.proof, &mut pb);
            assert_eq!(pb.len(), vss.proof_len());
            assert_eq!(vss.read_proof(&pb), Some(w.proof.clone()));
            for bit in 0..cb.len() * 8 {
                let mut m = cb.clone();
                m[bit / 8] ^= 1 << (bit % 8);
                let ok = vss
                    .read_commitment(&m)
                    .is_some_and(|c2| vss.verify(&c2, &w));
                assert!(!ok, "bit {bit} of the commitment went unnoticed");
            }
            for bit in 0..pb.len() * 8 {
                let mut m = pb.clone();
                m[bit / 8] ^= 1 << (bit % 8);
                let ok = vss.read_proof(&m).is_some_and(|p2| {
                    vss.verify(
                        &c,
                        &Witness {
                            proof: p2,
                            ..w.clone()
                        },
                    )
                });
                assert!(!ok, "bit {bit} of the witness went unnoticed");
            }
            for bit in 0..64 {
                let v = F61::from_bytes((w.value.value() ^ (1 << bit)).to_le_bytes());
                let ok = v.is_some_and(|value| vss.verify(&c, &Witness { value, ..w.clone() }));
                assert!(!ok);
            }
        }
    }

    #[test]
    fn backend_names() {
        assert_eq!("kzg".parse::<Backend>().unwrap(), Backend::Kzg);
        assert_eq!(Backend::Feldman.to_string(), "feldman");
        assert!("rsa".parse::<Backend>().is_err());
    }
}
