//! Packed Shamir sharing.
//!
//! `l` secrets sit at points `e_1..e_l` of one polynomial of degree `d`:
//!
//! ```text
//! phi(x) = q(x) * prod_i (x - e_i) + sum_i g_i L_i(x)
//! ```
//!
//! with `q` uniformly random of degree `d - l` and `L_i` the Lagrange basis
//! over the `e` points. Party `j` holds `phi(alpha_j)`.

use rand::Rng;
use thiserror::Error;

use crate::field::Field;
use crate::poly;
use crate::rs::{self, RsError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShareError {
    #[error("invalid sharing config: {0}")]
    Config(String),
    #[error("{got} secrets exceed the pack width {l}")]
    TooManySecrets { got: usize, l: usize },
    #[error("mask has {got} coefficients, expected {expected}")]
    MaskLength { expected: usize, got: usize },
    #[error("need {need} shares, got {got}")]
    InsufficientShares { need: usize, got: usize },
    #[error("share sets come from different configurations")]
    Mismatch,
    #[error("share index {0} out of range")]
    BadIndex(usize),
    #[error(transparent)]
    Decode(#[from] RsError),
}

/// Points and degrees of one packed sharing scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharingConfig<F> {
    l: usize,
    d: usize,
    secret_points: Vec<F>,
    eval_points: Vec<F>,
    vanishing: Vec<F>,
    /// Coefficients of each Lagrange basis polynomial over `secret_points`.
    basis: Vec<Vec<F>>,
}

impl<F: Field> SharingConfig<F> {
    /// `e_i = i` for `i = 1..l` and `alpha_j = j + offset` for `j = 1..n`.
    pub fn standard(l: usize, d: usize, n: usize, offset: usize) -> Result<Self, ShareError> {
        if offset < l {
            return Err(ShareError::Config(format!(
                "offset {offset} lets evaluation points collide with {l} secret points"
            )));
        }
        let e = (1..=l as u64).map(F::new).collect();
        let a = (1..=n as u64).map(|j| F::new(j + offset as u64)).collect();
        Self::with_points(d, e, a)
    }

    pub fn with_points(
        d: usize,
        secret_points: Vec<F>,
        eval_points: Vec<F>,
    ) -> Result<Self, ShareError> {
        let l = secret_points.len();
        let n = eval_points.len();
        if l == 0 {
            return Err(ShareError::Config("pack width must be at least 1".into()));
        }
        if d + 1 < l {
            return Err(ShareError::Config(format!(
                "degree {d} below l-1 = {}",
                l - 1
            )));
        }
        if d + 1 > n {
            return Err(ShareError::Config(format!(
                "degree {d} needs {} shares, only {n}",
                d + 1
            )));
        }
        if (l + n) as u128 > F::MODULUS as u128 {
            return Err(ShareError::Config(format!(
                "l+N = {} exceeds the field size",
                l + n
            )));
        }
        let mut all: Vec<u64> = secret_points
            .iter()
            .chain(&eval_points)
            .map(|x| x.value())
            .collect();
        all.sort_unstable();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(ShareError::Config(
                "points are not pairwise distinct".into(),
            ));
        }
        let vanishing = poly::from_roots(&secret_points);
        let w = poly::barycentric_weights(&secret_points);
        let basis = (0..l)
            .map(|i| {
                let (b, _) = poly::div_linear(&vanishing, secret_points[i]);
                poly::scale(&b, w[i])
            })
            .collect();
        Ok(SharingConfig {
            l,
            d,
            secret_points,
            eval_points,
            vanishing,
            basis,
        })
    }

    pub fn l(&self) -> usize {
        self.l
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn n(&self) -> usize {
        self.eval_points.len()
    }
    pub fn secret_points(&self) -> &[F] {
        &self.secret_points
    }
    pub fn eval_points(&self) -> &[F] {
        &self.eval_points
    }
    /// Number of random coefficients in `q(x)`.
    pub fn mask_len(&self) -> usize {
        self.d + 1 - self.l
    }

    /// The sharing polynomial for a fixed mask `q(x)` (ascending coefficients).
    pub fn poly_with_mask(&self, secrets: &[F], mask: &[F]) -> Result<Vec<F>, ShareError> {
        if secrets.len() > self.l {
            return Err(ShareError::TooManySecrets {
                got: secrets.len(),
                l: self.l,
            });
        }
        if mask.len() != self.mask_len() {
            return Err(ShareError::MaskLength {
                expected: self.mask_len(),
                got: mask.len(),
            });
        }
        let mut phi = poly::mul(mask, &self.vanishing);
        phi.resize(self.d + 1, F::zero());
        for (g, b) in secrets.iter().zip(&self.basis) {
            if g.is_zero() {
                continue;
            }
            for (c, &bc) in phi.iter_mut().zip(b) {
                *c += *g * bc;
            }
        }
        Ok(phi)
    }

    pub fn sharing_poly<R: Rng + ?Sized>(
        &self,
        secrets: &[F],
        rng: &mut R,
    ) -> Result<Vec<F>, ShareError> {
        let mask: Vec<F> = (0..self.mask_len()).map(|_| F::random(rng)).collect();
        self.poly_with_mask(secrets, &mask)
    }

    /// Evaluations at every `alpha_j`.
    pub fn evaluate(&self, coeffs: &[F]) -> Vec<F> {
        self.eval_points
            .iter()
            .map(|&a| poly::eval(coeffs, a))
            .collect()
    }

    pub fn share<R: Rng + ?Sized>(
        &self,
        secrets: &[F],
        rng: &mut R,
    ) -> Result<PackedShareSet<F>, ShareError> {
        let phi = self.sharing_poly(secrets, rng)?;
        Ok(PackedShareSet {
            shares: self.evaluate(&phi),
            degree: self.d,
        })
    }

    pub fn share_with_mask(
        &self,
        secrets: &[F],
        mask: &[F],
    ) -> Result<PackedShareSet<F>, ShareError> {
        let phi = self.poly_with_mask(secrets, mask)?;
        Ok(PackedShareSet {
            shares: self.evaluate(&phi),
            degree: self.d,
        })
    }

    /// Lagrange reconstruction from the first `degree + 1` listed shares.
    pub fn reconstruct(&self, shares: &[(usize, F)], degree: usize) -> Result<Vec<F>, ShareError> {
        if shares.len() < degree + 1 {
            return Err(ShareError::InsufficientShares {
                need: degree + 1,
                got: shares.len(),
            });
        }
        let used = &shares[..=degree];
        let mut xs = Vec::with_capacity(used.len());
        for &(j, _) in used {
            xs.push(*self.eval_points.get(j).ok_or(ShareError::BadIndex(j))?);
        }
        let ys: Vec<F> = used.iter().map(|&(_, y)| y).collect();
        let w = poly::barycentric_weights(&xs);
        Ok(self
            .secret_points
            .iter()
            .map(|&e| crate::field::dot(&poly::lagrange_at_with(&xs, &w, e), &ys))
            .collect())
    }

    pub fn reconstruct_set(&self, set: &PackedShareSet<F>) -> Result<Vec<F>, ShareError> {
        if set.shares.len() != self.n() {
            return Err(ShareError::Mismatch);
        }
        let pts: Vec<(usize, F)> = set.shares.iter().copied().enumerate().collect();
        self.reconstruct(&pts, set.degree)
    }

    /// Error-and-erasure decoding; `None` marks a missing share.
    pub fn decode(
        &self,
        slots: &[Option<F>],
        degree: usize,
    ) -> Result<DecodedSecrets<F>, ShareError> {
        let d = rs::decode(&self.eval_points, slots, degree)?;
        let secrets = self
            .secret_points
            .iter()
            .map(|&e| poly::eval(&d.coeffs, e))
            .collect();
        Ok(DecodedSecrets {
            secrets,
            corrupted: d.errors,
        })
    }

    /// Batch decoder targeting this scheme's secret points.
    pub fn batch_decoder(&self, degree: usize) -> rs::BatchDecoder<F> {
        rs::BatchDecoder::new(self.eval_points.clone(), degree, self.secret_points.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedSecrets<F> {
    pub secrets: Vec<F>,
    pub corrupted: Vec<usize>,
}

/// All `N` shares of one sharing, with the degree they are known to lie on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedShareSet<F> {
    pub shares: Vec<F>,
    pub degree: usize,
}

impl<F: Field> PackedShareSet<F> {
    pub fn add(&self, other: &Self) -> Result<Self, ShareError> {
        if self.shares.len() != other.shares.len() {
            return Err(ShareError::Mismatch);
        }
        Ok(PackedShareSet {
            shares: self
                .shares
                .iter()
                .zip(&other.shares)
                .map(|(&a, &b)| a + b)
                .collect(),
            degree: self.degree.max(other.degree),
        })
    }

    pub fn scale(&self, k: F) -> Self {
        PackedShareSet {
            shares: self.shares.iter().map(|&a| a * k).collect(),
            degree: self.degree,
        }
    }

    /// Share-wise product; the degree tag adds up.
    pub fn hadamard(&self, other: &Self) -> Result<Self, ShareError> {
        if self.shares.len() != other.shares.len() {
            return Err(ShareError::Mismatch);
        }
        let degree = self.degree + other.degree;
        if degree + 1 > self.shares.len() {
            tracing::warn!(
                degree,
                n = self.shares.len(),
                "product degree exceeds what the share count can reconstruct"
            );
        }
        Ok(PackedShareSet {
            shares: self
                .shares
                .iter()
                .zip(&other.shares)
                .map(|(&a, &b)| a * b)
                .collect(),
            degree,
        })
    }

    /// `u32` count followed by 8-byte little-endian elements.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 8 * self.shares.len());
        out.extend_from_slice(&(self.shares.len() as u32).to_le_bytes());
        for s in &self.shares {
            out.extend_from_slice(&s.to_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], degree: usize) -> Option<Self> {
        let n = u32::from_le_bytes(bytes.get(..4)?.try_into().ok()?) as usize;
        if bytes.len() != 4 + 8 * n {
            return None;
        }
        let shares = bytes[4..]
            .chunks_exact(8)
            .map(|c| F::from_bytes(c.try_into().unwrap()))
            .collect::<Option<Vec<F>>>()?;
        Some(PackedShareSet { shares, degree })
    }
}

/// Slot-major placement of an `m`-vector into `ceil(m / l)` blocks of `l`
/// secrets: element `i` goes to slot `i / blocks` of block `i % blocks`.
///
/// Summing a per-block product over blocks therefore yields, at slot `s`, the
/// dot product of the contiguous segment `s*blocks .. (s+1)*blocks`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub m: usize,
    pub l: usize,
    pub blocks: usize,
}

impl Layout {
    pub fn new(m: usize, l: usize) -> Self {
        assert!(l > 0);
        Layout {
            m,
            l,
            blocks: m.div_ceil(l).max(1),
        }
    }

    pub fn place(&self, i: usize) -> (usize, usize) {
        (i % self.blocks, i / self.blocks)
    }

    pub fn pack<F: Field>(&self, v: &[F]) -> Vec<Vec<F>> {
        assert_eq!(v.len(), self.m);
        let mut out = vec![vec![F::zero(); self.l]; self.blocks];
        for (i, &x) in v.iter().enumerate() {
            let (b, s) = self.place(i);
            out[b][s] = x;
        }
        out
    }

    pub fn unpack<F: Field>(&self, blocks: &[Vec<F>]) -> Vec<F> {
        (0..self.m)
            .map(|i| {
                let (b, s) = self.place(i);
                blocks[b][s]
            })
            .collect()
    }
}
