//! The order-`P` subgroup of `Z_Q^*` with `Q = 52 P + 1`, `P = 2^61 - 1`.
//!
//! `Q` is a 67-bit prime. Exponents are elements of the sharing field, so
//! `g^a` for `a` in `F_P` is well defined. This is a toy-size group chosen to
//! match the default field; it carries no real-world security.

use super::mont::MontField;
use crate::field::{Field, F61, MERSENNE61};

pub const Q: u128 = 52 * MERSENNE61 as u128 + 1;
pub(crate) static FQ: MontField = MontField::new(Q);
pub const ELEMENT_BYTES: usize = 9;

/// A group element in Montgomery form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GroupElem(u128);

impl GroupElem {
    pub fn identity() -> Self {
        GroupElem(FQ.one())
    }

    pub fn is_identity(self) -> bool {
        self.0 == FQ.one()
    }

    #[inline]
    pub fn op(self, other: Self) -> Self {
        GroupElem(FQ.mul(self.0, other.0))
    }

    pub fn pow(self, e: u64) -> Self {
        GroupElem(FQ.pow(self.0, e as u128))
    }

    pub fn pow_f(self, e: F61) -> Self {
        self.pow(e.value())
    }

    pub fn inverse(self) -> Self {
        GroupElem(FQ.inv(self.0))
    }

    /// `h^((Q-1)/P)` for the smallest `h >= 2` that gives a non-identity.
    pub fn generator() -> Self {
        let cof = (Q - 1) / MERSENNE61 as u128;
        (2u64..)
            .map(|h| GroupElem(FQ.pow(FQ.from_u64(h), cof)))
            .find(|g| !g.is_identity())
            .expect("a generator exists")
    }

    pub fn in_subgroup(self) -> bool {
        self.0 != 0 && self.pow(MERSENNE61).is_identity()
    }

    pub fn to_bytes(self) -> [u8; ELEMENT_BYTES] {
        let v = FQ.from_mont(self.0);
        let mut out = [0u8; ELEMENT_BYTES];
        out.copy_from_slice(&v.to_le_bytes()[..ELEMENT_BYTES]);
        out
    }

    /// Range check only: `0 < x < Q`. Subgroup membership is not required by
    /// the Feldman check, since a passing check constrains the order-`P` part.
    pub fn from_bytes(b: &[u8]) -> Option<Self> {
        if b.len() != ELEMENT_BYTES {
            return None;
        }
        let mut buf = [0u8; 16];
        buf[..ELEMENT_BYTES].copy_from_slice(b);
        let v = u128::from_le_bytes(buf);
        (v != 0 && v < Q).then(|| GroupElem(FQ.to_mont(v)))
    }
}

/// Fixed-base table for `g^e` with 4-bit windows: 16 windows of 16 entries.
#[derive(Debug, Clone)]
pub struct FixedBase {
    table: Vec<[GroupElem; 16]>,
}

impl FixedBase {
    pub fn new(g: GroupElem) -> Self {
        let mut table = Vec::with_capacity(16);
        let mut base = g;
        for _ in 0..16 {
            let mut row = [GroupElem::identity(); 16];
            for k in 1..16 {
                row[k] = row[k - 1].op(base);
            }
            base = row[15].op(base);
            table.push(row);
        }
        FixedBase { table }
    }

    pub fn pow(&self, e: u64) -> GroupElem {
        let mut acc = GroupElem::identity();
        for (w, row) in self.table.iter().enumerate() {
            let digit = (e >> (4 * w)) & 15;
            if digit != 0 {
                acc = acc.op(row[digit as usize]);
            }
        }
        acc
    }
}
