//! Coefficient commitments: `C_t = g^{c_t}` for every coefficient.

use super::schnorr::{FixedBase, GroupElem};
use crate::field::{Field, F61};

#[derive(Debug, Clone)]
pub struct FeldmanParams {
    max_degree: usize,
    g: GroupElem,
    table: FixedBase,
}

impl FeldmanParams {
    pub fn setup(max_degree: usize) -> Self {
        let g = GroupElem::generator();
        FeldmanParams {
            max_degree,
            g,
            table: FixedBase::new(g),
        }
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn generator(&self) -> GroupElem {
        self.g
    }

    pub fn exp(&self, e: F61) -> GroupElem {
        self.table.pow(e.value())
    }

    /// Always `max_degree + 1` elements; missing top coefficients are zero.
    pub fn commit(&self, coeffs: &[F61]) -> Vec<GroupElem> {
        debug_assert!(coeffs.len() <= self.max_degree + 1);
        (0..=self.max_degree)
            .map(|t| self.exp(coeffs.get(t).copied().unwrap_or_default()))
            .collect()
    }

    /// `g^value == prod_t C_t^{x^t}`, evaluated by Horner in the exponent.
    pub fn verify(&self, c: &[GroupElem], point: F61, value: F61) -> bool {
        let Some((&top, rest)) = c.split_last() else {
            return false;
        };
        let x = point.value();
        let acc = rest.iter().rev().fold(top, |acc, &ct| acc.pow(x).op(ct));
        acc == self.exp(value)
    }
}
