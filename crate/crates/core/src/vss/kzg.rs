//! Constant-size commitments: `C = psi^{phi(alpha)}` with witnesses
//! `w = psi^{(phi(alpha) - phi(z)) / (alpha - z)}`, checked with
//! `e(C, psi) == e(w, psi^alpha / psi^z) * e(psi, psi)^{phi(z)}`.

use rand::Rng;

use super::curve::{pairing, Gt, G1};
use crate::field::{Field, F61};
use crate::poly;

#[derive(Debug, Clone)]
pub struct KzgParams {
    powers: Vec<G1>,
    g: G1,
    alpha_g: G1,
    gt: Gt,
}

impl KzgParams {
    /// Draws the trapdoor, publishes its powers and drops it.
    pub fn setup<R: Rng + ?Sized>(max_degree: usize, rng: &mut R) -> Self {
        let g = G1::generator();
        let alpha = loop {
            let a = F61::random(rng);
            if !a.is_zero() {
                break a;
            }
        };
        let mut powers = Vec::with_capacity(max_degree + 1);
        let mut k = F61::one();
        for _ in 0..=max_degree {
            powers.push(g.mul(k).normalize());
            k *= alpha;
        }
        KzgParams {
            powers,
            g,
            alpha_g: g.mul(alpha).normalize(),
            gt: pairing(&g, &g),
        }
    }

    pub fn max_degree(&self) -> usize {
        self.powers.len() - 1
    }

    pub fn powers(&self) -> &[G1] {
        &self.powers
    }

    pub fn commit(&self, coeffs: &[F61]) -> G1 {
        debug_assert!(coeffs.len() <= self.powers.len());
        coeffs
            .iter()
            .zip(&self.powers)
            .filter(|(c, _)| !c.is_zero())
            .fold(G1::identity(), |acc, (&c, &p)| acc.add(p.mul(c)))
            .normalize()
    }

    /// `(phi(z), witness)`.
    pub fn open(&self, coeffs: &[F61], z: F61) -> (F61, G1) {
        let (quot, value) = poly::div_linear(coeffs, z);
        (value, self.commit(&quot))
    }

    pub fn verify(&self, c: &G1, z: F61, value: F61, w: &G1) -> bool {
        let shifted = self.alpha_g.add(self.g.mul(z).neg());
        let lhs = pairing(c, &self.g);
        let rhs = pairing(w, &shifted).op(self.gt.pow(value.value()));
        lhs == rhs
    }
}
