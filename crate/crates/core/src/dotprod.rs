//! Dot products of packed-shared vectors with degree reduction.
//!
//! Party `i` holds degree-`d` shares `v^j_{ib}` of every block `b` of every
//! user vector `j` and of the server vector. Locally,
//!
//! ```text
//! cs^i_j = sum_b v^j_{ib} v^0_{ib}        (degree 2d, one value per slot)
//! ```
//!
//! Each party re-shares its vector `(cs^i_j)_j` in groups of `p` users at
//! degree `d`. A receiver `r` combining the column `(s^i_{rk})_i` of group `k`
//! with the weights `c_i = sum_s lambda_i(e_s)` obtains a degree-`d` packed
//! share of the per-user totals `sum_s partial_{j,s}`, i.e. of the full dot
//! products. That weighted sum is the first coordinate of
//! `sum_s (s B_{e_s}^{-1} Chop_d)`; [`ReductionMatrices`] keeps the explicit
//! matrix form for cross-checking.
//!
//! A sender that re-shares wrong values produces a column that is no longer
//! a degree-`2d` codeword over the senders. Receivers therefore also publish
//! shares of the generalized Reed-Solomon syndromes
//! `sum_i w_i alpha_i^t s_i`, `t < |S| - 2d - 1`, which vanish on honest
//! columns. The server decodes them, locates the bad senders with
//! Berlekamp-Massey and subtracts their contribution.

use rand::Rng;
use thiserror::Error;

use crate::exec::Exec;
use crate::field::{dot, Field};
use crate::linalg::Matrix;
use crate::packed::{Layout, ShareError, SharingConfig};
use crate::poly;
use crate::rs::RsError;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DotError {
    #[error(transparent)]
    Share(#[from] ShareError),
    #[error(transparent)]
    Decode(#[from] RsError),
    #[error("config: {0}")]
    Config(String),
    #[error("syndromes of user {user} are not explained by at most {budget} bad senders")]
    Syndrome { user: usize, budget: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// The two packed sharing schemes of the pipeline. Both use the same
/// evaluation points, `alpha_j = j + max(l, p)`, so one party id means one
/// point everywhere.
#[derive(Debug, Clone)]
pub struct DotProductSetup<F> {
    pub grad: SharingConfig<F>,
    pub reshare: SharingConfig<F>,
    pub layout: Layout,
}

impl<F: Field> DotProductSetup<F> {
    pub fn new(n: usize, d: usize, l: usize, p: usize, m: usize) -> Result<Self, DotError> {
        if 2 * d + 1 > n {
            return Err(DotError::Config(format!(
                "2d+1 = {} exceeds N = {n}",
                2 * d + 1
            )));
        }
        let offset = l.max(p);
        Ok(DotProductSetup {
            grad: SharingConfig::standard(l, d, n, offset)?,
            reshare: SharingConfig::standard(p, d, n, offset)?,
            layout: Layout::new(m, l),
        })
    }

    pub fn n(&self) -> usize {
        self.grad.n()
    }
    pub fn d(&self) -> usize {
        self.grad.d()
    }
    pub fn l(&self) -> usize {
        self.grad.l()
    }
    pub fn p(&self) -> usize {
        self.reshare.l()
    }
    pub fn groups(&self, users: usize) -> usize {
        users.div_ceil(self.p())
    }

    /// Sharing polynomials, one per block, for a length-`m` vector.
    pub fn share_polys<R: Rng + ?Sized>(
        &self,
        v: &[F],
        rng: &mut R,
    ) -> Result<Vec<Vec<F>>, DotError> {
        if v.len() != self.layout.m {
            return Err(DotError::Dimension {
                expected: self.layout.m,
                got: v.len(),
            });
        }
        self.layout
            .pack(v)
            .iter()
            .map(|secrets| self.grad.sharing_poly(secrets, rng).map_err(DotError::from))
            .collect()
    }

    /// Re-sharing polynomials for one party's vector of per-user values.
    pub fn reshare_polys<R: Rng + ?Sized>(
        &self,
        values: &[F],
        rng: &mut R,
    ) -> Result<Vec<Vec<F>>, DotError> {
        values
            .chunks(self.p())
            .map(|group| {
                self.reshare
                    .sharing_poly(group, rng)
                    .map_err(DotError::from)
            })
            .collect()
    }
}

/// `sum_b a_b * b_b` over a party's block shares.
pub fn partial_product<F: Field>(a: &[F], b: &[F]) -> F {
    dot(a, b)
}

/// Reduction weights and syndrome machinery for one fixed sender set.
#[derive(Debug, Clone)]
pub struct SenderCode<F> {
    points: Vec<F>,
    collapse: Vec<F>,
    bary: Vec<F>,
    /// `[t][i] = w_i alpha_i^t`
    syndrome_rows: Vec<Vec<F>>,
    product_degree: usize,
}

impl<F: Field> SenderCode<F> {
    /// `points` are the senders' evaluation points, `targets` the secret
    /// points of the degree-`product_degree` sharing being reduced.
    pub fn new(points: Vec<F>, targets: &[F], product_degree: usize) -> Result<Self, DotError> {
        if points.len() < product_degree + 1 {
            return Err(DotError::Config(format!(
                "{} senders cannot carry a degree-{product_degree} sharing",
                points.len()
            )));
        }
        let bary = poly::barycentric_weights(&points);
        let mut collapse = vec![F::zero(); points.len()];
        for &e in targets {
            for (c, lam) in collapse
                .iter_mut()
                .zip(poly::lagrange_at_with(&points, &bary, e))
            {
                *c += lam;
            }
        }
        let t_count = points.len() - product_degree - 1;
        let mut syndrome_rows = Vec::with_capacity(t_count);
        let mut row = bary.clone();
        for _ in 0..t_count {
            syndrome_rows.push(row.clone());
            for (r, &a) in row.iter_mut().zip(&points) {
                *r *= a;
            }
        }
        Ok(SenderCode {
            points,
            collapse,
            bary,
            syndrome_rows,
            product_degree,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn weights(&self) -> &[F] {
        &self.collapse
    }

    pub fn syndrome_count(&self) -> usize {
        self.syndrome_rows.len()
    }

    /// Largest number of bad senders the syndromes can locate.
    pub fn budget(&self) -> usize {
        self.syndrome_count() / 2
    }

    /// Weighted sum of a receiver's column for one group.
    pub fn collapse(&self, column: &[F]) -> F {
        dot(&self.collapse, column)
    }

    pub fn syndromes(&self, column: &[F]) -> Vec<F> {
        self.syndrome_rows
            .iter()
            .map(|row| dot(row, column))
            .collect()
    }

    /// Positions (into the sender list) and error values explaining the
    /// syndromes `S_t = sum_{i in E} w_i e_i alpha_i^t`.
    pub fn locate(&self, s: &[F]) -> Option<Vec<(usize, F)>> {
        if s.len() != self.syndrome_count() {
            return None;
        }
        if s.iter().all(|x| x.is_zero()) {
            return Some(Vec::new());
        }
        let conn = berlekamp_massey(s);
        let nu = conn.len() - 1;
        if nu == 0 || 2 * nu > s.len() {
            return None;
        }
        let pos: Vec<usize> = (0..self.points.len())
            .filter(|&i| {
                let inv = self.points[i]
                    .inv()
                    .expect("evaluation points are non-zero");
                poly::eval(&conn, inv).is_zero()
            })
            .collect();
        if pos.len() != nu {
            return None;
        }
        let a = Matrix::from_fn(nu, nu, |t, c| self.points[pos[c]].pow(t as u64));
        let y = a.solve(&s[..nu])?;
        for (t, &st) in s.iter().enumerate() {
            let got: F = pos
                .iter()
                .zip(&y)
                .map(|(&i, &yi)| yi * self.points[i].pow(t as u64))
                .sum();
            if got != st {
                return None;
            }
        }
        Some(
            pos.iter()
                .zip(y)
                .map(|(&i, yi)| (i, yi * self.bary[i].inv().expect("non-zero weight")))
                .collect(),
        )
    }

    /// Amount by which the bad senders shifted the collapsed value.
    pub fn correction(&self, errors: &[(usize, F)]) -> F {
        errors.iter().map(|&(i, e)| self.collapse[i] * e).sum()
    }

    pub fn product_degree(&self) -> usize {
        self.product_degree
    }
}

/// Shortest linear recurrence; returns the connection polynomial
/// `1 + c_1 z + ... + c_L z^L` (trailing zeros trimmed to length `L + 1`).
pub fn berlekamp_massey<F: Field>(s: &[F]) -> Vec<F> {
    let mut c = vec![F::one()];
    let mut b = vec![F::one()];
    let mut l = 0usize;
    let mut m = 1usize;
    let mut bd = F::one();
    for n in 0..s.len() {
        let mut disc = s[n];
        for i in 1..=l.min(c.len() - 1) {
            disc += c[i] * s[n - i];
        }
        if disc.is_zero() {
            m += 1;
            continue;
        }
        let coef = disc * bd.inv().expect("non-zero");
        let prev = c.clone();
        if c.len() < b.len() + m {
            c.resize(b.len() + m, F::zero());
        }
        for (i, &bi) in b.iter().enumerate() {
            c[i + m] -= coef * bi;
        }
        if 2 * l <= n {
            l = n + 1 - l;
            b = prev;
            bd = disc;
            m = 1;
        } else {
            m += 1;
        }
    }
    c.resize(l + 1, F::zero());
    c
}

/// Explicit `B_e`, `B_e^{-1}` and `Chop_d` for a sender set.
#[derive(Debug, Clone)]
pub struct ReductionMatrices<F> {
    pub b: Vec<Matrix<F>>,
    pub b_inv: Vec<Matrix<F>>,
    pub chop: Matrix<F>,
}

impl<F: Field> ReductionMatrices<F> {
    /// `B_e[(i, k)] = (alpha_k - e)^i` (0-based) and `Chop_d` keeping the
    /// first `d` diagonal entries.
    pub fn new(points: &[F], targets: &[F], d: usize) -> Self {
        let n = points.len();
        let b: Vec<Matrix<F>> = targets
            .iter()
            .map(|&e| Matrix::from_fn(n, n, |i, k| (points[k] - e).pow(i as u64)))
            .collect();
        let b_inv = b
            .iter()
            .map(|m| {
                m.inverse()
                    .expect("distinct points give an invertible Vandermonde matrix")
            })
            .collect();
        let chop = Matrix::from_fn(
            n,
            n,
            |i, k| if i == k && i < d { F::one() } else { F::zero() },
        );
        ReductionMatrices { b, b_inv, chop }
    }

    /// `s B_{e_j}^{-1} Chop_d`.
    pub fn disaggregate(&self, s: &[F], j: usize) -> Vec<F> {
        self.chop.left_apply(&self.b_inv[j].left_apply(s))
    }

    /// `sum_j s B_{e_j}^{-1} Chop_d`; its first coordinate is the reduced share.
    pub fn aggregate(&self, s: &[F]) -> Vec<F> {
        let mut h = vec![F::zero(); s.len()];
        for j in 0..self.b.len() {
            for (a, x) in h.iter_mut().zip(self.disaggregate(s, j)) {
                *a += x;
            }
        }
        h
    }
}

/// Deviations injected into [`run_pipeline`] for robustness tests.
#[derive(Debug, Clone, Default)]
pub struct Faults<F> {
    /// `(sender, user, delta)`: the sender re-shares `cs + delta` for that user.
    pub wrong_partials: Vec<(usize, usize, F)>,
    /// `(receiver, group, delta)` added to a final share.
    pub wrong_finals: Vec<(usize, usize, F)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineOutput<F> {
    pub dots: Vec<F>,
    pub norms: Vec<F>,
    /// Parties found misbehaving, sorted.
    pub flagged: Vec<usize>,
}

/// Runs the whole dot-product pipeline in memory: sharing, local products,
/// re-sharing, reduction and server-side decoding. `active` lists the
/// parties that take part in every round.
pub fn run_pipeline<F: Field, R: Rng + ?Sized>(
    setup: &DotProductSetup<F>,
    users: &[Vec<F>],
    server: &[F],
    active: &[usize],
    faults: &Faults<F>,
    rng: &mut R,
    exec: Exec,
) -> Result<PipelineOutput<F>, DotError> {
    let n = setup.n();
    let d = setup.d();
    let shares_of = |polys: &[Vec<F>]| -> Vec<Vec<F>> {
        // party -> block
        let per_block: Vec<Vec<F>> = polys.iter().map(|p| setup.grad.evaluate(p)).collect();
        (0..n)
            .map(|i| per_block.iter().map(|b| b[i]).collect())
            .collect()
    };
    let server_polys = setup.share_polys(server, rng)?;
    let v0 = shares_of(&server_polys);
    let mut vu = Vec::with_capacity(users.len());
    for u in users {
        vu.push(shares_of(&setup.share_polys(u, rng)?));
    }

    // local products, then re-sharing polynomials per sender
    let mut cs_polys = Vec::with_capacity(active.len());
    let mut nr_polys = Vec::with_capacity(active.len());
    for &i in active {
        let mut cs: Vec<F> = vu.iter().map(|v| partial_product(&v[i], &v0[i])).collect();
        let nr: Vec<F> = vu.iter().map(|v| partial_product(&v[i], &v[i])).collect();
        for &(s, u, delta) in &faults.wrong_partials {
            if s == i {
                cs[u] += delta;
            }
        }
        cs_polys.push(setup.reshare_polys(&cs, rng)?);
        nr_polys.push(setup.reshare_polys(&nr, rng)?);
    }

    let points: Vec<F> = active
        .iter()
        .map(|&i| setup.grad.eval_points()[i])
        .collect();
    let code = SenderCode::new(points, setup.grad.secret_points(), 2 * d)?;
    let groups = setup.groups(users.len());

    // receivers: per group, collapsed share and syndrome shares
    let receive = |polys: &[Vec<Vec<F>>], r: usize| -> Vec<(F, Vec<F>)> {
        let x = setup.reshare.eval_points()[r];
        (0..groups)
            .map(|k| {
                let column: Vec<F> = polys.iter().map(|p| poly::eval(&p[k], x)).collect();
                (code.collapse(&column), code.syndromes(&column))
            })
            .collect()
    };
    let cs_recv: Vec<Vec<(F, Vec<F>)>> = exec.map(active, |&r| receive(&cs_polys, r));
    let nr_recv: Vec<Vec<(F, Vec<F>)>> = exec.map(active, |&r| receive(&nr_polys, r));

    let mut flagged = Vec::new();
    let mut decode_all = |recv: &[Vec<(F, Vec<F>)>], faulty: bool| -> Result<Vec<F>, DotError> {
        let mut out = vec![F::zero(); users.len()];
        let mut dec = setup.reshare.batch_decoder(d);
        for k in 0..groups {
            let mut slots = vec![None; n];
            for (pos, &r) in active.iter().enumerate() {
                let mut x = recv[pos][k].0;
                if faulty {
                    for &(fr, fk, delta) in &faults.wrong_finals {
                        if fr == r && fk == k {
                            x += delta;
                        }
                    }
                }
                slots[r] = Some(x);
            }
            let (vals, bad) = dec.decode(&slots)?;
            flagged.extend(bad);
            let mut syn = vec![vec![F::zero(); setup.p()]; code.syndrome_count()];
            for (t, row) in syn.iter_mut().enumerate() {
                let mut slots = vec![None; n];
                for (pos, &r) in active.iter().enumerate() {
                    slots[r] = Some(recv[pos][k].1[t]);
                }
                let (v, _) = dec.decode(&slots)?;
                *row = v;
            }
            for (slot, &val) in vals.iter().enumerate() {
                let user = k * setup.p() + slot;
                if user >= users.len() {
                    break;
                }
                let s: Vec<F> = syn.iter().map(|row| row[slot]).collect();
                let errs = code.locate(&s).ok_or(DotError::Syndrome {
                    user,
                    budget: code.budget(),
                })?;
                flagged.extend(errs.iter().map(|&(i, _)| active[i]));
                out[user] = val - code.correction(&errs);
            }
        }
        Ok(out)
    };
    let dots = decode_all(&cs_recv, true)?;
    let norms = decode_all(&nr_recv, false)?;
    flagged.sort_unstable();
    flagged.dedup();
    Ok(PipelineOutput {
        dots,
        norms,
        flagged,
    })
}
