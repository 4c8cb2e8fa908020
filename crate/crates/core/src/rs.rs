//! Reed-Solomon decoding with errors and erasures.
//!
//! Codewords are evaluations of a polynomial of degree at most `k` at fixed
//! points; erasures are `None` slots. With `n'` present slots the decoder
//! corrects up to `(n' - k - 1) / 2` wrong values.

use thiserror::Error;

use crate::field::Field;
use crate::linalg::Matrix;
use crate::poly;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RsError {
    #[error("only {present} shares present, degree {degree} needs {}", degree + 1)]
    TooFewShares { present: usize, degree: usize },
    #[error("no polynomial of degree {degree} within distance {budget} of the received word")]
    Uncorrectable { degree: usize, budget: usize },
    #[error("slot count {got} does not match {expected} evaluation points")]
    Length { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded<F> {
    /// Coefficients, length `k + 1`.
    pub coeffs: Vec<F>,
    /// Slots whose received value disagrees with the decoded polynomial.
    pub errors: Vec<usize>,
}

pub fn error_budget(present: usize, degree: usize) -> usize {
    present.saturating_sub(degree + 1) / 2
}

/// Decodes one received word.
pub fn decode<F: Field>(xs: &[F], ys: &[Option<F>], degree: usize) -> Result<Decoded<F>, RsError> {
    if xs.len() != ys.len() {
        return Err(RsError::Length {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    let present: Vec<usize> = (0..ys.len()).filter(|&i| ys[i].is_some()).collect();
    if present.len() < degree + 1 {
        return Err(RsError::TooFewShares {
            present: present.len(),
            degree,
        });
    }
    let px: Vec<F> = present.iter().map(|&i| xs[i]).collect();
    let py: Vec<F> = present.iter().map(|&i| ys[i].unwrap()).collect();
    let budget = error_budget(present.len(), degree);

    let coeffs = {
        let c = poly::interpolate(&px[..=degree], &py[..=degree]);
        let bad = count_mismatch(&c, &px, &py);
        if bad <= budget {
            c
        } else {
            berlekamp_welch(&px, &py, degree, budget)
                .ok_or(RsError::Uncorrectable { degree, budget })?
        }
    };
    finish(coeffs, &present, &px, &py, degree, budget)
}

fn count_mismatch<F: Field>(c: &[F], px: &[F], py: &[F]) -> usize {
    px.iter()
        .zip(py)
        .filter(|&(&x, &y)| poly::eval(c, x) != y)
        .count()
}

fn finish<F: Field>(
    mut coeffs: Vec<F>,
    present: &[usize],
    px: &[F],
    py: &[F],
    degree: usize,
    budget: usize,
) -> Result<Decoded<F>, RsError> {
    coeffs.resize(degree + 1, F::zero());
    let errors: Vec<usize> = present
        .iter()
        .zip(px.iter().zip(py))
        .filter(|&(_, (&x, &y))| poly::eval(&coeffs, x) != y)
        .map(|(&i, _)| i)
        .collect();
    if errors.len() > budget {
        return Err(RsError::Uncorrectable { degree, budget });
    }
    Ok(Decoded { coeffs, errors })
}

/// Solves `Q(x_i) = y_i E(x_i)` with `E` monic of degree `e`, then returns
/// `Q / E` if the division is exact and the quotient has degree `<= k`.
pub fn berlekamp_welch<F: Field>(px: &[F], py: &[F], k: usize, e: usize) -> Option<Vec<F>> {
    let n = px.len();
    if e == 0 || n < 2 * e + k + 1 {
        return None;
    }
    let nq = e + k + 1;
    let cols = nq + e;
    let mut rhs = Vec::with_capacity(n);
    let a = Matrix::from_fn(n, cols, |r, c| {
        let x = px[r];
        if c < nq {
            x.pow(c as u64)
        } else {
            -(py[r] * x.pow((c - nq) as u64))
        }
    });
    for r in 0..n {
        rhs.push(py[r] * px[r].pow(e as u64));
    }
    let sol = a.solve(&rhs)?;
    let q = &sol[..nq];
    let mut err_loc = sol[nq..].to_vec();
    err_loc.push(F::one());
    let (quot, rem) = poly::div_rem(q, &err_loc);
    if !rem.is_empty() {
        return None;
    }
    if poly::degree(&quot).is_some_and(|dg| dg > k) {
        return None;
    }
    Some(quot)
}

/// Decodes many words that share evaluation points, degree and target
/// points. Keeps an interpolation basis of trusted slots so the common case
/// costs `O(n' * k)` per word; falls back to Berlekamp-Welch otherwise.
#[derive(Debug, Clone)]
pub struct BatchDecoder<F> {
    xs: Vec<F>,
    degree: usize,
    targets: Vec<F>,
    present: Vec<usize>,
    basis: Vec<usize>,
    /// Per present slot: Lagrange weights over the basis.
    check: Vec<Vec<F>>,
    at_targets: Vec<Vec<F>>,
    suspects: Vec<bool>,
}

impl<F: Field> BatchDecoder<F> {
    pub fn new(xs: Vec<F>, degree: usize, targets: Vec<F>) -> Self {
        let n = xs.len();
        BatchDecoder {
            xs,
            degree,
            targets,
            present: Vec::new(),
            basis: Vec::new(),
            check: Vec::new(),
            at_targets: Vec::new(),
            suspects: vec![false; n],
        }
    }

    fn rebuild(&mut self, present: Vec<usize>) {
        let mut basis: Vec<usize> = present
            .iter()
            .copied()
            .filter(|&i| !self.suspects[i])
            .take(self.degree + 1)
            .collect();
        if basis.len() < self.degree + 1 {
            basis = present.iter().copied().take(self.degree + 1).collect();
        }
        let bx: Vec<F> = basis.iter().map(|&i| self.xs[i]).collect();
        let w = poly::barycentric_weights(&bx);
        self.check = present
            .iter()
            .map(|&i| poly::lagrange_at_with(&bx, &w, self.xs[i]))
            .collect();
        self.at_targets = self
            .targets
            .iter()
            .map(|&t| poly::lagrange_at_with(&bx, &w, t))
            .collect();
        self.basis = basis;
        self.present = present;
    }

    /// Values at the target points and the slots found to be wrong.
    pub fn decode(&mut self, ys: &[Option<F>]) -> Result<(Vec<F>, Vec<usize>), RsError> {
        if ys.len() != self.xs.len() {
            return Err(RsError::Length {
                expected: self.xs.len(),
                got: ys.len(),
            });
        }
        let present: Vec<usize> = (0..ys.len()).filter(|&i| ys[i].is_some()).collect();
        if present.len() < self.degree + 1 {
            return Err(RsError::TooFewShares {
                present: present.len(),
                degree: self.degree,
            });
        }
        if present != self.present {
            self.rebuild(present);
        }
        let budget = error_budget(self.present.len(), self.degree);
        let by: Vec<F> = self.basis.iter().map(|&i| ys[i].unwrap()).collect();
        let mut wrong = Vec::new();
        for (slot, w) in self.present.iter().zip(&self.check) {
            let predicted = crate::field::dot(w, &by);
            if predicted != ys[*slot].unwrap() {
                wrong.push(*slot);
                if wrong.len() > budget {
                    break;
                }
            }
        }
        if wrong.len() <= budget {
            let vals = self
                .at_targets
                .iter()
                .map(|w| crate::field::dot(w, &by))
                .collect();
            return Ok((vals, wrong));
        }
        let full = decode(&self.xs, ys, self.degree)?;
        let mut changed = false;
        for &i in &full.errors {
            if !self.suspects[i] {
                self.suspects[i] = true;
                changed = true;
            }
        }
        if changed {
            let present = std::mem::take(&mut self.present);
            self.rebuild(present);
        }
        let vals = self
            .targets
            .iter()
            .map(|&t| poly::eval(&full.coeffs, t))
            .collect();
        Ok((vals, full.errors))
    }
}
