//! Dense univariate polynomials, coefficients in ascending order.

use crate::field::{batch_inverse, Field};

pub fn eval<F: Field>(coeffs: &[F], x: F) -> F {
    coeffs.iter().rev().fold(F::zero(), |acc, &c| acc * x + c)
}

pub fn trim<F: Field>(p: &mut Vec<F>) {
    while p.last().is_some_and(|c| c.is_zero()) {
        p.pop();
    }
}

pub fn degree<F: Field>(p: &[F]) -> Option<usize> {
    p.iter().rposition(|c| !c.is_zero())
}

pub fn add<F: Field>(a: &[F], b: &[F]) -> Vec<F> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| a.get(i).copied().unwrap_or_default() + b.get(i).copied().unwrap_or_default())
        .collect()
}

pub fn scale<F: Field>(a: &[F], k: F) -> Vec<F> {
    a.iter().map(|&c| c * k).collect()
}

pub fn mul<F: Field>(a: &[F], b: &[F]) -> Vec<F> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![F::zero(); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// `prod (x - r)` over the given roots.
pub fn from_roots<F: Field>(roots: &[F]) -> Vec<F> {
    let mut p = vec![F::one()];
    for &r in roots {
        p.push(F::zero());
        for i in (1..p.len()).rev() {
            let lower = p[i - 1];
            p[i] = lower - r * p[i];
        }
        p[0] = -r * p[0];
    }
    p
}

/// Long division; returns `(quotient, remainder)`. Panics on a zero divisor.
pub fn div_rem<F: Field>(num: &[F], den: &[F]) -> (Vec<F>, Vec<F>) {
    let dd = degree(den).expect("division by the zero polynomial");
    let lead_inv = den[dd].inv().expect("non-zero leading coefficient");
    let mut rem: Vec<F> = num.to_vec();
    trim(&mut rem);
    if rem.len() <= dd {
        return (Vec::new(), rem);
    }
    let mut quot = vec![F::zero(); rem.len() - dd];
    for k in (0..quot.len()).rev() {
        let c = rem[k + dd] * lead_inv;
        quot[k] = c;
        if c.is_zero() {
            continue;
        }
        for (j, &d) in den[..=dd].iter().enumerate() {
            rem[k + j] -= c * d;
        }
    }
    rem.truncate(dd);
    trim(&mut rem);
    (quot, rem)
}

/// Divides by the monic linear factor `(x - r)` with synthetic division.
pub fn div_linear<F: Field>(p: &[F], r: F) -> (Vec<F>, F) {
    if p.is_empty() {
        return (Vec::new(), F::zero());
    }
    let n = p.len();
    let mut q = vec![F::zero(); n - 1];
    let mut carry = F::zero();
    for i in (0..n).rev() {
        let c = p[i] + carry * r;
        if i == 0 {
            return (q, c);
        }
        q[i - 1] = c;
        carry = c;
    }
    unreachable!()
}

/// Barycentric weights `w_i = 1 / prod_{k != i} (x_i - x_k)`.
pub fn barycentric_weights<F: Field>(xs: &[F]) -> Vec<F> {
    let mut w: Vec<F> = xs
        .iter()
        .enumerate()
        .map(|(i, &xi)| {
            xs.iter()
                .enumerate()
                .filter(|&(k, _)| k != i)
                .map(|(_, &xk)| xi - xk)
                .product()
        })
        .collect();
    batch_inverse(&mut w);
    w
}

/// Lagrange coefficients `lambda_i(t)` so that `f(t) = sum_i lambda_i f(x_i)`
/// for any `f` of degree below `xs.len()`.
pub fn lagrange_at<F: Field>(xs: &[F], t: F) -> Vec<F> {
    lagrange_at_with(xs, &barycentric_weights(xs), t)
}

pub fn lagrange_at_with<F: Field>(xs: &[F], w: &[F], t: F) -> Vec<F> {
    if let Some(hit) = xs.iter().position(|&x| x == t) {
        let mut out = vec![F::zero(); xs.len()];
        out[hit] = F::one();
        return out;
    }
    let mut diffs: Vec<F> = xs.iter().map(|&x| t - x).collect();
    let ell: F = diffs.iter().copied().product();
    batch_inverse(&mut diffs);
    diffs.iter().zip(w).map(|(&d, &wi)| ell * wi * d).collect()
}

/// Coefficient form of the interpolating polynomial through `(xs, ys)`.
pub fn interpolate<F: Field>(xs: &[F], ys: &[F]) -> Vec<F> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n == 0 {
        return Vec::new();
    }
    let full = from_roots(xs);
    let w = barycentric_weights(xs);
    let mut out = vec![F::zero(); n];
    for i in 0..n {
        let k = ys[i] * w[i];
        if k.is_zero() {
            continue;
        }
        let (basis, _) = div_linear(&full, xs[i]);
        for (o, b) in out.iter_mut().zip(basis) {
            *o += k * b;
        }
    }
    out
}
