//! Normalization, quantization and trust scores.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rflpa_core::field::{quantize, FieldError, MERSENNE61};

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_sq(v: &[i64]) -> u128 {
    v.iter().map(|&x| (x as i128 * x as i128) as u128).sum()
}

/// Rescales `g` to norm at most `max_norm`.
pub fn clip_norm(g: &[f64], max_norm: f64) -> Vec<f64> {
    let n = l2(g);
    if n > max_norm && n.is_finite() {
        g.iter().map(|x| x * (max_norm / n)).collect()
    } else {
        g.to_vec()
    }
}

/// The server's quantized root gradient and its squared norm, the bound
/// every client vector must respect.
pub fn root_vector(g0: &[f64], q: u64) -> Result<(Vec<i64>, u64), FieldError> {
    let v: Vec<i64> = g0
        .iter()
        .map(|&x| quantize(x, q, MERSENNE61))
        .collect::<Result<_, _>>()?;
    let b = norm_sq(&v);
    let bound = u64::try_from(b)
        .map_err(|_| FieldError::Audit(format!("root norm {b} does not fit in 64 bits")))?;
    Ok((v, bound))
}

/// Scales `g` to `norm_g0`, rounds toward zero and, if rounding left the
/// squared norm above `bound`, pulls the largest coordinates one unit
/// toward zero until it fits. A zero or non-finite gradient gives zeros.
pub fn normalize_and_quantize(
    g: &[f64],
    norm_g0: f64,
    q: u64,
    bound: u64,
) -> Result<Vec<i64>, FieldError> {
    let n = l2(g);
    if n == 0.0 || !n.is_finite() || norm_g0 <= 0.0 {
        return Ok(vec![0; g.len()]);
    }
    let s = norm_g0 / n;
    let mut v: Vec<i64> = g
        .iter()
        .map(|&x| quantize(x * s, q, MERSENNE61))
        .collect::<Result<_, _>>()?;
    let mut sum = norm_sq(&v);
    let bound = bound as u128;
    if sum > bound {
        let mut heap: BinaryHeap<(u64, Reverse<usize>)> = v
            .iter()
            .enumerate()
            .map(|(i, &x)| (x.unsigned_abs(), Reverse(i)))
            .collect();
        while sum > bound {
            let Some((a, Reverse(i))) = heap.pop() else {
                break;
            };
            if a == 0 {
                break;
            }
            sum -= 2 * a as u128 - 1;
            v[i] -= v[i].signum();
            heap.push((a - 1, Reverse(i)));
        }
    }
    Ok(v)
}

/// `max(0, dot) / bound`.
pub fn trust_score(dot: i64, bound: u64) -> f64 {
    if bound == 0 {
        return 0.0;
    }
    dot.max(0) as f64 / bound as f64
}

/// Trust-score numerators `max(0, <v_j, v0>)` over the common denominator.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrustScores {
    pub numerators: BTreeMap<u32, u64>,
    pub bound: u64,
}

impl TrustScores {
    pub fn score(&self, id: u32) -> f64 {
        self.numerators.get(&id).map_or(0.0, |&n| {
            if self.bound == 0 {
                0.0
            } else {
                n as f64 / self.bound as f64
            }
        })
    }

    pub fn total(&self) -> u128 {
        self.numerators.values().map(|&n| n as u128).sum()
    }
}
