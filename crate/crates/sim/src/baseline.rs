//! Plaintext aggregation rules the protocol is compared against.

use rflpa_core::field::FieldError;
use rflpa_protocol::trust::{clip_norm, l2, normalize_and_quantize, root_vector};

/// Uniform mean.
pub fn fedavg(grads: &[&[f64]]) -> Vec<f64> {
    let Some(first) = grads.first() else {
        return Vec::new();
    };
    let mut acc = vec![0.0; first.len()];
    for g in grads {
        for (a, x) in acc.iter_mut().zip(g.iter()) {
            *a += x;
        }
    }
    let n = grads.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Coordinate-wise mean after dropping the `beta` fraction of largest and
/// smallest values at each coordinate.
pub fn trimmed_mean(grads: &[&[f64]], beta: f64) -> Vec<f64> {
    let Some(first) = grads.first() else {
        return Vec::new();
    };
    let n = grads.len();
    let k = ((beta * n as f64).floor() as usize).min((n - 1) / 2);
    let mut col = vec![0.0; n];
    (0..first.len())
        .map(|j| {
            for (c, g) in col.iter_mut().zip(grads) {
                *c = g[j];
            }
            col.sort_by(f64::total_cmp);
            let kept = &col[k..n - k];
            kept.iter().sum::<f64>() / kept.len() as f64
        })
        .collect()
}

/// Real-valued trust-score aggregation: `TS_j = max(0, cos(g_j, g0))`,
/// updates rescaled to `||g0||`, weighted by `TS_j / sum TS`.
pub fn fltrust(g0: &[f64], grads: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let n0 = l2(g0);
    let mut acc = vec![0.0; g0.len()];
    let mut scores = Vec::with_capacity(grads.len());
    for g in grads {
        let n = l2(g);
        let ts = if n == 0.0 || n0 == 0.0 {
            0.0
        } else {
            (g.iter().zip(g0).map(|(a, b)| a * b).sum::<f64>() / (n * n0)).max(0.0)
        };
        scores.push(ts);
        if ts > 0.0 {
            for (a, x) in acc.iter_mut().zip(g.iter()) {
                *a += ts * x * n0 / n;
            }
        }
    }
    let total: f64 = scores.iter().sum();
    if total > 0.0 {
        acc.iter_mut().for_each(|a| *a /= total);
    }
    (acc, scores)
}

/// The same rule on the protocol's fixed-point encoding; this is what the
/// secure run must reproduce.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTrust {
    pub aggregate: Vec<f64>,
    /// `max(0, <v_j, v0>)`.
    pub numerators: Vec<u64>,
    pub bound: u64,
}

pub fn fltrust_quantized(
    g0: &[f64],
    grads: &[&[f64]],
    scale: u64,
    max_norm: f64,
) -> Result<QuantizedTrust, FieldError> {
    let g0 = clip_norm(g0, max_norm);
    let (v0, bound) = root_vector(&g0, scale)?;
    let n0 = l2(&g0);
    let mut acc = vec![0i128; g0.len()];
    let mut numerators = Vec::with_capacity(grads.len());
    for g in grads {
        let v = normalize_and_quantize(g, n0, scale, bound)?;
        let dot: i128 = v
            .iter()
            .zip(&v0)
            .map(|(&a, &b)| a as i128 * b as i128)
            .sum();
        let w = dot.max(0);
        numerators.push(w as u64);
        for (a, &x) in acc.iter_mut().zip(&v) {
            *a += w * x as i128;
        }
    }
    let total: u128 = numerators.iter().map(|&x| x as u128).sum();
    let aggregate = if total == 0 {
        vec![0.0; g0.len()]
    } else {
        let denom = scale as f64 * total as f64;
        acc.iter().map(|&a| a as f64 / denom).collect()
    };
    Ok(QuantizedTrust {
        aggregate,
        numerators,
        bound,
    })
}
