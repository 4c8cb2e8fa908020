use rflpa_core::field::{FieldParams, MERSENNE61};
use rflpa_core::vss::Backend;
use rflpa_core::Exec;
use thiserror::Error;

use crate::crypto::CryptoMode;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    /// Number of clients.
    pub n: usize,
    /// Model dimension.
    pub m: usize,
    /// Sharing degree.
    pub d: usize,
    /// Gradient pack width.
    pub l: usize,
    /// Re-share pack width.
    pub p: usize,
    /// Minimum respondents per round (K).
    pub threshold: usize,
    /// Wrong shares the decoder must tolerate on top of `n - threshold` missing ones (A).
    pub corrupt: usize,
    pub field: FieldParams,
    pub vss: Backend,
    pub crypto: CryptoMode,
    pub exec: Exec,
}

impl ProtocolConfig {
    /// `d = floor(0.4N)`, `l = p = ceil(0.1N)`, `K = max(ceil(0.8N), 2d+1)` and
    /// the largest `A <= floor(0.3N)` that keeps `(N-K) + 2A + d + 1 <= N`.
    pub fn paper_rule(n: usize, m: usize) -> Self {
        let d = 2 * n / 5;
        let l = n.div_ceil(10).max(1);
        let threshold = (4 * n).div_ceil(5).max(2 * d + 1);
        let corrupt = (3 * n / 10).min(threshold.saturating_sub(d + 1) / 2);
        ProtocolConfig {
            n,
            m,
            d,
            l,
            p: l,
            threshold,
            corrupt,
            field: FieldParams::default(),
            vss: Backend::Feldman,
            crypto: CryptoMode::Real,
            exec: Exec::default(),
        }
    }

    /// Same parameters with no packing (`l = p = 1`).
    pub fn unpacked(&self) -> Self {
        ProtocolConfig {
            l: 1,
            p: 1,
            ..self.clone()
        }
    }

    pub fn blocks(&self) -> usize {
        self.m.div_ceil(self.l).max(1)
    }

    pub fn groups(&self, users: usize) -> usize {
        users.div_ceil(self.p)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n < 2 {
            return Err(invalid("n", "need at least two clients"));
        }
        if self.m == 0 {
            return Err(invalid("m", "model dimension must be positive"));
        }
        if self.l == 0 || self.p == 0 {
            return Err(invalid("l", "pack widths must be positive"));
        }
        if self.d + 1 < self.l.max(self.p) {
            return Err(invalid(
                "d",
                format!("degree {} below pack width minus one", self.d),
            ));
        }
        if self.threshold > self.n {
            return Err(invalid(
                "threshold",
                format!("K = {} exceeds N = {}", self.threshold, self.n),
            ));
        }
        if 2 * self.d + 1 > self.threshold {
            return Err(invalid(
                "threshold",
                format!(
                    "K = {} cannot carry degree-2d products (2d+1 = {})",
                    self.threshold,
                    2 * self.d + 1
                ),
            ));
        }
        let need = (self.n - self.threshold) + 2 * self.corrupt + self.d + 1;
        if need > self.n {
            return Err(invalid(
                "corrupt",
                format!(
                    "S + 2E + d + 1 = {} + {} + {} = {need} exceeds N = {}",
                    self.n - self.threshold,
                    2 * self.corrupt,
                    self.d + 1,
                    self.n
                ),
            ));
        }
        if self.field.prime != MERSENNE61 {
            return Err(invalid("prime", "the protocol runs over 2^61 - 1"));
        }
        self.field
            .audit(self.n)
            .map_err(|e| invalid("field", e.to_string()))
    }
}
