//! Prime-field arithmetic and the signed fixed-point encoding.
//!
//! `Fp<P>` stores a canonical residue in `[0, P)`. Products go through a
//! 128-bit intermediate; the Mersenne modulus 2^61-1 gets a shift-and-add
//! reduction, every other modulus falls back to `%`.

use core::fmt;
use core::iter::{Product, Sum};
use core::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use rand::Rng;
use thiserror::Error;

/// The Mersenne prime 2^61 - 1.
pub const MERSENNE61: u64 = (1u64 << 61) - 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("value {value} is not representable: |q*x| must stay below P/2 = {half}")]
    Overflow { value: f64, half: u64 },
    #[error("integer {0} is outside the symmetric range (-P/2, P/2)")]
    OutOfRange(i128),
    #[error("inverse of zero")]
    ZeroInverse,
    #[error("modulus {0} is not prime")]
    NotPrime(u64),
    #[error("scale q must be at least 1")]
    BadScale,
    #[error("overflow audit failed: {0}")]
    Audit(String),
}

/// Operations the sharing layer needs from a prime field.
pub trait Field:
    Copy
    + Clone
    + Default
    + Eq
    + PartialEq
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Product
{
    const MODULUS: u64;
    /// Serialized width in bytes.
    const BYTES: usize = 8;

    fn new(v: u64) -> Self;
    fn value(self) -> u64;

    fn zero() -> Self {
        Self::new(0)
    }
    fn one() -> Self {
        Self::new(1)
    }
    fn is_zero(self) -> bool {
        self.value() == 0
    }

    fn pow(self, mut e: u64) -> Self {
        let mut base = self;
        let mut acc = Self::one();
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            base *= base;
            e >>= 1;
        }
        acc
    }

    fn inv(self) -> Option<Self> {
        if self.is_zero() {
            None
        } else {
            Some(self.pow(Self::MODULUS - 2))
        }
    }

    fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::new(rng.random_range(0..Self::MODULUS))
    }

    /// Upper-half convention: `v < 0` maps to `P - |v|`.
    fn from_i64(v: i64) -> Self {
        let m = Self::MODULUS as i128;
        Self::new((v as i128).rem_euclid(m) as u64)
    }

    /// Inverse of [`Field::from_i64`] on `(-P/2, P/2)`.
    fn to_signed(self) -> i64 {
        let v = self.value();
        if v <= (Self::MODULUS - 1) / 2 {
            v as i64
        } else {
            -((Self::MODULUS - v) as i64)
        }
    }

    fn to_bytes(self) -> [u8; 8] {
        self.value().to_le_bytes()
    }

    /// Rejects non-canonical encodings.
    fn from_bytes(b: [u8; 8]) -> Option<Self> {
        let v = u64::from_le_bytes(b);
        (v < Self::MODULUS).then(|| Self::new(v))
    }
}

#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(transparent)]
pub struct Fp<const P: u64>(u64);

/// The default protocol field.
pub type F61 = Fp<MERSENNE61>;

impl<const P: u64> Fp<P> {
    #[inline(always)]
    fn reduce128(x: u128) -> u64 {
        if P == MERSENNE61 {
            // x < 2^122 so two folds suffice
            let lo = (x as u64) & MERSENNE61;
            let hi = (x >> 61) as u64;
            let s = lo as u128 + hi as u128;
            let lo = (s as u64) & MERSENNE61;
            let hi = (s >> 61) as u64;
            let mut r = lo + hi;
            if r >= MERSENNE61 {
                r -= MERSENNE61;
            }
            r
        } else {
            (x % P as u128) as u64
        }
    }

    #[inline(always)]
    pub const fn raw(self) -> u64 {
        self.0
    }
}

impl<const P: u64> Field for Fp<P> {
    const MODULUS: u64 = P;

    #[inline(always)]
    fn new(v: u64) -> Self {
        if v < P {
            Fp(v)
        } else {
            Fp(v % P)
        }
    }

    #[inline(always)]
    fn value(self) -> u64 {
        self.0
    }
}

impl<const P: u64> fmt::Debug for Fp<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl<const P: u64> fmt::Display for Fp<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl<const P: u64> Add for Fp<P> {
    type Output = Self;
    #[inline(always)]
    fn add(self, rhs: Self) -> Self {
        // P < 2^63 for every modulus we use, so the sum cannot wrap
        let s = self.0 + rhs.0;
        Fp(if s >= P { s - P } else { s })
    }
}

impl<const P: u64> Sub for Fp<P> {
    type Output = Self;
    #[inline(always)]
    fn sub(self, rhs: Self) -> Self {
        Fp(if self.0 >= rhs.0 {
            self.0 - rhs.0
        } else {
            self.0 + P - rhs.0
        })
    }
}

impl<const P: u64> Mul for Fp<P> {
    type Output = Self;
    #[inline(always)]
    fn mul(self, rhs: Self) -> Self {
        Fp(Self::reduce128(self.0 as u128 * rhs.0 as u128))
    }
}

impl<const P: u64> Neg for Fp<P> {
    type Output = Self;
    #[inline(always)]
    fn neg(self) -> Self {
        Fp(if self.0 == 0 { 0 } else { P - self.0 })
    }
}

impl<const P: u64> AddAssign for Fp<P> {
    #[inline(always)]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<const P: u64> SubAssign for Fp<P> {
    #[inline(always)]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<const P: u64> MulAssign for Fp<P> {
    #[inline(always)]
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<const P: u64> Sum for Fp<P> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Fp(0), |a, b| a + b)
    }
}

impl<const P: u64> Product for Fp<P> {
    fn product<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Fp(1 % P), |a, b| a * b)
    }
}

/// Inner product without a reduction per term.
///
/// For the Mersenne field, up to 63 products of 122-bit size are accumulated
/// in a u128 before folding.
pub fn dot<F: Field>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    if F::MODULUS == MERSENNE61 {
        let mut acc = F::zero();
        for (ca, cb) in a.chunks(32).zip(b.chunks(32)) {
            let mut wide: u128 = 0;
            for (x, y) in ca.iter().zip(cb) {
                wide += x.value() as u128 * y.value() as u128;
            }
            acc += F::new(fold_wide(wide));
        }
        acc
    } else {
        a.iter().zip(b).map(|(&x, &y)| x * y).sum()
    }
}

#[inline(always)]
fn fold_wide(x: u128) -> u64 {
    // x < 2^127
    let lo = (x as u64 & MERSENNE61) as u128;
    let mid = ((x >> 61) as u64 & MERSENNE61) as u128;
    let hi = x >> 122;
    let s = lo + mid + hi;
    let r = (s as u64 & MERSENNE61) + (s >> 61) as u64;
    if r >= MERSENNE61 {
        r - MERSENNE61
    } else {
        r
    }
}

/// Inverts every entry with one field inversion. Zero entries stay zero.
pub fn batch_inverse<F: Field>(xs: &mut [F]) {
    let mut prefix = Vec::with_capacity(xs.len());
    let mut acc = F::one();
    for &x in xs.iter() {
        prefix.push(acc);
        if !x.is_zero() {
            acc *= x;
        }
    }
    let mut inv = acc.inv().expect("product of non-zero elements");
    for (x, p) in xs.iter_mut().zip(prefix).rev() {
        if x.is_zero() {
            continue;
        }
        let next = inv * *x;
        *x = inv * p;
        inv = next;
    }
}

/// `⌊qx⌋` for `x ≥ 0` and `⌊qx⌋ + 1` for `x < 0`, with the overflow guard.
pub fn quantize(x: f64, q: u64, modulus: u64) -> Result<i64, FieldError> {
    let half = modulus / 2;
    let y = x * q as f64;
    if !y.is_finite() || y.abs() >= half as f64 {
        return Err(FieldError::Overflow { value: x, half });
    }
    let f = y.floor();
    Ok(if x >= 0.0 { f as i64 } else { f as i64 + 1 })
}

pub fn encode<F: Field>(v: i64) -> Result<F, FieldError> {
    let half = (F::MODULUS / 2) as i128;
    let w = v as i128;
    if w.abs() > half || (w.abs() == half && F::MODULUS % 2 == 0) {
        return Err(FieldError::OutOfRange(w));
    }
    Ok(F::from_i64(v))
}

pub fn decode<F: Field>(x: F) -> i64 {
    x.to_signed()
}

pub fn quantize_vec<F: Field>(xs: &[f64], q: u64) -> Result<Vec<F>, FieldError> {
    xs.iter()
        .map(|&x| quantize(x, q, F::MODULUS).and_then(encode::<F>))
        .collect()
}

pub fn dequantize(v: i64, q: u64) -> f64 {
    v as f64 / q as f64
}

/// Deterministic Miller-Rabin for 64-bit inputs.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    let mulmod = |a: u64, b: u64| (a as u128 * b as u128 % n as u128) as u64;
    let powmod = |mut b: u64, mut e: u64| {
        let mut r = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                r = mulmod(r, b);
            }
            b = mulmod(b, b);
            e >>= 1;
        }
        r
    };
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = powmod(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Prime, quantization scale and the real-valued norm bound on `g0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldParams {
    pub prime: u64,
    pub scale: u64,
    pub max_norm: f64,
}

impl Default for FieldParams {
    fn default() -> Self {
        FieldParams {
            prime: MERSENNE61,
            scale: 1 << 16,
            max_norm: 2.0,
        }
    }
}

impl FieldParams {
    /// Bound on the quantized norm of any vector entering the field.
    pub fn norm_bound_q(&self) -> u128 {
        (self.scale as f64 * self.max_norm).ceil() as u128
    }

    /// Rejects a configuration whose sums could wrap modulo P for `n` users.
    ///
    /// Besides `P > max{N*G, G^2}` this also bounds the trust-weighted sum
    /// `sum_j dot_j * v_j`, whose magnitude is at most `N*G^3`, to the
    /// symmetric range.
    pub fn audit(&self, n: usize) -> Result<(), FieldError> {
        if self.scale == 0 {
            return Err(FieldError::BadScale);
        }
        if !is_prime_u64(self.prime) {
            return Err(FieldError::NotPrime(self.prime));
        }
        if !(self.max_norm.is_finite() && self.max_norm > 0.0) {
            return Err(FieldError::Audit(format!(
                "max_norm must be positive, got {}",
                self.max_norm
            )));
        }
        let g = self.norm_bound_q();
        let p = self.prime as u128;
        let n = n as u128;
        if p <= n * g {
            return Err(FieldError::Audit(format!("P={p} <= N*G = {}", n * g)));
        }
        if p <= g * g {
            return Err(FieldError::Audit(format!("P={p} <= G^2 = {}", g * g)));
        }
        let agg = g.checked_pow(3).and_then(|c| c.checked_mul(2 * n));
        match agg {
            Some(a) if a < p => Ok(()),
            _ => Err(FieldError::Audit(format!(
                "P={p} too small for the weighted aggregate bound 2*N*G^3 (N={n}, G={g})"
            ))),
        }
    }
}
