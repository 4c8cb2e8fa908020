//! Two-limb Montgomery arithmetic for odd moduli below 2^127.
//!
//! Residues are plain `u128` values in Montgomery form (`a * 2^128 mod m`).

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MontField {
    m: u128,
    m0: u64,
    m1: u64,
    /// `-m^{-1} mod 2^64`
    ninv: u64,
    /// `2^256 mod m`
    r2: u128,
    /// `2^128 mod m`
    one: u128,
}

impl MontField {
    pub const fn new(m: u128) -> Self {
        assert!(m & 1 == 1 && m < (1u128 << 127) && m > 1);
        let m0 = m as u64;
        let mut x: u64 = 1;
        let mut i = 0;
        while i < 7 {
            x = x.wrapping_mul(2u64.wrapping_sub(m0.wrapping_mul(x)));
            i += 1;
        }
        let one = (u128::MAX % m + 1) % m;
        let mut r2 = one;
        let mut k = 0;
        while k < 128 {
            r2 <<= 1;
            if r2 >= m {
                r2 -= m;
            }
            k += 1;
        }
        MontField {
            m,
            m0,
            m1: (m >> 64) as u64,
            ninv: x.wrapping_neg(),
            r2,
            one,
        }
    }

    pub const fn modulus(&self) -> u128 {
        self.m
    }

    pub const fn one(&self) -> u128 {
        self.one
    }

    #[inline(always)]
    pub fn mul(&self, a: u128, b: u128) -> u128 {
        let a0 = a as u64 as u128;
        let a1 = (a >> 64) as u64 as u128;
        let (mut t0, mut t1, mut t2) = (0u64, 0u64, 0u64);
        for bi in [b as u64 as u128, (b >> 64) as u64 as u128] {
            let uv = t0 as u128 + a0 * bi;
            t0 = uv as u64;
            let uv = t1 as u128 + a1 * bi + (uv >> 64);
            t1 = uv as u64;
            let uv = t2 as u128 + (uv >> 64);
            t2 = uv as u64;
            let t3 = (uv >> 64) as u64;

            let q = t0.wrapping_mul(self.ninv) as u128;
            let uv = t0 as u128 + q * self.m0 as u128;
            let uv = t1 as u128 + q * self.m1 as u128 + (uv >> 64);
            t0 = uv as u64;
            let uv = t2 as u128 + (uv >> 64);
            t1 = uv as u64;
            t2 = t3 + (uv >> 64) as u64;
        }
        debug_assert_eq!(t2, 0);
        let r = ((t1 as u128) << 64) | t0 as u128;
        if r >= self.m {
            r - self.m
        } else {
            r
        }
    }

    #[inline(always)]
    pub fn sqr(&self, a: u128) -> u128 {
        self.mul(a, a)
    }

    #[inline(always)]
    pub fn add(&self, a: u128, b: u128) -> u128 {
        let s = a + b;
        if s >= self.m {
            s - self.m
        } else {
            s
        }
    }

    #[inline(always)]
    pub fn sub(&self, a: u128, b: u128) -> u128 {
        if a >= b {
            a - b
        } else {
            a + self.m - b
        }
    }

    #[inline(always)]
    pub fn neg(&self, a: u128) -> u128 {
        if a == 0 {
            0
        } else {
            self.m - a
        }
    }

    pub fn to_mont(&self, x: u128) -> u128 {
        self.mul(x % self.m, self.r2)
    }

    pub fn from_mont(&self, a: u128) -> u128 {
        self.mul(a, 1)
    }

    pub fn from_u64(&self, x: u64) -> u128 {
        self.to_mont(x as u128)
    }

    pub fn pow(&self, base: u128, exp: u128) -> u128 {
        if exp == 0 {
            return self.one;
        }
        let mut acc = base;
        for bit in (0..127 - exp.leading_zeros()).rev() {
            acc = self.sqr(acc);
            if exp >> bit & 1 == 1 {
                acc = self.mul(acc, base);
            }
        }
        acc
    }

    /// Fermat inverse; the modulus must be prime. Returns 0 for 0.
    pub fn inv(&self, a: u128) -> u128 {
        self.pow(a, self.m - 2)
    }

    /// Square root for `m = 3 mod 4`, if one exists.
    pub fn sqrt(&self, a: u128) -> Option<u128> {
        debug_assert_eq!(self.m & 3, 3);
        let r = self.pow(a, (self.m + 1) / 4);
        (self.sqr(r) == a).then_some(r)
    }
}
