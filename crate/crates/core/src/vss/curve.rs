//! The supersingular curve `y^2 = x^3 + x` over `F_r`, `r = 20 P - 1`.
//!
//! `r` is a 66-bit prime with `r = 3 mod 4`, so `#E(F_r) = r + 1 = 20 P` and
//! the order-`P` subgroup has embedding degree 2. The distortion map
//! `(x, y) -> (-x, i y)` into `F_{r^2} = F_r[i]/(i^2 + 1)` turns the reduced
//! Tate pairing into a symmetric pairing on that subgroup. Toy-size, like the
//! Schnorr group: the structure is real, the security level is not.

use super::mont::MontField;
use crate::field::{Field, F61, MERSENNE61};

pub const R: u128 = 20 * MERSENNE61 as u128 - 1;
pub const COFACTOR: u64 = 20;
pub const POINT_BYTES: usize = 9;
static FR: MontField = MontField::new(R);

const FLAG_INF: u8 = 0x80;
const FLAG_ODD: u8 = 0x40;

/// Element `a + b i` of `F_{r^2}`, both parts in Montgomery form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gt {
    a: u128,
    b: u128,
}

impl Gt {
    pub fn one() -> Self {
        Gt { a: FR.one(), b: 0 }
    }

    #[inline]
    fn mul(self, o: Self) -> Self {
        let ac = FR.mul(self.a, o.a);
        let bd = FR.mul(self.b, o.b);
        let s = FR.mul(FR.add(self.a, self.b), FR.add(o.a, o.b));
        Gt {
            a: FR.sub(ac, bd),
            b: FR.sub(FR.sub(s, ac), bd),
        }
    }

    #[inline]
    fn sqr(self) -> Self {
        // (a+bi)^2 = (a+b)(a-b) + 2ab i
        let ab = FR.mul(self.a, self.b);
        Gt {
            a: FR.mul(FR.add(self.a, self.b), FR.sub(self.a, self.b)),
            b: FR.add(ab, ab),
        }
    }

    fn conj(self) -> Self {
        Gt {
            a: self.a,
            b: FR.neg(self.b),
        }
    }

    fn inv(self) -> Self {
        let norm = FR.add(FR.sqr(self.a), FR.sqr(self.b));
        let ni = FR.inv(norm);
        Gt {
            a: FR.mul(self.a, ni),
            b: FR.neg(FR.mul(self.b, ni)),
        }
    }

    pub fn pow(self, e: u64) -> Self {
        let mut acc = Gt::one();
        for bit in (0..64).rev() {
            acc = acc.sqr();
            if e >> bit & 1 == 1 {
                acc = acc.mul(self);
            }
        }
        acc
    }

    pub fn op(self, o: Self) -> Self {
        self.mul(o)
    }
}

/// Point in Jacobian coordinates `(X/Z^2, Y/Z^3)`; `Z = 0` is infinity.
#[derive(Debug, Clone, Copy)]
pub struct G1 {
    x: u128,
    y: u128,
    z: u128,
}

impl PartialEq for G1 {
    fn eq(&self, o: &Self) -> bool {
        match (self.is_identity(), o.is_identity()) {
            (true, true) => true,
            (false, false) => {
                let z1 = FR.sqr(self.z);
                let z2 = FR.sqr(o.z);
                FR.mul(self.x, z2) == FR.mul(o.x, z1)
                    && FR.mul(self.y, FR.mul(z2, o.z)) == FR.mul(o.y, FR.mul(z1, self.z))
            }
            _ => false,
        }
    }
}

impl Eq for G1 {}

fn rhs(x: u128) -> u128 {
    FR.add(FR.mul(FR.sqr(x), x), x)
}

impl G1 {
    pub fn identity() -> Self {
        G1 {
            x: FR.one(),
            y: FR.one(),
            z: 0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.z == 0
    }

    fn affine(x: u128, y: u128) -> Self {
        G1 { x, y, z: FR.one() }
    }

    /// Affine coordinates in Montgomery form, `None` at infinity.
    fn to_affine(self) -> Option<(u128, u128)> {
        if self.is_identity() {
            return None;
        }
        let zi = FR.inv(self.z);
        let zi2 = FR.sqr(zi);
        Some((FR.mul(self.x, zi2), FR.mul(self.y, FR.mul(zi2, zi))))
    }

    pub fn normalize(self) -> Self {
        match self.to_affine() {
            Some((x, y)) => G1::affine(x, y),
            None => G1::identity(),
        }
    }

    pub fn neg(self) -> Self {
        G1 {
            y: FR.neg(self.y),
            ..self
        }
    }

    pub fn double(self) -> Self {
        if self.is_identity() || self.y == 0 {
            return G1::identity();
        }
        let xx = FR.sqr(self.x);
        let yy = FR.sqr(self.y);
        let yyyy = FR.sqr(yy);
        let zz = FR.sqr(self.z);
        let t = FR.sub(FR.sub(FR.sqr(FR.add(self.x, yy)), xx), yyyy);
        let s = FR.add(t, t);
        // a = 1
        let m = FR.add(FR.add(FR.add(xx, xx), xx), FR.sqr(zz));
        let x3 = FR.sub(FR.sqr(m), FR.add(s, s));
        let y8 = {
            let y2 = FR.add(yyyy, yyyy);
            let y4 = FR.add(y2, y2);
            FR.add(y4, y4)
        };
        let y3 = FR.sub(FR.mul(m, FR.sub(s, x3)), y8);
        let z3 = FR.sub(FR.sub(FR.sqr(FR.add(self.y, self.z)), yy), zz);
        G1 {
            x: x3,
            y: y3,
            z: z3,
        }
    }

    pub fn add(self, o: Self) -> Self {
        if self.is_identity() {
            return o;
        }
        if o.is_identity() {
            return self;
        }
        let z1z1 = FR.sqr(self.z);
        let z2z2 = FR.sqr(o.z);
        let u1 = FR.mul(self.x, z2z2);
        let u2 = FR.mul(o.x, z1z1);
        let s1 = FR.mul(self.y, FR.mul(o.z, z2z2));
        let s2 = FR.mul(o.y, FR.mul(self.z, z1z1));
        let h = FR.sub(u2, u1);
        let rr = FR.sub(s2, s1);
        if h == 0 {
            return if rr == 0 {
                self.double()
            } else {
                G1::identity()
            };
        }
        let r2 = FR.add(rr, rr);
        let h2 = FR.add(h, h);
        let i = FR.sqr(h2);
        let j = FR.mul(h, i);
        let v = FR.mul(u1, i);
        let x3 = FR.sub(FR.sub(FR.sqr(r2), j), FR.add(v, v));
        let s1j = FR.mul(s1, j);
        let y3 = FR.sub(FR.mul(r2, FR.sub(v, x3)), FR.add(s1j, s1j));
        let z3 = FR.mul(FR.sub(FR.sub(FR.sqr(FR.add(self.z, o.z)), z1z1), z2z2), h);
        G1 {
            x: x3,
            y: y3,
            z: z3,
        }
    }

    pub fn mul_u64(self, k: u64) -> Self {
        let mut acc = G1::identity();
        for bit in (0..64 - k.leading_zeros()).rev() {
            acc = acc.double();
            if k >> bit & 1 == 1 {
                acc = acc.add(self);
            }
        }
        acc
    }

    pub fn mul(self, k: F61) -> Self {
        self.mul_u64(k.value())
    }

    /// `20 * P0` for the first curve point `P0` with the smallest abscissa
    /// `x >= 1`, giving a generator of the order-`P` subgroup.
    pub fn generator() -> Self {
        for x in 1u64.. {
            let xm = FR.from_u64(x);
            if let Some(y) = FR.sqrt(rhs(xm)) {
                let g = G1::affine(xm, y).mul_u64(COFACTOR);
                if !g.is_identity() {
                    return g.normalize();
                }
            }
        }
        unreachable!()
    }

    pub fn in_subgroup(&self) -> bool {
        self.mul_u64(MERSENNE61).is_identity()
    }

    pub fn on_curve(&self) -> bool {
        match self.to_affine() {
            None => true,
            Some((x, y)) => FR.sqr(y) == rhs(x),
        }
    }

    /// 9-byte compressed form: the 66-bit abscissa with a parity flag for
    /// `y` and an infinity flag in the top bits of the last byte.
    pub fn to_bytes(&self) -> [u8; POINT_BYTES] {
        let mut out = [0u8; POINT_BYTES];
        match self.to_affine() {
            None => out[POINT_BYTES - 1] = FLAG_INF,
            Some((x, y)) => {
                let xv = FR.from_mont(x);
                out.copy_from_slice(&xv.to_le_bytes()[..POINT_BYTES]);
                if FR.from_mont(y) & 1 == 1 {
                    out[POINT_BYTES - 1] |= FLAG_ODD;
                }
            }
        }
        out
    }

    /// Rejects non-canonical encodings, points off the curve and points
    /// outside the order-`P` subgroup.
    pub fn from_bytes(b: &[u8]) -> Option<Self> {
        if b.len() != POINT_BYTES {
            return None;
        }
        let flags = b[POINT_BYTES - 1] & 0xc0;
        if flags & FLAG_INF != 0 {
            return (flags == FLAG_INF
                && b[..POINT_BYTES - 1].iter().all(|&v| v == 0)
                && b[POINT_BYTES - 1] == FLAG_INF)
                .then(G1::identity);
        }
        let mut buf = [0u8; 16];
        buf[..POINT_BYTES].copy_from_slice(b);
        buf[POINT_BYTES - 1] &= 0x3f;
        let xv = u128::from_le_bytes(buf);
        if xv >= R {
            return None;
        }
        let x = FR.to_mont(xv);
        let mut y = FR.sqrt(rhs(x))?;
        let want_odd = flags & FLAG_ODD != 0;
        if (FR.from_mont(y) & 1 == 1) != want_odd {
            y = FR.neg(y);
            if y == 0 {
                return None;
            }
        }
        let p = G1::affine(x, y);
        p.in_subgroup().then_some(p)
    }
}

/// Line through `t` (tangent when `p == t`) evaluated at the distorted point
/// `(-xq, i yq)`. Vertical lines evaluate into `F_r` and are dropped since the
/// final exponentiation kills them.
#[inline]
fn line(lambda: u128, xt: u128, yt: u128, xq: u128, yq: u128) -> Gt {
    Gt {
        a: FR.sub(FR.mul(lambda, FR.add(xq, xt)), yt),
        b: yq,
    }
}

/// Reduced Tate pairing `e(P, phi(Q))` on the order-`P` subgroup.
pub fn pairing(p: &G1, q: &G1) -> Gt {
    let (Some((xp, yp)), Some((xq, yq))) = (p.to_affine(), q.to_affine()) else {
        return Gt::one();
    };
    let mut f = Gt::one();
    let (mut xt, mut yt) = (xp, yp);
    let mut at_inf = false;
    let n = MERSENNE61;
    for bit in (0..63 - n.leading_zeros()).rev() {
        if at_inf {
            break;
        }
        // doubling step
        if yt == 0 {
            at_inf = true;
        } else {
            let num = FR.add(FR.add(FR.add(FR.sqr(xt), FR.sqr(xt)), FR.sqr(xt)), FR.one());
            let lambda = FR.mul(num, FR.inv(FR.add(yt, yt)));
            f = f.sqr().mul(line(lambda, xt, yt, xq, yq));
            let x3 = FR.sub(FR.sqr(lambda), FR.add(xt, xt));
            yt = FR.sub(FR.mul(lambda, FR.sub(xt, x3)), yt);
            xt = x3;
        }
        if n >> bit & 1 == 1 && !at_inf {
            if xt == xp {
                if yt == yp {
                    unreachable!("T = P inside the loop only for tiny orders");
                }
                at_inf = true;
            } else {
                let lambda = FR.mul(FR.sub(yt, yp), FR.inv(FR.sub(xt, xp)));
                f = f.mul(line(lambda, xt, yt, xq, yq));
                let x3 = FR.sub(FR.sub(FR.sqr(lambda), xt), xp);
                yt = FR.sub(FR.mul(lambda, FR.sub(xt, x3)), yt);
                xt = x3;
            }
        }
    }
    // f^((r^2 - 1)/P) = (conj(f) / f)^20
    let g = f.conj().mul(f.inv());
    g.pow(COFACTOR)
}
