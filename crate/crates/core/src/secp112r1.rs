//! The SEC 2 curve secp112r1: `y^2 = x^3 - 3x + b` over a 112-bit prime
//! field, prime order, cofactor 1.
//!
//! Field and scalar arithmetic use two-limb Montgomery multiplication over
//! `u128`. Points are kept in Jacobian coordinates.

use rand_core::CryptoRng;

use crate::error::{Error, Result};
use crate::group::{GroupId, PrimeGroup};

const P: u128 = 0xDB7C_2ABF_62E3_5E66_8076_BEAD_208B;
const B: u128 = 0x659E_F8BA_0439_16EE_DE89_1170_2B22;
const GX: u128 = 0x0948_7239_995A_5EE7_6B55_F9C2_F098;
const GY: u128 = 0xA89C_E5AF_8724_C0A2_3E0E_0FF7_7500;
const N: u128 = 0xDB7C_2ABF_62E3_5E76_28DF_AC65_61C5;

const COORD_LEN: usize = 14;

/// Montgomery parameters for an odd modulus below `2^112`, `R = 2^128`.
#[derive(Debug, Clone, Copy)]
struct Modulus {
    m: u128,
    /// `-m^{-1} mod 2^64`
    m_inv: u64,
    /// `R mod m`
    r1: u128,
    /// `R^2 mod m`
    r2: u128,
}

const fn add_mod(a: u128, b: u128, m: u128) -> u128 {
    let s = a + b;
    if s >= m {
        s - m
    } else {
        s
    }
}

/// Double-and-add modular multiplication; only used for constants and tests.
pub(crate) const fn mul_mod_slow(a: u128, b: u128, m: u128) -> u128 {
    let a = a % m;
    let mut acc = 0u128;
    let mut bit = 127;
    loop {
        acc = add_mod(acc, acc, m);
        if (b >> bit) & 1 == 1 {
            acc = add_mod(acc, a, m);
        }
        if bit == 0 {
            break;
        }
        bit -= 1;
    }
    acc
}

impl Modulus {
    const fn new(m: u128) -> Self {
        let m0 = m as u64;
        let mut inv: u64 = 1;
        let mut i = 0;
        while i < 6 {
            inv = inv.wrapping_mul(2u64.wrapping_sub(m0.wrapping_mul(inv)));
            i += 1;
        }
        let r1 = (u128::MAX % m + 1) % m;
        let r2 = mul_mod_slow(r1, r1, m);
        Self { m, m_inv: inv.wrapping_neg(), r1, r2 }
    }

    /// `a * b / R mod m` for `a, b < m`.
    #[inline]
    fn mont_mul(&self, a: u128, b: u128) -> u128 {
        let a = [a as u64, (a >> 64) as u64];
        let b = [b as u64, (b >> 64) as u64];
        let n = [self.m as u64, (self.m >> 64) as u64];
        let mut t = [0u64; 4];
        for &bi in &b {
            let mut carry = 0u64;
            for j in 0..2 {
                let uv = t[j] as u128 + a[j] as u128 * bi as u128 + carry as u128;
                t[j] = uv as u64;
                carry = (uv >> 64) as u64;
            }
            let uv = t[2] as u128 + carry as u128;
            t[2] = uv as u64;
            t[3] = (uv >> 64) as u64;

            let q = t[0].wrapping_mul(self.m_inv);
            let uv = t[0] as u128 + q as u128 * n[0] as u128;
            let mut carry = (uv >> 64) as u64;
            let uv = t[1] as u128 + q as u128 * n[1] as u128 + carry as u128;
            t[0] = uv as u64;
            carry = (uv >> 64) as u64;
            let uv = t[2] as u128 + carry as u128;
            t[1] = uv as u64;
            t[2] = t[3] + (uv >> 64) as u64;
        }
        debug_assert_eq!(t[2], 0);
        let r = t[0] as u128 | (t[1] as u128) << 64;
        if r >= self.m {
            r - self.m
        } else {
            r
        }
    }

    /// Into Montgomery form.
    #[inline]
    fn enter(&self, a: u128) -> u128 {
        self.mont_mul(a % self.m, self.r2)
    }

    /// Out of Montgomery form.
    #[inline]
    fn leave(&self, a: u128) -> u128 {
        self.mont_mul(a, 1)
    }

    /// Plain `a * b mod m` for canonical inputs.
    #[inline]
    fn mul(&self, a: u128, b: u128) -> u128 {
        self.mont_mul(self.mont_mul(a, self.r2), b)
    }

    fn sub(&self, a: u128, b: u128) -> u128 {
        if a >= b {
            a - b
        } else {
            a + self.m - b
        }
    }
}

const FIELD: Modulus = Modulus::new(P);
const ORDER: Modulus = Modulus::new(N);

/// Field element in Montgomery form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Fe(u128);

impl Fe {
    const ZERO: Fe = Fe(0);

    fn one() -> Fe {
        Fe(FIELD.r1)
    }

    fn from_canonical(v: u128) -> Fe {
        Fe(FIELD.enter(v))
    }

    fn to_canonical(self) -> u128 {
        FIELD.leave(self.0)
    }

    fn add(self, o: Fe) -> Fe {
        Fe(add_mod(self.0, o.0, P))
    }

    fn sub(self, o: Fe) -> Fe {
        Fe(FIELD.sub(self.0, o.0))
    }

    fn mul(self, o: Fe) -> Fe {
        Fe(FIELD.mont_mul(self.0, o.0))
    }

    fn square(self) -> Fe {
        self.mul(self)
    }

    fn double(self) -> Fe {
        self.add(self)
    }

    fn pow(self, mut e: u128) -> Fe {
        let mut base = self;
        let mut acc = Fe::one();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(base);
            }
            base = base.square();
            e >>= 1;
        }
        acc
    }

    fn invert(self) -> Fe {
        self.pow(P - 2)
    }

    /// Square root when one exists (`p ≡ 3 mod 4`).
    fn sqrt(self) -> Option<Fe> {
        let r = self.pow((P + 1) / 4);
        (r.square() == self).then_some(r)
    }

    fn is_zero(self) -> bool {
        self.0 == 0
    }
}

/// `x^3 - 3x + b`
fn curve_rhs(x: Fe) -> Fe {
    let three_x = x.double().add(x);
    x.square().mul(x).sub(three_x).add(Fe::from_canonical(B))
}

/// A point in Jacobian coordinates; `z = 0` is the point at infinity.
#[derive(Debug, Clone, Copy)]
pub struct Point {
    x: Fe,
    y: Fe,
    z: Fe,
}

impl PartialEq for Point {
    fn eq(&self, o: &Point) -> bool {
        match (self.z.is_zero(), o.z.is_zero()) {
            (true, true) => true,
            (true, false) | (false, true) => false,
            (false, false) => {
                let z1z1 = self.z.square();
                let z2z2 = o.z.square();
                self.x.mul(z2z2) == o.x.mul(z1z1) && self.y.mul(z2z2).mul(o.z) == o.y.mul(z1z1).mul(self.z)
            }
        }
    }
}

impl Eq for Point {}

impl Point {
    const INFINITY: Point = Point { x: Fe::ZERO, y: Fe::ZERO, z: Fe::ZERO };

    fn from_affine(x: u128, y: u128) -> Point {
        Point { x: Fe::from_canonical(x), y: Fe::from_canonical(y), z: Fe::one() }
    }

    fn generator() -> Point {
        Point::from_affine(GX, GY)
    }

    fn is_infinity(&self) -> bool {
        self.z.is_zero()
    }

    fn to_affine(self) -> Option<(u128, u128)> {
        if self.is_infinity() {
            return None;
        }
        let zinv = self.z.invert();
        let zinv2 = zinv.square();
        Some((self.x.mul(zinv2).to_canonical(), self.y.mul(zinv2).mul(zinv).to_canonical()))
    }

    #[cfg(test)]
    fn is_on_curve(&self) -> bool {
        match self.to_affine() {
            None => true,
            Some((x, y)) => {
                let y = Fe::from_canonical(y);
                y.square() == curve_rhs(Fe::from_canonical(x))
            }
        }
    }

    // dbl-2001-b, a = -3
    fn double(&self) -> Point {
        if self.is_infinity() || self.y.is_zero() {
            return Point::INFINITY;
        }
        let delta = self.z.square();
        let gamma = self.y.square();
        let beta = self.x.mul(gamma);
        let t = self.x.sub(delta).mul(self.x.add(delta));
        let alpha = t.double().add(t);
        let beta4 = beta.double().double();
        let x3 = alpha.square().sub(beta4.double());
        let z3 = self.y.add(self.z).square().sub(gamma).sub(delta);
        let gamma2_8 = gamma.square().double().double().double();
        let y3 = alpha.mul(beta4.sub(x3)).sub(gamma2_8);
        Point { x: x3, y: y3, z: z3 }
    }

    // add-2007-bl
    fn add(&self, o: &Point) -> Point {
        if self.is_infinity() {
            return *o;
        }
        if o.is_infinity() {
            return *self;
        }
        let z1z1 = self.z.square();
        let z2z2 = o.z.square();
        let u1 = self.x.mul(z2z2);
        let u2 = o.x.mul(z1z1);
        let s1 = self.y.mul(o.z).mul(z2z2);
        let s2 = o.y.mul(self.z).mul(z1z1);
        let h = u2.sub(u1);
        let r = s2.sub(s1).double();
        if h.is_zero() {
            return if r.is_zero() { self.double() } else { Point::INFINITY };
        }
        let i = h.double().square();
        let j = h.mul(i);
        let v = u1.mul(i);
        let x3 = r.square().sub(j).sub(v.double());
        let y3 = r.mul(v.sub(x3)).sub(s1.mul(j).double());
        let z3 = self.z.add(o.z).square().sub(z1z1).sub(z2z2).mul(h);
        Point { x: x3, y: y3, z: z3 }
    }

    fn neg(&self) -> Point {
        Point { x: self.x, y: Fe::ZERO.sub(self.y), z: self.z }
    }

    fn mul(&self, k: u128) -> Point {
        let mut acc = Point::INFINITY;
        for bit in (0..112).rev() {
            acc = acc.double();
            if (k >> bit) & 1 == 1 {
                acc = acc.add(self);
            }
        }
        acc
    }
}

/// Scalar modulo the group order, canonical form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Secp112Scalar(u128);

impl Secp112Scalar {
    pub fn value(&self) -> u128 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Secp112r1;

const ORDER_BE: [u8; COORD_LEN] = {
    let mut out = [0u8; COORD_LEN];
    let mut i = 0;
    while i < COORD_LEN {
        out[i] = (N >> (8 * (COORD_LEN - 1 - i))) as u8;
        i += 1;
    }
    out
};

fn be_to_u128(bytes: &[u8]) -> u128 {
    bytes.iter().fold(0u128, |acc, &b| acc << 8 | b as u128)
}

fn u128_to_be(v: u128, out: &mut [u8]) {
    for (i, byte) in out.iter_mut().enumerate() {
        *byte = (v >> (8 * (COORD_LEN - 1 - i))) as u8;
    }
}

impl PrimeGroup for Secp112r1 {
    type Scalar = Secp112Scalar;
    type Element = Point;

    const ID: GroupId = GroupId::Secp112r1;
    const ELEMENT_LEN: usize = 1 + COORD_LEN;
    const SCALAR_LEN: usize = COORD_LEN;

    fn identity() -> Point {
        Point::INFINITY
    }

    fn generator() -> Point {
        Point::generator()
    }

    fn add(a: &Point, b: &Point) -> Point {
        a.add(b)
    }

    fn neg(a: &Point) -> Point {
        a.neg()
    }

    fn mul(e: &Point, s: &Secp112Scalar) -> Point {
        e.mul(s.0)
    }

    fn is_identity(e: &Point) -> bool {
        e.is_infinity()
    }

    fn scalar_from_i64(v: i64) -> Secp112Scalar {
        let magnitude = v.unsigned_abs() as u128 % N;
        if v < 0 && magnitude != 0 {
            Secp112Scalar(N - magnitude)
        } else {
            Secp112Scalar(magnitude)
        }
    }

    fn scalar_add(a: &Secp112Scalar, b: &Secp112Scalar) -> Secp112Scalar {
        Secp112Scalar(add_mod(a.0, b.0, N))
    }

    fn scalar_neg(a: &Secp112Scalar) -> Secp112Scalar {
        Secp112Scalar(ORDER.sub(0, a.0))
    }

    fn scalar_mul(a: &Secp112Scalar, b: &Secp112Scalar) -> Secp112Scalar {
        Secp112Scalar(ORDER.mul(a.0, b.0))
    }

    fn random_scalar<R: CryptoRng + ?Sized>(rng: &mut R) -> Secp112Scalar {
        loop {
            let mut buf = [0u8; COORD_LEN];
            rng.fill_bytes(&mut buf);
            let v = be_to_u128(&buf);
            if v < N {
                return Secp112Scalar(v);
            }
        }
    }

    fn encode_element(e: &Point, out: &mut [u8]) {
        let out = &mut out[..Self::ELEMENT_LEN];
        match e.to_affine() {
            None => out.fill(0),
            Some((x, y)) => {
                out[0] = 0x02 | (y & 1) as u8;
                u128_to_be(x, &mut out[1..]);
            }
        }
    }

    fn decode_element(bytes: &[u8]) -> Result<Point> {
        if bytes.len() != Self::ELEMENT_LEN {
            return Err(Error::InvalidEncoding("secp112r1 point must be 15 bytes"));
        }
        match bytes[0] {
            0 if bytes.iter().all(|&b| b == 0) => Ok(Point::INFINITY),
            tag @ (0x02 | 0x03) => {
                let x = be_to_u128(&bytes[1..]);
                if x >= P {
                    return Err(Error::InvalidEncoding("x coordinate not reduced"));
                }
                let y = curve_rhs(Fe::from_canonical(x))
                    .sqrt()
                    .ok_or(Error::InvalidEncoding("x is not on secp112r1"))?
                    .to_canonical();
                let y = if (y & 1) as u8 == tag & 1 { y } else { P - y };
                Ok(Point::from_affine(x, y))
            }
            _ => Err(Error::InvalidEncoding("bad point prefix")),
        }
    }

    fn encode_scalar(s: &Secp112Scalar, out: &mut [u8]) {
        u128_to_be(s.0, &mut out[..COORD_LEN]);
    }

    fn decode_scalar(bytes: &[u8]) -> Result<Secp112Scalar> {
        if bytes.len() != COORD_LEN {
            return Err(Error::InvalidEncoding("secp112r1 scalar must be 14 bytes"));
        }
        let v = be_to_u128(bytes);
        if v >= N {
            return Err(Error::InvalidEncoding("scalar is not reduced"));
        }
        Ok(Secp112Scalar(v))
    }

    fn order_be() -> &'static [u8] {
        &ORDER_BE
    }
}
