//! Prime-order groups the ElGamal layer runs over.
//!
//! [`Ristretto255`] is the default. [`Secp112r1`](crate::secp112r1::Secp112r1)
//! is available behind the `secp112r1` feature for small-curve timing runs;
//! its security margin is far below current recommendations.

use core::fmt::{self, Debug};
use core::str::FromStr;

use curve25519_dalek::constants::RISTRETTO_BASEPOINT_TABLE;
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::Identity;
use rand_core::CryptoRng;

use crate::error::{Error, Result};

/// Identifier of a supported group, as written into key and config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupId {
    Ristretto255,
    Secp112r1,
}

impl GroupId {
    pub fn name(self) -> &'static str {
        match self {
            GroupId::Ristretto255 => "ristretto255",
            GroupId::Secp112r1 => "secp112r1",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            GroupId::Ristretto255 => 1,
            GroupId::Secp112r1 => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(GroupId::Ristretto255),
            2 => Ok(GroupId::Secp112r1),
            _ => Err(Error::InvalidEncoding("unknown group code")),
        }
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GroupId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ristretto255" => Ok(GroupId::Ristretto255),
            "secp112r1" => Ok(GroupId::Secp112r1),
            _ => Err(Error::Config("unknown group name")),
        }
    }
}

/// A cyclic group of prime order `q`, written multiplicatively in the
/// protocol and additively here.
///
/// Elements serialize to exactly `ELEMENT_LEN` bytes with the identity encoded
/// as all zeros; scalars serialize big-endian to `SCALAR_LEN` bytes.
pub trait PrimeGroup: Copy + Debug + Send + Sync + 'static {
    type Scalar: Copy + Debug + PartialEq + Eq + Send + Sync;
    type Element: Copy + Debug + PartialEq + Eq + Send + Sync;

    const ID: GroupId;
    const ELEMENT_LEN: usize;
    const SCALAR_LEN: usize;

    fn identity() -> Self::Element;
    fn generator() -> Self::Element;
    fn add(a: &Self::Element, b: &Self::Element) -> Self::Element;
    fn neg(a: &Self::Element) -> Self::Element;
    fn mul(e: &Self::Element, s: &Self::Scalar) -> Self::Element;
    fn mul_generator(s: &Self::Scalar) -> Self::Element {
        Self::mul(&Self::generator(), s)
    }
    fn is_identity(e: &Self::Element) -> bool {
        *e == Self::identity()
    }

    fn scalar_from_i64(v: i64) -> Self::Scalar;
    fn scalar_add(a: &Self::Scalar, b: &Self::Scalar) -> Self::Scalar;
    fn scalar_neg(a: &Self::Scalar) -> Self::Scalar;
    fn scalar_mul(a: &Self::Scalar, b: &Self::Scalar) -> Self::Scalar;
    fn scalar_is_zero(a: &Self::Scalar) -> bool {
        *a == Self::scalar_from_i64(0)
    }
    fn scalar_sub(a: &Self::Scalar, b: &Self::Scalar) -> Self::Scalar {
        Self::scalar_add(a, &Self::scalar_neg(b))
    }
    /// Uniform in `[0, q)`.
    fn random_scalar<R: CryptoRng + ?Sized>(rng: &mut R) -> Self::Scalar;
    /// Uniform in `[1, q - 1]`.
    fn random_nonzero_scalar<R: CryptoRng + ?Sized>(rng: &mut R) -> Self::Scalar {
        loop {
            let s = Self::random_scalar(rng);
            if !Self::scalar_is_zero(&s) {
                return s;
            }
        }
    }

    fn encode_element(e: &Self::Element, out: &mut [u8]);
    fn decode_element(bytes: &[u8]) -> Result<Self::Element>;
    fn encode_scalar(s: &Self::Scalar, out: &mut [u8]);
    /// Rejects non-canonical encodings (values `>= q`).
    fn decode_scalar(bytes: &[u8]) -> Result<Self::Scalar>;

    /// Group order, big-endian, `SCALAR_LEN` bytes.
    fn order_be() -> &'static [u8];
}

/// The Ristretto group over Curve25519 (order `2^252 + 27742...`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ristretto255;

const RISTRETTO_ORDER_BE: [u8; 32] = [
    0x10, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x14, 0xde, 0xf9,
    0xde, 0xa2, 0xf7, 0x9c, 0xd6, 0x58, 0x12, 0x63, 0x1a, 0x5c, 0xf5, 0xd3, 0xed,
];

impl PrimeGroup for Ristretto255 {
    type Scalar = Scalar;
    type Element = RistrettoPoint;

    const ID: GroupId = GroupId::Ristretto255;
    const ELEMENT_LEN: usize = 32;
    const SCALAR_LEN: usize = 32;

    fn identity() -> RistrettoPoint {
        RistrettoPoint::identity()
    }

    fn generator() -> RistrettoPoint {
        curve25519_dalek::constants::RISTRETTO_BASEPOINT_POINT
    }

    fn add(a: &RistrettoPoint, b: &RistrettoPoint) -> RistrettoPoint {
        a + b
    }

    fn neg(a: &RistrettoPoint) -> RistrettoPoint {
        -a
    }

    fn mul(e: &RistrettoPoint, s: &Scalar) -> RistrettoPoint {
        e * s
    }

    fn mul_generator(s: &Scalar) -> RistrettoPoint {
        s * RISTRETTO_BASEPOINT_TABLE
    }

    fn scalar_from_i64(v: i64) -> Scalar {
        let magnitude = Scalar::from(v.unsigned_abs());
        if v < 0 {
            -magnitude
        } else {
            magnitude
        }
    }

    fn scalar_add(a: &Scalar, b: &Scalar) -> Scalar {
        a + b
    }

    fn scalar_neg(a: &Scalar) -> Scalar {
        -a
    }

    fn scalar_mul(a: &Scalar, b: &Scalar) -> Scalar {
        a * b
    }

    fn random_scalar<R: CryptoRng + ?Sized>(rng: &mut R) -> Scalar {
        let mut wide = [0u8; 64];
        rng.fill_bytes(&mut wide);
        Scalar::from_bytes_mod_order_wide(&wide)
    }

    fn encode_element(e: &RistrettoPoint, out: &mut [u8]) {
        // The identity compresses to 32 zero bytes.
        out[..32].copy_from_slice(e.compress().as_bytes());
    }

    fn decode_element(bytes: &[u8]) -> Result<RistrettoPoint> {
        let compressed = CompressedRistretto::from_slice(bytes)
            .map_err(|_| Error::InvalidEncoding("ristretto point must be 32 bytes"))?;
        compressed.decompress().ok_or(Error::InvalidEncoding("not a ristretto point"))
    }

    fn encode_scalar(s: &Scalar, out: &mut [u8]) {
        let mut le = s.to_bytes();
        le.reverse();
        out[..32].copy_from_slice(&le);
    }

    fn decode_scalar(bytes: &[u8]) -> Result<Scalar> {
        let mut le: [u8; 32] = bytes.try_into().map_err(|_| Error::InvalidEncoding("scalar must be 32 bytes"))?;
        le.reverse();
        Option::from(Scalar::from_canonical_bytes(le)).ok_or(Error::InvalidEncoding("scalar is not reduced"))
    }

    fn order_be() -> &'static [u8] {
        &RISTRETTO_ORDER_BE
    }
}
