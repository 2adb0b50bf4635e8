//! Exponent-encoded ElGamal with an additive 2-of-2 key split.
//!
//! A message `m` is encrypted as `(g^r, g^m h^r)`. Multiplying ciphertexts
//! adds messages, raising both components to `s` multiplies the message by
//! `s`, and decryption yields the point `g^m`. Only `m = 0` is recognisable
//! after decryption, which is all the comparison protocol needs.

use core::marker::PhantomData;

use rand_core::CryptoRng;

use crate::error::{Error, Result};
use crate::group::PrimeGroup;

/// Public key `h = g^a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PublicKey<G: PrimeGroup> {
    pub point: G::Element,
}

/// Full secret `a`. Only exists during key generation and in tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SecretKey<G: PrimeGroup> {
    pub scalar: G::Scalar,
}

/// Key share held by the verification service (first partial decryption).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServiceShare<G: PrimeGroup> {
    scalar: G::Scalar,
}

/// Key share held by the sensor (final decryption).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SensorShare<G: PrimeGroup> {
    scalar: G::Scalar,
}

macro_rules! share_impl {
    ($ty:ident) => {
        impl<G: PrimeGroup> $ty<G> {
            pub fn from_scalar(scalar: G::Scalar) -> Self {
                Self { scalar }
            }

            pub fn scalar(&self) -> &G::Scalar {
                &self.scalar
            }
        }
    };
}

share_impl!(ServiceShare);
share_impl!(SensorShare);

/// Output of key generation: the public key, both shares and the full secret.
#[derive(Debug, Clone)]
pub struct KeyMaterial<G: PrimeGroup> {
    pub public: PublicKey<G>,
    pub secret: SecretKey<G>,
    pub service: ServiceShare<G>,
    pub sensor: SensorShare<G>,
}

/// `a` uniform in `[1, q-1]`, `a1` uniform in `[0, q-1]`, `a2 = a - a1`.
pub fn keygen<G: PrimeGroup, R: CryptoRng + ?Sized>(rng: &mut R) -> KeyMaterial<G> {
    let a = G::random_nonzero_scalar(rng);
    let a1 = G::random_scalar(rng);
    let a2 = G::scalar_sub(&a, &a1);
    KeyMaterial {
        public: PublicKey { point: G::mul_generator(&a) },
        secret: SecretKey { scalar: a },
        service: ServiceShare { scalar: a1 },
        sensor: SensorShare { scalar: a2 },
    }
}

/// Pair of group elements `(c1, c2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ciphertext<G: PrimeGroup> {
    pub c1: G::Element,
    pub c2: G::Element,
    _group: PhantomData<G>,
}

/// A ciphertext after the service's partial decryption.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartialCiphertext<G: PrimeGroup> {
    pub c1: G::Element,
    pub c2: G::Element,
    _group: PhantomData<G>,
}

impl<G: PrimeGroup> Ciphertext<G> {
    pub fn from_parts(c1: G::Element, c2: G::Element) -> Self {
        Self { c1, c2, _group: PhantomData }
    }

    /// Serialized width in bytes.
    pub const LEN: usize = 2 * G::ELEMENT_LEN;

    pub fn write_to(&self, out: &mut [u8]) {
        G::encode_element(&self.c1, &mut out[..G::ELEMENT_LEN]);
        G::encode_element(&self.c2, &mut out[G::ELEMENT_LEN..Self::LEN]);
    }

    pub fn read_from(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != Self::LEN {
            return Err(Error::InvalidEncoding("ciphertext width"));
        }
        Ok(Self::from_parts(G::decode_element(&bytes[..G::ELEMENT_LEN])?, G::decode_element(&bytes[G::ELEMENT_LEN..])?))
    }
}

impl<G: PrimeGroup> PartialCiphertext<G> {
    pub fn from_parts(c1: G::Element, c2: G::Element) -> Self {
        Self { c1, c2, _group: PhantomData }
    }

    pub const LEN: usize = 2 * G::ELEMENT_LEN;

    pub fn write_to(&self, out: &mut [u8]) {
        G::encode_element(&self.c1, &mut out[..G::ELEMENT_LEN]);
        G::encode_element(&self.c2, &mut out[G::ELEMENT_LEN..Self::LEN]);
    }

    pub fn read_from(bytes: &[u8]) -> Result<Self> {
        let ct = Ciphertext::<G>::read_from(bytes)?;
        Ok(Self::from_parts(ct.c1, ct.c2))
    }
}

/// Encrypts `g^m` under `h` with fresh `r` in `[1, q-1]`.
pub fn encrypt<G: PrimeGroup, R: CryptoRng + ?Sized>(m: i64, pk: &PublicKey<G>, rng: &mut R) -> Ciphertext<G> {
    encrypt_scalar(&G::scalar_from_i64(m), pk, rng)
}

pub fn encrypt_scalar<G: PrimeGroup, R: CryptoRng + ?Sized>(
    m: &G::Scalar,
    pk: &PublicKey<G>,
    rng: &mut R,
) -> Ciphertext<G> {
    let r = G::random_nonzero_scalar(rng);
    let c1 = G::mul_generator(&r);
    let c2 = G::add(&G::mul_generator(m), &G::mul(&pk.point, &r));
    Ciphertext::from_parts(c1, c2)
}

/// Homomorphic addition of the encrypted exponents.
pub fn add<G: PrimeGroup>(a: &Ciphertext<G>, b: &Ciphertext<G>) -> Ciphertext<G> {
    Ciphertext::from_parts(G::add(&a.c1, &b.c1), G::add(&a.c2, &b.c2))
}

/// Multiplies the encrypted exponent by a nonzero scalar.
pub fn scalar_mul<G: PrimeGroup>(ct: &Ciphertext<G>, r: &G::Scalar) -> Result<Ciphertext<G>> {
    if G::scalar_is_zero(r) {
        return Err(Error::ZeroScalar);
    }
    Ok(Ciphertext::from_parts(G::mul(&ct.c1, r), G::mul(&ct.c2, r)))
}

/// `(c1, c1^{-a1} c2)`: strips the service share, leaving an ordinary
/// encryption of the same message under `g^{a2}`.
pub fn partial_decrypt<G: PrimeGroup>(ct: &Ciphertext<G>, share: &ServiceShare<G>) -> PartialCiphertext<G> {
    let mask = G::mul(&ct.c1, &G::scalar_neg(&share.scalar));
    PartialCiphertext::from_parts(ct.c1, G::add(&mask, &ct.c2))
}

/// `c1'^{-a2} c2'`, the message point `g^m`.
pub fn final_decrypt<G: PrimeGroup>(pct: &PartialCiphertext<G>, share: &SensorShare<G>) -> G::Element {
    G::add(&G::mul(&pct.c1, &G::scalar_neg(&share.scalar)), &pct.c2)
}

/// Single-key decryption with the full secret.
pub fn decrypt<G: PrimeGroup>(ct: &Ciphertext<G>, sk: &SecretKey<G>) -> G::Element {
    G::add(&G::mul(&ct.c1, &G::scalar_neg(&sk.scalar)), &ct.c2)
}

/// `m = 0` exactly when `g^m` is the identity.
pub fn is_zero<G: PrimeGroup>(point: &G::Element) -> bool {
    G::is_identity(point)
}

/// The point `g^m`, for checking decryptions.
pub fn message_point<G: PrimeGroup>(m: i64) -> G::Element {
    G::mul_generator(&G::scalar_from_i64(m))
}
