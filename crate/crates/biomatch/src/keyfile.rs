//! Binary key files.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "BMKY"
//! 4       1           version (1)
//! 5       1           kind: 1 public key, 2 service share, 3 sensor share
//! 6       1           group code: 1 ristretto255, 2 secp112r1
//! 7       SCALAR_LEN  share scalar, big-endian (share files only)
//! ..      ELEMENT_LEN public key, compressed point
//! ```
//!
//! Scalar and point widths are fixed by the group: 32/32 bytes for
//! ristretto255, 14/15 bytes for secp112r1.

use std::path::Path;

use biomatch_core::elgamal::{PublicKey, SensorShare, ServiceShare};
use biomatch_core::{GroupId, PrimeGroup};

use crate::Error;

const MAGIC: &[u8; 4] = b"BMKY";
const VERSION: u8 = 1;
const HEADER: usize = 7;

/// What a key file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyKind {
    Public = 1,
    ServiceShare = 2,
    SensorShare = 3,
}

impl KeyKind {
    fn from_byte(b: u8) -> Result<Self, Error> {
        match b {
            1 => Ok(KeyKind::Public),
            2 => Ok(KeyKind::ServiceShare),
            3 => Ok(KeyKind::SensorShare),
            _ => Err(Error::Format(format!("unknown key kind {b}"))),
        }
    }
}

/// The service's key material: its share and the joint public key.
#[derive(Debug, Clone)]
pub struct ServiceKey<G: PrimeGroup> {
    pub public: PublicKey<G>,
    pub share: ServiceShare<G>,
}

/// The sensor's key material: its share and the joint public key.
#[derive(Debug, Clone)]
pub struct SensorKey<G: PrimeGroup> {
    pub public: PublicKey<G>,
    pub share: SensorShare<G>,
}

fn encode<G: PrimeGroup>(kind: KeyKind, scalar: Option<&G::Scalar>, public: &PublicKey<G>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + G::SCALAR_LEN + G::ELEMENT_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[VERSION, kind as u8, G::ID.code()]);
    if let Some(s) = scalar {
        let mut buf = vec![0u8; G::SCALAR_LEN];
        G::encode_scalar(s, &mut buf);
        out.extend_from_slice(&buf);
    }
    let mut buf = vec![0u8; G::ELEMENT_LEN];
    G::encode_element(&public.point, &mut buf);
    out.extend_from_slice(&buf);
    out
}

pub fn encode_public<G: PrimeGroup>(public: &PublicKey<G>) -> Vec<u8> {
    encode::<G>(KeyKind::Public, None, public)
}

pub fn encode_service<G: PrimeGroup>(key: &ServiceKey<G>) -> Vec<u8> {
    encode(KeyKind::ServiceShare, Some(key.share.scalar()), &key.public)
}

pub fn encode_sensor<G: PrimeGroup>(key: &SensorKey<G>) -> Vec<u8> {
    encode(KeyKind::SensorShare, Some(key.share.scalar()), &key.public)
}

/// Reads the header: kind and group.
pub fn peek(bytes: &[u8]) -> Result<(KeyKind, GroupId), Error> {
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(Error::Format("not a biomatch key file".into()));
    }
    if bytes[4] != VERSION {
        return Err(Error::Format(format!("unsupported key file version {}", bytes[4])));
    }
    Ok((KeyKind::from_byte(bytes[5])?, GroupId::from_code(bytes[6])?))
}

struct Decoded<G: PrimeGroup> {
    kind: KeyKind,
    scalar: Option<G::Scalar>,
    public: PublicKey<G>,
}

fn decode<G: PrimeGroup>(bytes: &[u8]) -> Result<Decoded<G>, Error> {
    let (kind, group) = peek(bytes)?;
    if group != G::ID {
        return Err(Error::Config(format!("key file is for {group}, configuration uses {}", G::ID)));
    }
    let scalar_len = if kind == KeyKind::Public { 0 } else { G::SCALAR_LEN };
    if bytes.len() != HEADER + scalar_len + G::ELEMENT_LEN {
        return Err(Error::Format("key file has the wrong length".into()));
    }
    let scalar = match kind {
        KeyKind::Public => None,
        _ => Some(G::decode_scalar(&bytes[HEADER..HEADER + scalar_len])?),
    };
    let point = G::decode_element(&bytes[HEADER + scalar_len..])?;
    if G::is_identity(&point) {
        return Err(Error::Format("public key is the identity".into()));
    }
    Ok(Decoded { kind, scalar, public: PublicKey { point } })
}

/// Public key from any key file.
pub fn decode_public<G: PrimeGroup>(bytes: &[u8]) -> Result<PublicKey<G>, Error> {
    Ok(decode::<G>(bytes)?.public)
}

pub fn decode_service<G: PrimeGroup>(bytes: &[u8]) -> Result<ServiceKey<G>, Error> {
    let d = decode::<G>(bytes)?;
    match (d.kind, d.scalar) {
        (KeyKind::ServiceShare, Some(s)) => Ok(ServiceKey { public: d.public, share: ServiceShare::from_scalar(s) }),
        _ => Err(Error::Config("expected a service key share file".into())),
    }
}

pub fn decode_sensor<G: PrimeGroup>(bytes: &[u8]) -> Result<SensorKey<G>, Error> {
    let d = decode::<G>(bytes)?;
    match (d.kind, d.scalar) {
        (KeyKind::SensorShare, Some(s)) => Ok(SensorKey { public: d.public, share: SensorShare::from_scalar(s) }),
        _ => Err(Error::Config("expected a sensor key share file".into())),
    }
}

/// Writes a file readable only by its owner where the platform allows.
pub fn write_private(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    #[cfg(unix)]
    {
        use std::io::Write;
        use std::os::unix::fs::OpenOptionsExt;
        let mut f = std::fs::OpenOptions::new().write(true).create(true).truncate(true).mode(0o600).open(path)?;
        f.write_all(bytes)?;
        Ok(())
    }
    #[cfg(not(unix))]
    {
        std::fs::write(path, bytes)?;
        Ok(())
    }
}
