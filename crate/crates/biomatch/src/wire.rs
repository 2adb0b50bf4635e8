//! Framing of protocol messages on a byte stream.
//!
//! ```text
//! 0x42 0x4D | version 0x01 | type u8 | length u32 BE | payload
//! ```
//!
//! | type | message      | payload                                          |
//! |------|--------------|--------------------------------------------------|
//! | 0x01 | ENROLL_REQ   | template                                         |
//! | 0x02 | ENROLL_ACK   | empty                                            |
//! | 0x03 | VERIFY_CLAIM | user id                                          |
//! | 0x04 | TEMPLATE     | template                                         |
//! | 0x05 | SCORE        | ciphertext                                       |
//! | 0x06 | RESULTSET    | count u32 BE, then `count` partial ciphertexts   |
//! | 0x07 | UNKNOWN_USER | empty                                            |
//! | 0x08 | LOCKED       | empty                                            |
//! | 0x7F | MALFORMED    | empty                                            |
//!
//! A user id is a length byte (1..=255) followed by UTF-8. A template is a
//! user id, `k` as u16 BE, `b` as u8, then `k * 2^b` ciphertexts row-major.
//! A ciphertext is two compressed points of the group's fixed width.

use std::io::{self, Read, Write};

use biomatch_core::elgamal::{Ciphertext, PartialCiphertext};
use biomatch_core::protocol::{CompareSet, Message, SecureTemplate, UserId};
use biomatch_core::quantization::MAX_BITS;
use biomatch_core::PrimeGroup;

use crate::Error;

pub const MAGIC: [u8; 2] = [0x42, 0x4D];
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 8;
/// Frames above this size are refused before any allocation.
pub const MAX_PAYLOAD: usize = 64 << 20;

pub mod tag {
    pub const ENROLL_REQ: u8 = 0x01;
    pub const ENROLL_ACK: u8 = 0x02;
    pub const VERIFY_CLAIM: u8 = 0x03;
    pub const TEMPLATE: u8 = 0x04;
    pub const SCORE: u8 = 0x05;
    pub const RESULTSET: u8 = 0x06;
    pub const UNKNOWN_USER: u8 = 0x07;
    pub const LOCKED: u8 = 0x08;
    pub const MALFORMED: u8 = 0x7F;
}

pub fn message_tag<G: PrimeGroup>(msg: &Message<G>) -> u8 {
    match msg {
        Message::EnrollRequest(_) => tag::ENROLL_REQ,
        Message::EnrollAck => tag::ENROLL_ACK,
        Message::VerifyClaim(_) => tag::VERIFY_CLAIM,
        Message::Template(_) => tag::TEMPLATE,
        Message::Score(_) => tag::SCORE,
        Message::ResultSet(_) => tag::RESULTSET,
        Message::UnknownUser => tag::UNKNOWN_USER,
        Message::Locked => tag::LOCKED,
        Message::Malformed => tag::MALFORMED,
    }
}

fn put_user(out: &mut Vec<u8>, user: &UserId) {
    out.push(user.as_str().len() as u8);
    out.extend_from_slice(user.as_str().as_bytes());
}

fn put_ciphertext<G: PrimeGroup>(out: &mut Vec<u8>, ct: &Ciphertext<G>) {
    let start = out.len();
    out.resize(start + Ciphertext::<G>::LEN, 0);
    ct.write_to(&mut out[start..]);
}

/// Template encoding shared by the wire and the template store.
pub fn encode_template<G: PrimeGroup>(t: &SecureTemplate<G>, out: &mut Vec<u8>) {
    put_user(out, t.user());
    out.extend_from_slice(&(t.feature_count() as u16).to_be_bytes());
    out.push(t.bits());
    for ct in t.cells() {
        put_ciphertext(out, ct);
    }
}

pub fn encode_payload<G: PrimeGroup>(msg: &Message<G>) -> Vec<u8> {
    let mut out = Vec::new();
    match msg {
        Message::EnrollRequest(t) | Message::Template(t) => encode_template(t, &mut out),
        Message::VerifyClaim(u) => put_user(&mut out, u),
        Message::Score(ct) => put_ciphertext(&mut out, ct),
        Message::ResultSet(set) => {
            out.extend_from_slice(&(set.elements.len() as u32).to_be_bytes());
            for pct in &set.elements {
                let start = out.len();
                out.resize(start + PartialCiphertext::<G>::LEN, 0);
                pct.write_to(&mut out[start..]);
            }
        }
        Message::EnrollAck | Message::UnknownUser | Message::Locked | Message::Malformed => {}
    }
    out
}

/// Full frame: header plus payload.
pub fn encode<G: PrimeGroup>(msg: &Message<G>) -> Vec<u8> {
    let payload = encode_payload(msg);
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(message_tag(msg));
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&payload);
    out
}

/// Cursor over a payload that fails instead of panicking.
struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], Error> {
        if self.bytes.len() < n {
            return Err(Error::Format("payload truncated".into()));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, Error> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, Error> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, Error> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn user(&mut self) -> Result<UserId, Error> {
        let len = self.u8()? as usize;
        let raw = self.take(len)?;
        let s = std::str::from_utf8(raw).map_err(|_| Error::Format("user id is not UTF-8".into()))?;
        Ok(UserId::new(s)?)
    }

    fn finish(&self) -> Result<(), Error> {
        if self.bytes.is_empty() {
            Ok(())
        } else {
            Err(Error::Format("trailing bytes after payload".into()))
        }
    }
}

fn read_template<G: PrimeGroup>(r: &mut Reader<'_>) -> Result<SecureTemplate<G>, Error> {
    let user = r.user()?;
    let k = r.u16()? as usize;
    let bits = r.u8()?;
    if k == 0 || bits == 0 || bits > MAX_BITS {
        return Err(Error::Format("template dimensions out of range".into()));
    }
    let cells = k << bits;
    if r.bytes.len() != cells * Ciphertext::<G>::LEN {
        return Err(Error::Format("template body length".into()));
    }
    let cts = (0..cells)
        .map(|_| Ok(Ciphertext::<G>::read_from(r.take(Ciphertext::<G>::LEN)?)?))
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(SecureTemplate::from_parts(user, k, bits, cts)?)
}

pub fn decode_template<G: PrimeGroup>(bytes: &[u8]) -> Result<SecureTemplate<G>, Error> {
    let mut r = Reader { bytes };
    let t = read_template(&mut r)?;
    r.finish()?;
    Ok(t)
}

pub fn decode_payload<G: PrimeGroup>(tag: u8, payload: &[u8]) -> Result<Message<G>, Error> {
    let mut r = Reader { bytes: payload };
    let msg = match tag {
        tag::ENROLL_REQ => Message::EnrollRequest(read_template(&mut r)?),
        tag::ENROLL_ACK => Message::EnrollAck,
        tag::VERIFY_CLAIM => Message::VerifyClaim(r.user()?),
        tag::TEMPLATE => Message::Template(read_template(&mut r)?),
        tag::SCORE => Message::Score(Ciphertext::read_from(r.take(Ciphertext::<G>::LEN)?)?),
        tag::RESULTSET => {
            let n = r.u32()? as usize;
            if r.bytes.len() != n.saturating_mul(PartialCiphertext::<G>::LEN) {
                return Err(Error::Format("result set length".into()));
            }
            let elements = (0..n)
                .map(|_| Ok(PartialCiphertext::read_from(r.take(PartialCiphertext::<G>::LEN)?)?))
                .collect::<Result<Vec<_>, Error>>()?;
            Message::ResultSet(CompareSet { elements })
        }
        tag::UNKNOWN_USER => Message::UnknownUser,
        tag::LOCKED => Message::Locked,
        tag::MALFORMED => Message::Malformed,
        other => return Err(Error::Format(format!("unknown message type 0x{other:02x}"))),
    };
    r.finish()?;
    Ok(msg)
}

/// Parses exactly one frame.
pub fn decode<G: PrimeGroup>(frame: &[u8]) -> Result<Message<G>, Error> {
    let (tag, len) = parse_header(frame.get(..HEADER_LEN).ok_or_else(|| Error::Format("short frame".into()))?)?;
    if frame.len() != HEADER_LEN + len {
        return Err(Error::Format("frame length does not match header".into()));
    }
    decode_payload(tag, &frame[HEADER_LEN..])
}

fn parse_header(h: &[u8]) -> Result<(u8, usize), Error> {
    if h[..2] != MAGIC {
        return Err(Error::Format("bad frame magic".into()));
    }
    if h[2] != VERSION {
        return Err(Error::Format(format!("unsupported frame version {}", h[2])));
    }
    let len = u32::from_be_bytes(h[4..8].try_into().expect("4 bytes")) as usize;
    if len > MAX_PAYLOAD {
        return Err(Error::Format("frame too large".into()));
    }
    Ok((h[3], len))
}

/// A raw frame: type tag and payload bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub tag: u8,
    pub payload: Vec<u8>,
}

/// Reads one frame. `Ok(None)` on a clean end of stream before a header.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Frame>, Error> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::Format("stream ended inside a frame header".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let (tag, len) = parse_header(&header)?;
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Format("stream ended inside a frame payload".into()),
        _ => e.into(),
    })?;
    Ok(Some(Frame { tag, payload }))
}

pub fn read_message<G: PrimeGroup, R: Read>(r: &mut R) -> Result<Option<Message<G>>, Error> {
    match read_frame(r)? {
        Some(f) => Ok(Some(decode_payload(f.tag, &f.payload)?)),
        None => Ok(None),
    }
}

pub fn write_message<G: PrimeGroup, W: Write>(w: &mut W, msg: &Message<G>) -> Result<(), Error> {
    w.write_all(&encode(msg))?;
    w.flush()?;
    Ok(())
}
