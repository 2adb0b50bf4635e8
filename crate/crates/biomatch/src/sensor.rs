//! Sensor side of enrollment and verification over any byte stream.

use std::io::{Read, Write};

use biomatch_core::elgamal::PublicKey;
use biomatch_core::protocol::{enroll, Message, SensorStep, SensorVerification, SystemParams, UserId};
use biomatch_core::PrimeGroup;
use rand::CryptoRng;

use crate::keyfile::SensorKey;
use crate::wire;
use crate::Error;

/// How a verification ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Accept,
    Reject,
    UnknownUser,
    Locked,
}

fn expect_reply<G: PrimeGroup, S: Read>(stream: &mut S) -> Result<Message<G>, Error> {
    match wire::read_message::<G, _>(stream)? {
        Some(Message::Malformed) => Err(Error::Protocol("service rejected the request".into())),
        Some(m) => Ok(m),
        None => Err(Error::Protocol("service closed the connection".into())),
    }
}

/// Builds the encrypted template locally and stores it at the service.
pub fn enroll_remote<G: PrimeGroup, S: Read + Write, R: CryptoRng + ?Sized>(
    stream: &mut S,
    params: &SystemParams,
    public: &PublicKey<G>,
    user: UserId,
    features: &[f64],
    rng: &mut R,
) -> Result<(), Error> {
    let template = enroll(features, user, params, public, rng)?;
    wire::write_message(stream, &Message::EnrollRequest(template))?;
    match expect_reply::<G, _>(stream)? {
        Message::EnrollAck => Ok(()),
        other => Err(Error::Protocol(format!("expected ENROLL_ACK, got {}", other.kind()))),
    }
}

/// Runs one verification to its verdict.
pub fn verify_remote<G: PrimeGroup, S: Read + Write, R: CryptoRng + ?Sized>(
    stream: &mut S,
    params: &SystemParams,
    key: &SensorKey<G>,
    user: UserId,
    probe: Vec<f64>,
    rng: &mut R,
) -> Result<Outcome, Error> {
    let mut session = SensorVerification::new(params, &key.public, &key.share, user, probe)?;
    wire::write_message(stream, &session.start()?)?;
    loop {
        let reply = expect_reply::<G, _>(stream)?;
        match session.on_message(reply, rng)? {
            SensorStep::Send(msg) => wire::write_message(stream, &msg)?,
            SensorStep::Verdict(true) => return Ok(Outcome::Accept),
            SensorStep::Verdict(false) => return Ok(Outcome::Reject),
            SensorStep::UnknownUser => return Ok(Outcome::UnknownUser),
            SensorStep::Locked => return Ok(Outcome::Locked),
        }
    }
}
