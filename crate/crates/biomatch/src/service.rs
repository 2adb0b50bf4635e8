//! The verification service: a TCP listener running one protocol session per
//! connection against a shared template store.
//!
//! The service holds only its own key share. It never sees features, scores
//! or verdicts, so the attempt limit counts verification attempts per user
//! rather than failures; a fresh enrollment resets the count.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};

use biomatch_core::protocol::{Message, ServiceSession, SessionError, SystemParams, UserId};
use biomatch_core::PrimeGroup;
use log::{info, warn};

use crate::keyfile::ServiceKey;
use crate::store::FileStore;
use crate::wire;
use crate::Error;

/// Per-user verification attempt counter.
#[derive(Debug, Default)]
pub struct AttemptLimit {
    limit: Option<u32>,
    attempts: Mutex<HashMap<UserId, u32>>,
}

impl AttemptLimit {
    /// `None` or `Some(0)` disables the limit.
    pub fn new(limit: Option<u32>) -> Self {
        Self { limit: limit.filter(|&n| n > 0), attempts: Mutex::new(HashMap::new()) }
    }

    /// Records an attempt; `false` when the user is locked out.
    pub fn admit(&self, user: &UserId) -> bool {
        let Some(limit) = self.limit else { return true };
        let mut attempts = self.attempts.lock().expect("attempt table");
        let n = attempts.entry(user.clone()).or_insert(0);
        if *n >= limit {
            return false;
        }
        *n += 1;
        true
    }

    pub fn reset(&self, user: &UserId) {
        self.attempts.lock().expect("attempt table").remove(user);
    }
}

pub struct Service<G: PrimeGroup> {
    params: SystemParams,
    key: ServiceKey<G>,
    store: FileStore<G>,
    limit: AttemptLimit,
}

impl<G: PrimeGroup> Service<G> {
    pub fn new(
        params: SystemParams,
        key: ServiceKey<G>,
        store: FileStore<G>,
        limit: AttemptLimit,
    ) -> Result<Self, Error> {
        if params.config().group != G::ID {
            return Err(Error::Config("configuration names a different group than the key share".into()));
        }
        Ok(Self { params, key, store, limit })
    }

    pub fn store(&self) -> &FileStore<G> {
        &self.store
    }

    /// Runs one session until the peer disconnects or a framing error.
    pub fn handle_connection<S: Read + Write>(&self, stream: &mut S) -> Result<(), Error> {
        let mut session = ServiceSession::new(&self.params, &self.key.public, &self.key.share);
        let mut rng = rand::rng();
        loop {
            let msg = match wire::read_message::<G, _>(stream) {
                Ok(Some(m)) => m,
                Ok(None) => return Ok(()),
                Err(Error::Format(why)) => {
                    warn!("malformed frame: {why}");
                    wire::write_message::<G, _>(stream, &Message::Malformed)?;
                    return Ok(());
                }
                Err(e) => return Err(e),
            };
            let enrolling = match &msg {
                Message::VerifyClaim(user) if !self.limit.admit(user) => {
                    info!("attempt limit reached for a user; refusing");
                    wire::write_message::<G, _>(stream, &Message::Locked)?;
                    continue;
                }
                Message::EnrollRequest(t) => Some(t.user().clone()),
                _ => None,
            };
            let kind = msg.kind();
            let reply = match session.handle(msg, &self.store, &mut rng) {
                Ok(r) => r,
                Err(SessionError::Protocol(e)) => {
                    warn!("rejecting {kind}: {e}");
                    wire::write_message::<G, _>(stream, &Message::Malformed)?;
                    return Ok(());
                }
                Err(SessionError::Store(e)) => return Err(e),
            };
            if let (Some(user), Message::EnrollAck) = (&enrolling, &reply.message) {
                self.limit.reset(user);
            }
            info!("{kind} -> {}", reply.message.kind());
            wire::write_message(stream, &reply.message)?;
            if reply.close {
                return Ok(());
            }
        }
    }

    /// Accepts connections forever, one thread per session.
    pub fn serve(self: Arc<Self>, listener: TcpListener) -> Result<(), Error> {
        for conn in listener.incoming() {
            let mut stream: TcpStream = match conn {
                Ok(s) => s,
                Err(e) => {
                    warn!("accept failed: {e}");
                    continue;
                }
            };
            let service = self.clone();
            std::thread::spawn(move || {
                let peer = stream.peer_addr().ok();
                if let Err(e) = service.handle_connection(&mut stream) {
                    warn!("session with {peer:?} ended with an error: {e}");
                }
            });
        }
        Ok(())
    }
}
