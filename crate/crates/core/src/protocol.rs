//! Enrollment and two-round verification between a sensor and a
//! verification service.
//!
//! Enrollment: the sensor quantizes the enrollment capture, selects row
//! `x_i` of each feature's lookup table and sends the element-wise
//! encryption of those rows.
//!
//! Verification, round one: the sensor claims an identity, receives the
//! encrypted template, picks column `y_i` of each row for its probe and
//! returns the homomorphic sum plus a fresh encryption of zero.
//!
//! Round two: the service blinds `S - t - i` for `i = 0..=max(𝕊) - t` with
//! independent random scalars, partially decrypts, shuffles and replies. The
//! sensor finishes decryption and accepts iff one element is the identity,
//! i.e. iff `S >= t`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand_core::CryptoRng;

use crate::elgamal::{self, Ciphertext, PartialCiphertext, PublicKey, SensorShare, ServiceShare};
use crate::error::{Error, Result};
use crate::group::{GroupId, PrimeGroup};
use crate::quantization::{
    build_table_with_bins, convolve, make_bins, quantize_feature, table_score_distribution, BinScheme, LookupTable,
    ScoreDistribution,
};

/// Opaque user identity; UTF-8, 1 to 255 bytes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserId(String);

impl UserId {
    pub const MAX_LEN: usize = 255;

    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() || id.len() > Self::MAX_LEN {
            return Err(Error::Domain("user id must be 1..=255 bytes"));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Parameters both parties agree on.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub group: GroupId,
    pub bits: u8,
    pub delta: f64,
    pub rhos: Vec<f64>,
    pub threshold: i64,
}

impl SystemConfig {
    pub fn feature_count(&self) -> usize {
        self.rhos.len()
    }
}

/// A configuration together with its lookup tables and score domain.
#[derive(Debug, Clone)]
pub struct SystemParams {
    config: SystemConfig,
    bins: BinScheme,
    tables: Vec<LookupTable>,
    score_min: i64,
    score_max: i64,
}

impl SystemParams {
    /// Builds the tables for every feature. Features sharing a `rho` share
    /// one computation.
    pub fn new(config: SystemConfig) -> Result<Self> {
        if config.rhos.is_empty() {
            return Err(Error::Config("at least one feature is required"));
        }
        let bins = make_bins(config.bits)?;
        let mut built: Vec<LookupTable> = Vec::new();
        let mut tables = Vec::with_capacity(config.rhos.len());
        for &rho in &config.rhos {
            let table = match built.iter().find(|t| t.rho().to_bits() == rho.to_bits()) {
                Some(t) => t.clone(),
                None => {
                    let t = build_table_with_bins(&bins, rho, config.delta)?;
                    built.push(t.clone());
                    t
                }
            };
            tables.push(table);
        }
        Self::with_tables(config, tables)
    }

    /// Uses caller-supplied tables; they must match the configured bits.
    pub fn with_tables(config: SystemConfig, tables: Vec<LookupTable>) -> Result<Self> {
        if tables.len() != config.rhos.len() {
            return Err(Error::LengthMismatch { expected: config.rhos.len(), actual: tables.len() });
        }
        if tables.iter().any(|t| t.bits() != config.bits) {
            return Err(Error::Config("table bits disagree with configuration"));
        }
        let bins = make_bins(config.bits)?;
        let dist = total_distribution(&tables)?;
        let (score_min, score_max) = (dist.min(), dist.max());
        if config.threshold < score_min || config.threshold > score_max {
            return Err(Error::Config("threshold outside the score domain"));
        }
        Ok(Self { config, bins, tables, score_min, score_max })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn bins(&self) -> &BinScheme {
        &self.bins
    }

    pub fn tables(&self) -> &[LookupTable] {
        &self.tables
    }

    pub fn feature_count(&self) -> usize {
        self.tables.len()
    }

    pub fn row_len(&self) -> usize {
        self.bins.bin_count()
    }

    pub fn threshold(&self) -> i64 {
        self.config.threshold
    }

    pub fn score_min(&self) -> i64 {
        self.score_min
    }

    pub fn score_max(&self) -> i64 {
        self.score_max
    }

    /// `α = max(𝕊) - t`; the compare set has `α + 1` elements.
    pub fn alpha(&self) -> u64 {
        (self.score_max - self.config.threshold) as u64
    }

    /// Same tables, different threshold.
    pub fn with_threshold(&self, threshold: i64) -> Result<Self> {
        if threshold < self.score_min || threshold > self.score_max {
            return Err(Error::Config("threshold outside the score domain"));
        }
        let mut next = self.clone();
        next.config.threshold = threshold;
        Ok(next)
    }

    /// Bin index of every feature.
    pub fn quantize(&self, features: &[f64]) -> Result<Vec<usize>> {
        if features.len() != self.feature_count() {
            return Err(Error::LengthMismatch { expected: self.feature_count(), actual: features.len() });
        }
        features.iter().map(|&x| quantize_feature(x, &self.bins)).collect()
    }

    /// Plaintext comparator over bin indices: `Σ T_i[x_i][y_i]`.
    pub fn plaintext_score(&self, enrolled: &[usize], probe: &[usize]) -> Result<i64> {
        if enrolled.len() != self.feature_count() || probe.len() != self.feature_count() {
            return Err(Error::LengthMismatch { expected: self.feature_count(), actual: probe.len() });
        }
        Ok(self.tables.iter().zip(enrolled.iter().zip(probe)).map(|(t, (&x, &y))| t.get(x, y) as i64).sum())
    }

    /// Plaintext comparator over raw features.
    pub fn plaintext_score_features(&self, enrolled: &[f64], probe: &[f64]) -> Result<i64> {
        self.plaintext_score(&self.quantize(enrolled)?, &self.quantize(probe)?)
    }
}

/// Distribution of the summed score under the impostor model.
pub fn total_distribution(tables: &[LookupTable]) -> Result<ScoreDistribution> {
    let dists: Vec<ScoreDistribution> = tables.iter().map(table_score_distribution).collect();
    convolve(&dists)
}

/// `k × 2^b` matrix of ciphertexts; row `i` encrypts row `x_i` of table `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecureTemplate<G: PrimeGroup> {
    user: UserId,
    features: usize,
    bits: u8,
    cells: Vec<Ciphertext<G>>,
}

impl<G: PrimeGroup> SecureTemplate<G> {
    pub fn from_parts(user: UserId, features: usize, bits: u8, cells: Vec<Ciphertext<G>>) -> Result<Self> {
        if bits == 0 || bits > crate::quantization::MAX_BITS {
            return Err(Error::BitsOutOfRange(bits));
        }
        let expected = features << bits;
        if features == 0 || cells.len() != expected {
            return Err(Error::LengthMismatch { expected, actual: cells.len() });
        }
        Ok(Self { user, features, bits, cells })
    }

    pub fn user(&self) -> &UserId {
        &self.user
    }

    pub fn feature_count(&self) -> usize {
        self.features
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn row_len(&self) -> usize {
        1 << self.bits
    }

    pub fn row(&self, feature: usize) -> &[Ciphertext<G>] {
        let n = self.row_len();
        &self.cells[feature * n..(feature + 1) * n]
    }

    pub fn cells(&self) -> &[Ciphertext<G>] {
        &self.cells
    }

    fn check_against(&self, params: &SystemParams) -> Result<()> {
        if self.features != params.feature_count() || self.bits != params.config.bits {
            return Err(Error::Config("template dimensions disagree with configuration"));
        }
        Ok(())
    }
}

/// The shuffled, blinded, partially decrypted values `r_i (S - t - i)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompareSet<G: PrimeGroup> {
    pub elements: Vec<PartialCiphertext<G>>,
}

/// Builds the encrypted template from an enrollment capture.
pub fn enroll<G: PrimeGroup, R: CryptoRng + ?Sized>(
    features: &[f64],
    user: UserId,
    params: &SystemParams,
    pk: &PublicKey<G>,
    rng: &mut R,
) -> Result<SecureTemplate<G>> {
    if params.config.group != G::ID {
        return Err(Error::Config("configuration names a different group"));
    }
    let bins = params.quantize(features)?;
    let mut cells = Vec::with_capacity(params.feature_count() * params.row_len());
    for (table, &x) in params.tables.iter().zip(&bins) {
        for &score in table.row(x) {
            cells.push(elgamal::encrypt(score as i64, pk, rng));
        }
    }
    SecureTemplate::from_parts(user, params.feature_count(), params.config.bits, cells)
}

/// Oblivious lookup and randomized sum on the sensor.
pub fn sensor_lookup_and_sum<G: PrimeGroup, R: CryptoRng + ?Sized>(
    probe: &[f64],
    template: &SecureTemplate<G>,
    params: &SystemParams,
    pk: &PublicKey<G>,
    rng: &mut R,
) -> Result<Ciphertext<G>> {
    template.check_against(params)?;
    let bins = params.quantize(probe)?;
    let mut acc = elgamal::encrypt(0, pk, rng);
    for (i, &y) in bins.iter().enumerate() {
        acc = elgamal::add(&acc, &template.row(i)[y]);
    }
    Ok(acc)
}

/// Uniform integer in `[0, n)` by rejection sampling.
fn uniform_below<R: CryptoRng + ?Sized>(rng: &mut R, n: u64) -> u64 {
    let zone = u64::MAX - u64::MAX % n;
    loop {
        let v = rng.next_u64();
        if v < zone {
            return v % n;
        }
    }
}

/// Fisher-Yates shuffle.
pub fn shuffle<T, R: CryptoRng + ?Sized>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = uniform_below(rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

/// Service side of the matching round.
pub fn service_compare<G: PrimeGroup, R: CryptoRng + ?Sized>(
    score: &Ciphertext<G>,
    params: &SystemParams,
    pk: &PublicKey<G>,
    share: &ServiceShare<G>,
    rng: &mut R,
) -> Result<CompareSet<G>> {
    let t = params.threshold();
    let mut elements = Vec::with_capacity(params.alpha() as usize + 1);
    for i in 0..=params.alpha() as i64 {
        let shifted = elgamal::add(score, &elgamal::encrypt(-t - i, pk, rng));
        let blind = G::random_nonzero_scalar(rng);
        let blinded = elgamal::scalar_mul(&shifted, &blind)?;
        elements.push(elgamal::partial_decrypt(&blinded, share));
    }
    shuffle(&mut elements, rng);
    Ok(CompareSet { elements })
}

/// Number of compare-set elements that decrypt to the identity.
pub fn count_zeros<G: PrimeGroup>(set: &CompareSet<G>, share: &SensorShare<G>) -> usize {
    set.elements.iter().filter(|pct| elgamal::is_zero::<G>(&elgamal::final_decrypt(pct, share))).count()
}

/// Accept iff some element decrypts to zero. More than one zero cannot happen
/// in an honest run and is reported as a protocol violation.
pub fn sensor_decide<G: PrimeGroup>(set: &CompareSet<G>, share: &SensorShare<G>) -> Result<bool> {
    if set.elements.is_empty() {
        return Err(Error::Protocol("empty compare set"));
    }
    match count_zeros(set, share) {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(Error::Protocol("compare set holds more than one zero")),
    }
}

/// Messages exchanged between sensor and service.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message<G: PrimeGroup> {
    EnrollRequest(SecureTemplate<G>),
    EnrollAck,
    VerifyClaim(UserId),
    Template(SecureTemplate<G>),
    Score(Ciphertext<G>),
    ResultSet(CompareSet<G>),
    UnknownUser,
    Locked,
    Malformed,
}

impl<G: PrimeGroup> Message<G> {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::EnrollRequest(_) => "ENROLL_REQ",
            Message::EnrollAck => "ENROLL_ACK",
            Message::VerifyClaim(_) => "VERIFY_CLAIM",
            Message::Template(_) => "TEMPLATE",
            Message::Score(_) => "SCORE",
            Message::ResultSet(_) => "RESULTSET",
            Message::UnknownUser => "UNKNOWN_USER",
            Message::Locked => "LOCKED",
            Message::Malformed => "MALFORMED",
        }
    }
}

/// Where the service keeps encrypted templates.
pub trait TemplateSource<G: PrimeGroup> {
    type Error;

    fn fetch(&self, user: &UserId) -> core::result::Result<Option<SecureTemplate<G>>, Self::Error>;
    fn put(&self, template: &SecureTemplate<G>) -> core::result::Result<(), Self::Error>;
}

/// In-memory template store.
#[derive(Debug, Default)]
pub struct MemoryStore<G: PrimeGroup> {
    inner: core::cell::RefCell<BTreeMap<UserId, SecureTemplate<G>>>,
}

impl<G: PrimeGroup> MemoryStore<G> {
    pub fn new() -> Self {
        Self { inner: core::cell::RefCell::new(BTreeMap::new()) }
    }
}

impl<G: PrimeGroup> TemplateSource<G> for MemoryStore<G> {
    type Error = core::convert::Infallible;

    fn fetch(&self, user: &UserId) -> core::result::Result<Option<SecureTemplate<G>>, Self::Error> {
        Ok(self.inner.borrow().get(user).cloned())
    }

    fn put(&self, template: &SecureTemplate<G>) -> core::result::Result<(), Self::Error> {
        self.inner.borrow_mut().insert(template.user().clone(), template.clone());
        Ok(())
    }
}

#[derive(Debug, PartialEq, Eq)]
pub enum SessionError<E> {
    Protocol(Error),
    Store(E),
}

impl<E> From<Error> for SessionError<E> {
    fn from(e: Error) -> Self {
        SessionError::Protocol(e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum ServiceState {
    Idle,
    AwaitScore(UserId),
}

/// What the service does with one incoming message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceReply<G: PrimeGroup> {
    pub message: Message<G>,
    /// The session must be closed after sending the reply.
    pub close: bool,
}

/// Verification-service session. Holds only the service key share.
pub struct ServiceSession<'a, G: PrimeGroup> {
    params: &'a SystemParams,
    pk: &'a PublicKey<G>,
    share: &'a ServiceShare<G>,
    state: ServiceState,
}

impl<'a, G: PrimeGroup> ServiceSession<'a, G> {
    pub fn new(params: &'a SystemParams, pk: &'a PublicKey<G>, share: &'a ServiceShare<G>) -> Self {
        Self { params, pk, share, state: ServiceState::Idle }
    }

    /// User whose score the session is waiting for, if any.
    pub fn pending_user(&self) -> Option<&UserId> {
        match &self.state {
            ServiceState::AwaitScore(u) => Some(u),
            ServiceState::Idle => None,
        }
    }

    pub fn handle<S: TemplateSource<G>, R: CryptoRng + ?Sized>(
        &mut self,
        msg: Message<G>,
        store: &S,
        rng: &mut R,
    ) -> core::result::Result<ServiceReply<G>, SessionError<S::Error>> {
        let reply = |message| ServiceReply { message, close: false };
        match (core::mem::replace(&mut self.state, ServiceState::Idle), msg) {
            (ServiceState::Idle, Message::EnrollRequest(template)) => {
                template.check_against(self.params)?;
                store.put(&template).map_err(SessionError::Store)?;
                Ok(reply(Message::EnrollAck))
            }
            (ServiceState::Idle, Message::VerifyClaim(user)) => {
                match store.fetch(&user).map_err(SessionError::Store)? {
                    Some(template) => {
                        self.state = ServiceState::AwaitScore(user);
                        Ok(reply(Message::Template(template)))
                    }
                    None => Ok(reply(Message::UnknownUser)),
                }
            }
            (ServiceState::AwaitScore(_), Message::Score(score)) => {
                let set = service_compare(&score, self.params, self.pk, self.share, rng)?;
                Ok(reply(Message::ResultSet(set)))
            }
            _ => Ok(ServiceReply { message: Message::Malformed, close: true }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum SensorState {
    Start,
    AwaitTemplate,
    AwaitResult,
    Done,
}

/// What the sensor does next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SensorStep<G: PrimeGroup> {
    Send(Message<G>),
    Verdict(bool),
    UnknownUser,
    Locked,
}

/// Sensor side of one verification. Holds only the sensor key share.
pub struct SensorVerification<'a, G: PrimeGroup> {
    params: &'a SystemParams,
    pk: &'a PublicKey<G>,
    share: &'a SensorShare<G>,
    user: UserId,
    probe: Vec<f64>,
    state: SensorState,
}

impl<'a, G: PrimeGroup> SensorVerification<'a, G> {
    pub fn new(
        params: &'a SystemParams,
        pk: &'a PublicKey<G>,
        share: &'a SensorShare<G>,
        user: UserId,
        probe: Vec<f64>,
    ) -> Result<Self> {
        if probe.len() != params.feature_count() {
            return Err(Error::LengthMismatch { expected: params.feature_count(), actual: probe.len() });
        }
        Ok(Self { params, pk, share, user, probe, state: SensorState::Start })
    }

    /// First message: the identity claim.
    pub fn start(&mut self) -> Result<Message<G>> {
        if self.state != SensorState::Start {
            return Err(Error::Protocol("session already started"));
        }
        self.state = SensorState::AwaitTemplate;
        Ok(Message::VerifyClaim(self.user.clone()))
    }

    pub fn on_message<R: CryptoRng + ?Sized>(&mut self, msg: Message<G>, rng: &mut R) -> Result<SensorStep<G>> {
        match (&self.state, msg) {
            (SensorState::AwaitTemplate, Message::Template(template)) => {
                if template.user() != &self.user {
                    return Err(Error::Protocol("template for a different user"));
                }
                let score = sensor_lookup_and_sum(&self.probe, &template, self.params, self.pk, rng)?;
                self.state = SensorState::AwaitResult;
                Ok(SensorStep::Send(Message::Score(score)))
            }
            (SensorState::AwaitTemplate, Message::UnknownUser) => {
                self.state = SensorState::Done;
                Ok(SensorStep::UnknownUser)
            }
            (SensorState::AwaitTemplate, Message::Locked) => {
                self.state = SensorState::Done;
                Ok(SensorStep::Locked)
            }
            (SensorState::AwaitResult, Message::ResultSet(set)) => {
                if set.elements.len() as u64 != self.params.alpha() + 1 {
                    return Err(Error::Protocol("compare set has the wrong size"));
                }
                self.state = SensorState::Done;
                Ok(SensorStep::Verdict(sensor_decide(&set, self.share)?))
            }
            _ => Err(Error::Protocol("unexpected message")),
        }
    }
}
