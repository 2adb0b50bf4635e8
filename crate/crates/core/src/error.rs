use core::fmt;

/// Errors raised by the numeric, quantization, crypto and protocol layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// An argument was outside the domain of the function (NaN, p outside (0,1), ...).
    Domain(&'static str),
    /// Correlation is ±1, so the genuine covariance matrix is singular.
    SingularCovariance,
    /// Two vectors that must agree in length did not.
    LengthMismatch { expected: usize, actual: usize },
    /// Bits-per-feature outside the supported range.
    BitsOutOfRange(u8),
    /// A blinding scalar of zero was requested.
    ZeroScalar,
    /// A byte string did not decode to a valid group element or scalar.
    InvalidEncoding(&'static str),
    /// The configuration is internally inconsistent.
    Config(&'static str),
    /// The peer sent something the protocol does not allow.
    Protocol(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(what) => write!(f, "argument out of domain: {what}"),
            Error::SingularCovariance => f.write_str("covariance matrix is singular (|rho| = 1)"),
            Error::LengthMismatch { expected, actual } => {
                write!(f, "length mismatch: expected {expected}, got {actual}")
            }
            Error::BitsOutOfRange(b) => write!(f, "bits per feature must be in 1..=8, got {b}"),
            Error::ZeroScalar => f.write_str("blinding scalar must be nonzero"),
            Error::InvalidEncoding(what) => write!(f, "invalid encoding: {what}"),
            Error::Config(what) => write!(f, "invalid configuration: {what}"),
            Error::Protocol(what) => write!(f, "protocol violation: {what}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
