//! Core of a privacy-preserving biometric verifier.
//!
//! Features are quantized into equiprobable bins and compared through
//! precomputed log-likelihood-ratio lookup tables. Templates are stored as
//! rows of those tables, encrypted element-wise under exponent-encoded
//! ElGamal with a 2-of-2 split key, and a two-round protocol lets the sensor
//! learn only whether the summed score reaches the threshold.
//!
//! This crate is `no_std` (it needs `alloc`) and does no IO. Transport, key
//! files and the command-line tools live in the companion `biomatch` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod elgamal;
pub mod error;
pub mod group;
pub mod protocol;
pub mod quantization;
#[cfg(feature = "secp112r1")]
pub mod secp112r1;
pub mod stats;

pub use error::{Error, Result};
pub use group::{GroupId, PrimeGroup, Ristretto255};
#[cfg(feature = "secp112r1")]
pub use secp112r1::Secp112r1;
