//! Two-fold encryption of electronic medical records (e-MR) and a hash-chained
//! block store to keep them in.
//!
//! The encryption path turns a record (text bytes plus an optional RGB image)
//! into 3-digit decimal groups, splits those into fixed-width chunks, encrypts
//! each chunk with ElGamal, transcodes the ciphertext bits into DNA bases and
//! finally interleaves dummy bases between consecutive chunks following a
//! logarithmic schedule. The result is a self-describing container that can be
//! stored as one block of a [`chain::Chain`].
//!
//! Module map:
//!
//! - [`elgamal`], [`primes`]: group generation, keys, per-chunk encryption.
//! - [`emr`], [`ppm`]: record <-> digit stream <-> chunks, and pixmap I/O.
//! - [`dna`]: bit/base transcoding and the dummy-base schedule.
//! - [`pipeline`], [`container`]: the full encrypt/decrypt composition and its
//!   on-disk format.
//! - [`chain`]: Merkle roots, block headers and the append-only store.
//! - [`protocol`]: an in-process simulation of the five sharing actors.
//! - [`bench`]: size/time measurement harness.

pub mod bench;
pub mod chain;
pub mod container;
pub mod dna;
pub mod elgamal;
pub mod emr;
mod error;
pub mod pipeline;
pub mod ppm;
pub mod primes;
pub mod protocol;

pub use error::{Error, Result, Stage};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// The seedable random stream used throughout the crate.
pub type Rng = ChaCha20Rng;

/// Deterministic random stream for a `u64` seed.
pub fn seeded_rng(seed: u64) -> Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Random stream seeded from the operating system.
pub fn entropy_rng() -> Rng {
    ChaCha20Rng::from_entropy()
}

/// A seed drawn from the operating system, for callers that want to report it.
pub fn entropy_seed() -> u64 {
    rand::RngCore::next_u64(&mut rand::rngs::OsRng)
}
