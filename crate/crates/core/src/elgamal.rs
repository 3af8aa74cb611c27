//! ElGamal over a safe-prime group.
//!
//! Groups are `p = 2q + 1` with `p` and `q` prime. Generated groups use a
//! generator of the order-`q` subgroup (a quadratic residue). Groups loaded
//! from key files only need `g` to lie in `[2, p - 2]`, so textbook toy groups
//! such as `(p, g) = (23, 5)` stay usable in tests.

use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::RngCore;
use sha2::{Digest, Sha256};

use crate::primes::{self, is_safe_prime};
use crate::{seeded_rng, Error, Result, Stage};

/// Default modulus size.
pub const DEFAULT_KEY_BITS: u64 = 1024;

#[derive(Clone, PartialEq, Eq)]
pub struct GroupParams {
    p: BigUint,
    q: BigUint,
    g: BigUint,
}

impl fmt::Debug for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.p.bits() <= 64 {
            write!(f, "GroupParams(p={}, g={})", self.p, self.g)
        } else {
            write!(f, "GroupParams({}-bit p)", self.p.bits())
        }
    }
}

impl GroupParams {
    /// Generates a safe-prime group of exactly `bit_length` bits. Deterministic
    /// for a given random stream.
    pub fn generate<R: RngCore + ?Sized>(bit_length: u64, rng: &mut R) -> Result<Self> {
        let (p, q) = primes::generate_safe_prime(bit_length, rng)?;
        let two = BigUint::from(2u32);
        let upper = &p - 1u32;
        loop {
            let base = rng.gen_biguint_range(&two, &upper);
            let g = base.modpow(&two, &p);
            if !g.is_one() {
                return Ok(GroupParams { p, q, g });
            }
        }
    }

    /// Builds a group from a modulus and generator, checking that `p` is a
    /// safe prime and `g` lies in `[2, p - 2]`.
    pub fn new(p: BigUint, g: BigUint) -> Result<Self> {
        // Fixed seed: validation must not depend on ambient randomness.
        let mut rng = seeded_rng(0x5afe_9e1e);
        if !is_safe_prime(&p, &mut rng) {
            return Err(Error::parameter(Stage::ElGamal, "p is not a safe prime"));
        }
        if g < BigUint::from(2u32) || g > &p - 2u32 {
            return Err(Error::parameter(Stage::ElGamal, "g must lie in [2, p-2]"));
        }
        let q = (&p - 1u32) >> 1;
        Ok(GroupParams { p, q, g })
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    /// Bit length of the modulus.
    pub fn bits(&self) -> u64 {
        self.p.bits()
    }

    /// Whether `g` generates the prime-order subgroup (`g^q = 1`).
    pub fn generator_has_order_q(&self) -> bool {
        self.g.modpow(&self.q, &self.p).is_one()
    }

    fn check_element(&self, value: &BigUint, what: &str) -> Result<()> {
        if value.is_zero() || *value >= self.p {
            return Err(Error::domain(Stage::ElGamal, format!("{what} must lie in [1, p-1]")));
        }
        Ok(())
    }

    fn check_exponent(&self, value: &BigUint, what: &str) -> Result<()> {
        if value.is_zero() || *value >= self.q {
            return Err(Error::domain(Stage::ElGamal, format!("{what} must lie in [1, q-1]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CipherPair {
    pub c1: BigUint,
    pub c2: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    params: GroupParams,
    h: BigUint,
}

#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey {
    public: PublicKey,
    a: BigUint,
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrivateKey").field("public", &self.public).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub public: PublicKey,
    pub private: PrivateKey,
}

/// Draws `a` uniformly from `[1, q - 1]` and returns the pair with `h = g^a`.
pub fn keygen<R: RngCore + ?Sized>(params: &GroupParams, rng: &mut R) -> KeyPair {
    let a = rng.gen_biguint_range(&BigUint::one(), &params.q);
    let private = PrivateKey::from_secret(params.clone(), a).expect("sampled exponent is in range");
    KeyPair { public: private.public.clone(), private }
}

impl PublicKey {
    pub fn new(params: GroupParams, h: BigUint) -> Result<Self> {
        params.check_element(&h, "h")?;
        Ok(PublicKey { params, h })
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn h(&self) -> &BigUint {
        &self.h
    }

    /// Encrypts `m` with a fresh ephemeral exponent drawn from `[1, q - 1]`.
    pub fn encrypt<R: RngCore + ?Sized>(&self, m: &BigUint, rng: &mut R) -> Result<CipherPair> {
        self.params.check_element(m, "plaintext")?;
        let k = self.sample_ephemeral(rng);
        self.encrypt_with_k(m, &k)
    }

    /// Uniform ephemeral exponent in `[1, q - 1]`.
    pub fn sample_ephemeral<R: RngCore + ?Sized>(&self, rng: &mut R) -> BigUint {
        rng.gen_biguint_range(&BigUint::one(), &self.params.q)
    }

    /// `(g^k, m·h^k) mod p` for a caller-supplied `k`.
    pub fn encrypt_with_k(&self, m: &BigUint, k: &BigUint) -> Result<CipherPair> {
        let GroupParams { p, g, .. } = &self.params;
        self.params.check_element(m, "plaintext")?;
        self.params.check_exponent(k, "ephemeral k")?;
        let c1 = g.modpow(k, p);
        let c2 = m * self.h.modpow(k, p) % p;
        Ok(CipherPair { c1, c2 })
    }

    /// Canonical key-file rendering (`p=`, `g=`, `h=` lines).
    pub fn to_key_file(&self) -> String {
        format!("p={}\ng={}\nh={}\n", self.params.p, self.params.g, self.h)
    }

    /// SHA-256 of [`PublicKey::to_key_file`].
    pub fn fingerprint(&self) -> [u8; 32] {
        Sha256::digest(self.to_key_file().as_bytes()).into()
    }

    /// Parses a public key file. Private key files are accepted too; the
    /// secret line is ignored.
    pub fn from_key_file(text: &str) -> Result<Self> {
        let fields = KeyFields::parse(text)?;
        let params = GroupParams::new(fields.require("p")?, fields.require("g")?)?;
        PublicKey::new(params, fields.require("h")?)
    }
}

impl PrivateKey {
    /// Builds a private key from the secret exponent, deriving `h = g^a`.
    pub fn from_secret(params: GroupParams, a: BigUint) -> Result<Self> {
        params.check_exponent(&a, "secret a")?;
        let h = params.g.modpow(&a, &params.p);
        Ok(PrivateKey { public: PublicKey { params, h }, a })
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.public
    }

    pub fn params(&self) -> &GroupParams {
        &self.public.params
    }

    /// `c2 · (c1^a)^-1 mod p`, with the inverse folded into a single
    /// exponentiation: `(c1^a)^-1 = c1^(p-1-a)` since `c1^(p-1) = 1`.
    pub fn decrypt(&self, c: &CipherPair) -> Result<BigUint> {
        let p = &self.public.params.p;
        self.public.params.check_element(&c.c1, "c1")?;
        self.public.params.check_element(&c.c2, "c2")?;
        let inverse_shared = c.c1.modpow(&(p - 1u32 - &self.a), p);
        Ok(&c.c2 * inverse_shared % p)
    }

    pub fn to_key_file(&self) -> String {
        format!("{}a={}\n", self.public.to_key_file(), self.a)
    }

    /// Parses a private key file and checks that `h = g^a`.
    pub fn from_key_file(text: &str) -> Result<Self> {
        let fields = KeyFields::parse(text)?;
        let params = GroupParams::new(fields.require("p")?, fields.require("g")?)?;
        let key = PrivateKey::from_secret(params, fields.require("a")?)?;
        if key.public.h != fields.require("h")? {
            return Err(Error::parameter(Stage::ElGamal, "h does not equal g^a mod p"));
        }
        Ok(key)
    }
}

struct KeyFields(Vec<(String, BigUint)>);

impl KeyFields {
    fn parse(text: &str) -> Result<Self> {
        let mut out: Vec<(String, BigUint)> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (name, value) = line.split_once('=').ok_or_else(|| {
                Error::parameter(Stage::ElGamal, format!("key file line {}: expected name=value", n + 1))
            })?;
            if !matches!(name, "p" | "g" | "h" | "a") {
                return Err(Error::parameter(Stage::ElGamal, format!("key file: unknown field {name:?}")));
            }
            if out.iter().any(|(seen, _)| seen == name) {
                return Err(Error::parameter(Stage::ElGamal, format!("key file: duplicate field {name:?}")));
            }
            if value.is_empty() || !value.bytes().all(|b| b.is_ascii_digit()) {
                return Err(Error::parameter(Stage::ElGamal, format!("key file: {name} is not a decimal integer")));
            }
            let parsed = BigUint::parse_bytes(value.as_bytes(), 10).expect("validated decimal digits");
            out.push((name.to_string(), parsed));
        }
        Ok(KeyFields(out))
    }

    fn require(&self, name: &str) -> Result<BigUint> {
        self.0
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::parameter(Stage::ElGamal, format!("key file: missing field {name:?}")))
    }
}
