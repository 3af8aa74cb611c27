//! Miller-Rabin primality testing and safe-prime search.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::RngCore;

use crate::{Error, Result, Stage};

/// Rounds used for every primality decision that ends up in a key.
pub const MR_ROUNDS: usize = 40;

/// Smallest modulus size accepted by [`generate_safe_prime`].
pub const MIN_SAFE_PRIME_BITS: u64 = 16;

const SIEVE_LIMIT: u32 = 4096;

fn small_primes() -> &'static [u32] {
    use std::sync::OnceLock;
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let limit = SIEVE_LIMIT as usize;
        let mut composite = vec![false; limit];
        let mut out = Vec::new();
        for n in 2..limit {
            if !composite[n] {
                out.push(n as u32);
                let mut m = n * n;
                while m < limit {
                    composite[m] = true;
                    m += n;
                }
            }
        }
        out
    })
}

/// Probabilistic primality test: trial division by small primes, then
/// `rounds` Miller-Rabin rounds with bases drawn from `rng`.
pub fn is_probable_prime<R: RngCore + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    for &sp in small_primes() {
        let sp_big = BigUint::from(sp);
        if *n == sp_big {
            return true;
        }
        if (n % sp).is_zero() {
            return false;
        }
    }

    let n_minus_one = n - 1u32;
    let shift = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> shift;
    let upper = n - 1u32; // bases drawn from [2, n-2]

    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &upper);
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_one {
            continue;
        }
        for _ in 1..shift {
            x = &x * &x % n;
            if x == n_minus_one {
                continue 'witness;
            }
            if x.is_one() {
                return false;
            }
        }
        return false;
    }
    true
}

/// Searches for a safe prime `p = 2q + 1` (both prime) of exactly `bits` bits.
///
/// Candidates for `q` are scanned upward from a random odd start; a residue
/// table over the primes below 4096 rejects any `q` for which `q` or `2q + 1`
/// has a small factor before any modular exponentiation happens.
pub fn generate_safe_prime<R: RngCore + ?Sized>(bits: u64, rng: &mut R) -> Result<(BigUint, BigUint)> {
    if bits < MIN_SAFE_PRIME_BITS {
        return Err(Error::parameter(
            Stage::ElGamal,
            format!("modulus must have at least {MIN_SAFE_PRIME_BITS} bits, got {bits}"),
        ));
    }
    let q_bits = bits - 1;
    let q_low = BigUint::one() << (q_bits - 1);
    let q_high = BigUint::one() << q_bits;
    let primes = small_primes();
    let two = BigUint::from(2u32);

    loop {
        let mut start = rng.gen_biguint_range(&q_low, &q_high);
        start.set_bit(0, true);
        let residues: Vec<u32> = primes
            .iter()
            .map(|&sp| (&start % sp).to_u32().expect("residue below u32"))
            .collect();

        let mut delta: u32 = 0;
        while delta < (1 << 20) {
            let sieved = primes.iter().zip(&residues).all(|(&sp, &r)| {
                let rq = ((r as u64 + delta as u64) % sp as u64) as u32;
                // q ≡ 0 rules out q, q ≡ (sp-1)/2 rules out 2q+1
                rq != 0 && rq != (sp - 1) / 2
            });
            let q = &start + delta;
            delta += 2;
            if q >= q_high {
                break;
            }
            if !sieved {
                continue;
            }
            let p = &q * &two + 1u32;
            // Cheap Fermat filter on p before the full tests.
            if !two.modpow(&(&p - 1u32), &p).is_one() {
                continue;
            }
            if is_probable_prime(&q, MR_ROUNDS, rng) && is_probable_prime(&p, MR_ROUNDS, rng) {
                debug_assert_eq!(p.bits(), bits);
                return Ok((p, q));
            }
        }
    }
}

/// True if `p` is a safe prime, i.e. `p` and `(p - 1) / 2` both pass
/// [`MR_ROUNDS`] Miller-Rabin rounds.
pub fn is_safe_prime<R: RngCore + ?Sized>(p: &BigUint, rng: &mut R) -> bool {
    if *p < BigUint::from(5u32) || p.is_even() {
        return false;
    }
    let q: BigUint = (p - 1u32) >> 1;
    is_probable_prime(&q, MR_ROUNDS, rng) && is_probable_prime(p, MR_ROUNDS, rng)
}
