//! DNA transcoding and the dynamic dummy-base schedule.
//!
//! Bit pairs map to bases as `00 → A`, `01 → C`, `10 → G`, `11 → T`.
//!
//! Between chunk `i` and chunk `i + 1` a run of dummy bases is inserted. Its
//! length is
//!
//! ```text
//! R = log_b(x),  S = floor(R · N) mod Q,  x = x0 + i,  N = 10000, Q = 100
//! ```
//!
//! and its content is a copy of the first `S` bases of chunk `i` when `S` is
//! even (`(-1)^S` positive) or of chunk `i + 1` when `S` is odd. The schedule
//! depends only on `(b, x0, i)`, so both sides recompute it and nothing about
//! it travels with the ciphertext.

use std::fmt;

use num_bigint::BigUint;
use num_traits::Pow;

use crate::{Error, Result, Stage};

/// Scale constant `N` applied to the logarithm before reduction.
pub const SCALE_N: u64 = 10_000;
/// Modulus `Q`; every dummy run is shorter than this.
pub const MODULUS_Q: u64 = 100;

/// Schedule parameters: logarithm base `b` and starting value `x0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DnaParams {
    pub b: u64,
    pub x0: u64,
}

impl Default for DnaParams {
    fn default() -> Self {
        DnaParams { b: 3, x0: 10 }
    }
}

impl DnaParams {
    pub fn new(b: u64, x0: u64) -> Result<Self> {
        let params = DnaParams { b, x0 };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.b < 2 {
            return Err(Error::parameter(Stage::DnaCodec, format!("log base b must be >= 2, got {}", self.b)));
        }
        if self.x0 < 2 {
            return Err(Error::parameter(Stage::DnaCodec, format!("x0 must be >= 2, got {}", self.x0)));
        }
        Ok(())
    }
}

/// A sequence over `{A, C, G, T}`, one ASCII byte per base.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct DnaSeq(Vec<u8>);

impl fmt::Debug for DnaSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 48;
        let head = String::from_utf8_lossy(&self.0[..self.0.len().min(SHOWN)]);
        if self.0.len() > SHOWN {
            write!(f, "DnaSeq({head}… {} bases)", self.0.len())
        } else {
            write!(f, "DnaSeq({head})")
        }
    }
}

impl DnaSeq {
    /// Validates that every byte is one of `A`, `C`, `G`, `T`.
    pub fn from_ascii(bases: Vec<u8>) -> Result<Self> {
        if let Some(pos) = bases.iter().position(|b| base_value(*b).is_none()) {
            return Err(Error::corruption(
                Stage::DnaCodec,
                format!("invalid base {:?} at position {pos}", bases[pos] as char),
            ));
        }
        Ok(DnaSeq(bases))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.0).expect("alphabet is ascii")
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }
}

const BASES: [u8; 4] = *b"ACGT";

fn base_value(b: u8) -> Option<u8> {
    match b {
        b'A' => Some(0),
        b'C' => Some(1),
        b'G' => Some(2),
        b'T' => Some(3),
        _ => None,
    }
}

pub fn bits_to_dna(bits: &[bool]) -> Result<DnaSeq> {
    if !bits.len().is_multiple_of(2) {
        return Err(Error::domain(Stage::DnaCodec, format!("odd bit count {}", bits.len())));
    }
    Ok(DnaSeq(
        bits.chunks(2)
            .map(|pair| BASES[(pair[0] as usize) << 1 | pair[1] as usize])
            .collect(),
    ))
}

pub fn dna_to_bits(seq: &[u8]) -> Result<Vec<bool>> {
    let mut bits = Vec::with_capacity(seq.len() * 2);
    for (pos, &b) in seq.iter().enumerate() {
        let v = base_value(b).ok_or_else(|| {
            Error::corruption(Stage::DnaCodec, format!("invalid base {:?} at position {pos}", b as char))
        })?;
        bits.push(v & 2 != 0);
        bits.push(v & 1 != 0);
    }
    Ok(bits)
}

/// Byte-oriented form of [`bits_to_dna`]: four bases per byte, MSB first.
pub fn bytes_to_dna(bytes: &[u8]) -> DnaSeq {
    let mut out = Vec::with_capacity(bytes.len() * 4);
    for &byte in bytes {
        for shift in [6, 4, 2, 0] {
            out.push(BASES[((byte >> shift) & 3) as usize]);
        }
    }
    DnaSeq(out)
}

/// Inverse of [`bytes_to_dna`]; the length must be a multiple of four.
pub fn dna_to_bytes(seq: &[u8]) -> Result<Vec<u8>> {
    if !seq.len().is_multiple_of(4) {
        return Err(Error::corruption(Stage::DnaCodec, "base count is not a multiple of four"));
    }
    let mut out = Vec::with_capacity(seq.len() / 4);
    for (i, quad) in seq.chunks(4).enumerate() {
        let mut byte = 0u8;
        for (j, &b) in quad.iter().enumerate() {
            let v = base_value(b).ok_or_else(|| {
                Error::corruption(Stage::DnaCodec, format!("invalid base {:?} at position {}", b as char, i * 4 + j))
            })?;
            byte = byte << 2 | v;
        }
        out.push(byte);
    }
    Ok(out)
}

/// `floor(N · log_b(x))`, exactly.
///
/// A double-precision estimate settles every value whose fractional part is
/// not within 1e-6 of an integer. Anything closer is decided with integers:
/// `F = floor(N · log_b x)` is the unique `F` with `b^F <= x^N < b^(F+1)`.
fn scaled_log_floor(b: u64, x: u64) -> u64 {
    let estimate = SCALE_N as f64 * (x as f64).ln() / (b as f64).ln();
    let frac = estimate - estimate.floor();
    if frac > 1e-6 && frac < 1.0 - 1e-6 {
        return estimate.floor() as u64;
    }
    let target: BigUint = Pow::pow(BigUint::from(x), SCALE_N);
    let base = BigUint::from(b);
    let mut f = estimate.round().max(0.0) as u64;
    let mut power: BigUint = Pow::pow(&base, f);
    while power > target {
        f -= 1;
        power /= &base;
    }
    loop {
        let next = &power * &base;
        if next > target {
            return f;
        }
        power = next;
        f += 1;
    }
}

/// `S = floor(log_b(x) · N) mod Q`.
pub fn dummy_count(params: &DnaParams, x: u64) -> Result<u64> {
    params.validate()?;
    if x < 2 {
        return Err(Error::domain(Stage::DnaCodec, format!("x must be >= 2, got {x}")));
    }
    Ok(scaled_log_floor(params.b, x) % MODULUS_Q)
}

/// Which chunk of a consecutive pair the dummy bases are copied from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    First,
    Second,
}

/// `w = (-1)^S`: positive (even `S`) picks the first chunk.
pub fn pick_side(s: u64) -> Side {
    if s.is_multiple_of(2) {
        Side::First
    } else {
        Side::Second
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GapEntry {
    pub x: u64,
    pub count: u64,
    pub side: Side,
}

/// Schedule for `gaps` consecutive gaps; gap `i` uses `x = x0 + i`.
pub fn schedule(params: &DnaParams, gaps: usize) -> Result<Vec<GapEntry>> {
    params.validate()?;
    (0..gaps as u64)
        .map(|i| {
            let x = params.x0 + i;
            let count = dummy_count(params, x)?;
            Ok(GapEntry { x, count, side: pick_side(count) })
        })
        .collect()
}

/// Total length of `n` chunks of length `chunk_len` after interleaving.
pub fn interleaved_len(params: &DnaParams, chunk_len: usize, n_chunks: usize) -> Result<usize> {
    let gaps = n_chunks.saturating_sub(1);
    let dummies: u64 = schedule(params, gaps)?.iter().map(|g| g.count).sum();
    Ok(chunk_len * n_chunks + dummies as usize)
}

fn check_chunk_len(len: usize) -> Result<()> {
    if (len as u64) < MODULUS_Q {
        return Err(Error::parameter(
            Stage::DnaCodec,
            format!("chunk length {len} is shorter than Q = {MODULUS_Q}"),
        ));
    }
    Ok(())
}

/// Joins chunks, inserting the scheduled dummy bases in every gap.
pub fn interleave(chunks: &[DnaSeq], params: &DnaParams) -> Result<DnaSeq> {
    let Some(first) = chunks.first() else {
        return Ok(DnaSeq::default());
    };
    let len = first.len();
    if chunks.iter().any(|c| c.len() != len) {
        return Err(Error::domain(Stage::DnaCodec, "chunks differ in length"));
    }
    if chunks.len() == 1 {
        return Ok(first.clone());
    }
    check_chunk_len(len)?;
    let gaps = schedule(params, chunks.len() - 1)?;
    let mut out = Vec::with_capacity(len * chunks.len() + gaps.iter().map(|g| g.count as usize).sum::<usize>());
    for (i, chunk) in chunks.iter().enumerate() {
        out.extend_from_slice(&chunk.0);
        if let Some(gap) = gaps.get(i) {
            let source = match gap.side {
                Side::First => chunk,
                Side::Second => &chunks[i + 1],
            };
            out.extend_from_slice(&source.0[..gap.count as usize]);
        }
    }
    Ok(DnaSeq(out))
}

/// Reads `chunk_len` bases, skips the scheduled dummy run, and repeats.
pub fn deinterleave(seq: &[u8], chunk_len: usize, n_chunks: usize, params: &DnaParams) -> Result<Vec<DnaSeq>> {
    if n_chunks == 0 {
        return if seq.is_empty() {
            Ok(Vec::new())
        } else {
            Err(Error::corruption(Stage::DnaCodec, "bases present but zero chunks expected"))
        };
    }
    if n_chunks > 1 {
        check_chunk_len(chunk_len)?;
    }
    let gaps = schedule(params, n_chunks - 1)?;
    let expected = chunk_len * n_chunks + gaps.iter().map(|g| g.count as usize).sum::<usize>();
    if seq.len() != expected {
        return Err(Error::corruption(
            Stage::DnaCodec,
            format!("expected {expected} bases for {n_chunks} chunks, found {}", seq.len()),
        ));
    }
    let mut chunks = Vec::with_capacity(n_chunks);
    let mut pos = 0;
    for i in 0..n_chunks {
        chunks.push(DnaSeq::from_ascii(seq[pos..pos + chunk_len].to_vec())?);
        pos += chunk_len;
        if let Some(gap) = gaps.get(i) {
            pos += gap.count as usize;
        }
    }
    Ok(chunks)
}
