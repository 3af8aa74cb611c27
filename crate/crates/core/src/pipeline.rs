//! The two-fold encryption pipeline.
//!
//! Encryption: record → digits → chunks → `'1'`-prefixed chunk integers →
//! ElGamal pairs → fixed-width bit strings → DNA → dummy-base interleaving.
//! Decryption runs the same stages backwards.
//!
//! The leading `'1'` on every chunk keeps zero out of the plaintext domain,
//! preserves leading zero digits inside a chunk, and doubles as a per-chunk
//! check that the right key was used.

use num_bigint::BigUint;
use num_traits::Pow;
use rand::RngCore;
use rayon::prelude::*;

use crate::dna::{self, DnaParams, DnaSeq, MODULUS_Q};
use crate::elgamal::{CipherPair, GroupParams, PrivateKey, PublicKey};
use crate::emr::{self, ChunkSet, DigitStream, EmrPayload};
use crate::{Error, Result, Stage};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_CHUNK_WIDTH: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineConfig {
    /// Decimal digits per plaintext chunk, before the sentinel.
    pub chunk_width: usize,
    pub dna: DnaParams,
    /// Worker threads for the per-chunk ElGamal stage; 1 runs inline.
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { chunk_width: DEFAULT_CHUNK_WIDTH, dna: DnaParams::default(), threads: 1 }
    }
}

impl PipelineConfig {
    /// Defaults, with the chunk width reduced if the key's modulus is too
    /// small for 300-digit chunks.
    pub fn for_key(key: &PublicKey) -> Self {
        let chunk_width = DEFAULT_CHUNK_WIDTH.min(max_chunk_width(key.params()));
        PipelineConfig { chunk_width, ..Default::default() }
    }
}

/// Largest chunk width `w` with `10^(w+1) < p`.
pub fn max_chunk_width(params: &GroupParams) -> usize {
    // p has at most `digits` decimal digits, so the answer is digits - 2 or digits - 1.
    let digits = params.p().to_string().len();
    let ten = BigUint::from(10u32);
    (1..digits).rev().find(|&w| Pow::pow(&ten, w as u32 + 1) < *params.p()).unwrap_or(0)
}

fn check_chunk_width(params: &GroupParams, chunk_width: usize) -> Result<()> {
    let max = max_chunk_width(params);
    if chunk_width == 0 || chunk_width > max {
        return Err(Error::parameter(
            Stage::Pipeline,
            format!("chunk width {chunk_width} does not fit a {}-bit modulus (max {max})", params.bits()),
        ));
    }
    Ok(())
}

/// Sizes needed to undo chunking and digit encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PayloadLayout {
    pub chunk_width: usize,
    pub total_digit_count: usize,
    pub text_byte_count: usize,
    pub image_dims: Option<(u32, u32)>,
    pub n_chunks: usize,
}

impl PayloadLayout {
    pub fn validate(&self, stage: Stage) -> Result<()> {
        let bad = |detail: String| Err(Error::corruption(stage, detail));
        if self.chunk_width == 0 {
            return bad("chunk_width is zero".into());
        }
        if let Some((w, h)) = self.image_dims {
            if w == 0 || h == 0 {
                return bad("image dimensions must be at least 1x1".into());
            }
        }
        let pixels = self.image_dims.map_or(0, |(w, h)| w as usize * h as usize);
        if self.total_digit_count != 3 * self.text_byte_count + 9 * pixels {
            return bad(format!("total_digit_count {} does not match the text and image sizes", self.total_digit_count));
        }
        if self.total_digit_count == 0 {
            return bad("empty payload".into());
        }
        if self.n_chunks != self.total_digit_count.div_ceil(self.chunk_width) {
            return bad(format!("n_chunks {} inconsistent with digit count and width", self.n_chunks));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub version: u32,
    pub layout: PayloadLayout,
    pub dna: DnaParams,
    /// Width of each serialized ciphertext component, equal to the bit length of `p`.
    pub cipher_component_bits: u32,
    /// SHA-256 of the recipient's public key file.
    pub key_fingerprint: [u8; 32],
}

impl Envelope {
    pub fn validate(&self) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Version(self.version.to_string()));
        }
        self.layout.validate(Stage::Container)?;
        self.dna.validate().map_err(|e| Error::corruption(Stage::Container, e.to_string()))?;
        if (self.cipher_component_bits as u64) < MODULUS_Q {
            return Err(Error::corruption(
                Stage::Container,
                format!("cipher_component_bits {} is below {MODULUS_Q}", self.cipher_component_bits),
            ));
        }
        Ok(())
    }

    /// Number of bases the payload must have.
    pub fn payload_len(&self) -> Result<usize> {
        dna::interleaved_len(&self.dna, self.cipher_component_bits as usize, self.layout.n_chunks)
    }
}

/// A two-fold encrypted record: cleartext envelope plus DNA payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedEmr {
    pub envelope: Envelope,
    pub payload: DnaSeq,
}

fn sentinel_plaintext(chunk: &str) -> BigUint {
    let mut digits = Vec::with_capacity(chunk.len() + 1);
    digits.push(b'1');
    digits.extend_from_slice(chunk.as_bytes());
    BigUint::parse_bytes(&digits, 10).expect("chunk is decimal digits")
}

fn strip_sentinel(m: &BigUint, chunk_width: usize, index: usize) -> Result<String> {
    let rendered = m.to_str_radix(10);
    if rendered.len() != chunk_width + 1 || !rendered.starts_with('1') {
        return Err(Error::wrong_key(
            Stage::Pipeline,
            format!("chunk {index} did not decrypt to a sentinel-prefixed value"),
        ));
    }
    Ok(rendered[1..].to_string())
}

/// Maps `f` over `items` in order, on a dedicated pool when `threads > 1`.
fn map_in_order<T, U, F>(threads: usize, items: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> Result<U> + Sync + Send,
{
    if threads <= 1 {
        return items.iter().enumerate().map(|(i, item)| f(i, item)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::parameter(Stage::Pipeline, format!("thread pool: {e}")))?;
    pool.install(|| items.par_iter().enumerate().map(|(i, item)| f(i, item)).collect())
}

/// The ElGamal fold on its own: digits, sentinel chunks, one pair per chunk.
///
/// Ephemeral exponents are drawn from `rng` in chunk order before any
/// exponentiation, so the output does not depend on `threads`.
pub fn encrypt_chunks<R: RngCore + ?Sized>(
    payload: &EmrPayload,
    key: &PublicKey,
    chunk_width: usize,
    threads: usize,
    rng: &mut R,
) -> Result<(PayloadLayout, Vec<CipherPair>)> {
    if payload.is_empty() {
        return Err(Error::domain(Stage::Pipeline, "refusing to encrypt an empty record"));
    }
    check_chunk_width(key.params(), chunk_width)?;
    let stream = emr::payload_to_digits(payload);
    let set = emr::chunkify(&stream, chunk_width)?;
    let plaintexts: Vec<BigUint> = set.chunks.iter().map(|c| sentinel_plaintext(c)).collect();
    let ephemerals: Vec<BigUint> = plaintexts.iter().map(|_| key.sample_ephemeral(rng)).collect();

    let pairs = map_in_order(threads, &plaintexts, |i, m| key.encrypt_with_k(m, &ephemerals[i]))?;

    let layout = PayloadLayout {
        chunk_width,
        total_digit_count: set.total_digit_count,
        text_byte_count: stream.text_byte_count,
        image_dims: stream.image_dims,
        n_chunks: set.chunks.len(),
    };
    Ok((layout, pairs))
}

/// Inverse of [`encrypt_chunks`].
pub fn decrypt_chunks(layout: &PayloadLayout, pairs: &[CipherPair], key: &PrivateKey, threads: usize) -> Result<EmrPayload> {
    layout.validate(Stage::Pipeline)?;
    if pairs.len() != layout.n_chunks {
        return Err(Error::corruption(
            Stage::Pipeline,
            format!("expected {} chunks, found {}", layout.n_chunks, pairs.len()),
        ));
    }
    let width = layout.chunk_width;
    let chunks = map_in_order(threads, pairs, |i, pair| {
        let m = key.decrypt(pair).map_err(|e| match e {
            Error::Domain { detail, .. } => Error::corruption(Stage::ElGamal, format!("chunk {i}: {detail}")),
            other => other,
        })?;
        strip_sentinel(&m, width, i)
    })?;

    let set = ChunkSet { chunks, total_digit_count: layout.total_digit_count, chunk_width: width };
    let digits = emr::dechunkify(&set)?;
    emr::digits_to_payload(&DigitStream {
        digits,
        text_byte_count: layout.text_byte_count,
        image_dims: layout.image_dims,
    })
}

/// `value` as exactly `width` big-endian bits.
fn push_fixed_width_bits(value: &BigUint, width: usize, out: &mut Vec<bool>) {
    debug_assert!(value.bits() as usize <= width);
    let bytes = value.to_bytes_be();
    let value_bits = bytes.len() * 8;
    out.extend(std::iter::repeat_n(false, width.saturating_sub(value_bits)));
    let skip = value_bits.saturating_sub(width);
    out.extend(
        bytes
            .iter()
            .flat_map(|b| (0..8).rev().map(move |i| b >> i & 1 == 1))
            .skip(skip),
    );
}

fn bits_to_biguint(bits: &[bool]) -> BigUint {
    let mut bytes = vec![0u8; bits.len().div_ceil(8)];
    let offset = bytes.len() * 8 - bits.len();
    for (i, &bit) in bits.iter().enumerate() {
        if bit {
            let pos = offset + i;
            bytes[pos / 8] |= 0x80 >> (pos % 8);
        }
    }
    BigUint::from_bytes_be(&bytes)
}

fn pair_to_dna(pair: &CipherPair, width: usize) -> DnaSeq {
    let mut bits = Vec::with_capacity(2 * width);
    push_fixed_width_bits(&pair.c1, width, &mut bits);
    push_fixed_width_bits(&pair.c2, width, &mut bits);
    dna::bits_to_dna(&bits).expect("2·width bits is even")
}

fn dna_to_pair(chunk: &DnaSeq, width: usize) -> Result<CipherPair> {
    let bits = dna::dna_to_bits(chunk.as_bytes())?;
    if bits.len() != 2 * width {
        return Err(Error::corruption(Stage::DnaCodec, "chunk has the wrong number of bases"));
    }
    Ok(CipherPair { c1: bits_to_biguint(&bits[..width]), c2: bits_to_biguint(&bits[width..]) })
}

/// Two-fold encryption of `payload` under `key`.
pub fn encrypt_emr<R: RngCore + ?Sized>(
    payload: &EmrPayload,
    key: &PublicKey,
    config: &PipelineConfig,
    rng: &mut R,
) -> Result<EncryptedEmr> {
    config.dna.validate()?;
    let width = key.params().bits() as usize;
    if (width as u64) < MODULUS_Q {
        return Err(Error::parameter(
            Stage::Pipeline,
            format!("a {width}-bit modulus gives DNA chunks shorter than Q = {MODULUS_Q} bases"),
        ));
    }
    let (layout, pairs) = encrypt_chunks(payload, key, config.chunk_width, config.threads, rng)?;
    let chunks: Vec<DnaSeq> = pairs.iter().map(|pair| pair_to_dna(pair, width)).collect();
    let payload = dna::interleave(&chunks, &config.dna)?;
    let envelope = Envelope {
        version: FORMAT_VERSION,
        layout,
        dna: config.dna,
        cipher_component_bits: width as u32,
        key_fingerprint: key.fingerprint(),
    };
    Ok(EncryptedEmr { envelope, payload })
}

pub fn decrypt_emr(enc: &EncryptedEmr, key: &PrivateKey) -> Result<EmrPayload> {
    decrypt_emr_with_threads(enc, key, 1)
}

pub fn decrypt_emr_with_threads(enc: &EncryptedEmr, key: &PrivateKey, threads: usize) -> Result<EmrPayload> {
    let env = &enc.envelope;
    env.validate()?;
    if key.public_key().fingerprint() != env.key_fingerprint {
        return Err(Error::wrong_key(Stage::Pipeline, "private key does not match the container's key fingerprint"));
    }
    decrypt_unchecked_key(enc, key, threads)
}

/// Decryption without the fingerprint shortcut; a wrong key surfaces through
/// the per-chunk sentinel check instead.
pub(crate) fn decrypt_unchecked_key(enc: &EncryptedEmr, key: &PrivateKey, threads: usize) -> Result<EmrPayload> {
    let env = &enc.envelope;
    env.validate()?;
    let width = env.cipher_component_bits as usize;
    if key.params().bits() as usize != width {
        return Err(Error::wrong_key(Stage::Pipeline, "key size differs from the container's component width"));
    }
    let chunks = dna::deinterleave(enc.payload.as_bytes(), width, env.layout.n_chunks, &env.dna)?;
    let pairs = chunks.iter().map(|c| dna_to_pair(c, width)).collect::<Result<Vec<_>>>()?;
    decrypt_chunks(&env.layout, &pairs, key, threads)
}

/// Analytic payload bases per plaintext byte, ignoring dummy bases:
/// a chunk carries `chunk_width / 3` bytes in `cipher_component_bits` bases.
pub fn analytic_expansion(chunk_width: usize, cipher_component_bits: u32) -> f64 {
    cipher_component_bits as f64 / (chunk_width as f64 / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elgamal::{keygen, GroupParams};
    use crate::emr::{sample_record, tests::arb_payload, Raster};
    use crate::seeded_rng;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    /// 160-bit group: DNA chunks of 160 bases, chunk width up to 46 digits.
    fn test_keys() -> &'static crate::elgamal::KeyPair {
        static KEYS: OnceLock<crate::elgamal::KeyPair> = OnceLock::new();
        KEYS.get_or_init(|| {
            let mut rng = seeded_rng(160);
            let params = GroupParams::generate(160, &mut rng).unwrap();
            keygen(&params, &mut rng)
        })
    }

    fn config(width: usize) -> PipelineConfig {
        PipelineConfig { chunk_width: width, ..Default::default() }
    }

    #[test]
    fn chunk_width_bounds() {
        let toy = GroupParams::new(BigUint::from(23u32), BigUint::from(5u32)).unwrap();
        assert_eq!(max_chunk_width(&toy), 0);
        let keys = test_keys();
        let max = max_chunk_width(keys.public.params());
        let ten = BigUint::from(10u32);
        assert!(Pow::pow(&ten, max as u32 + 1) < *keys.public.params().p());
        assert!(Pow::pow(&ten, max as u32 + 2) >= *keys.public.params().p());
        assert_eq!(PipelineConfig::for_key(&keys.public).chunk_width, max);
    }

    #[test]
    fn fixed_width_bit_round_trip() {
        for (v, w) in [(0u64, 3usize), (5, 3), (1, 130), (u64::MAX, 64), (300, 9)] {
            let mut bits = Vec::new();
            push_fixed_width_bits(&BigUint::from(v), w, &mut bits);
            assert_eq!(bits.len(), w);
            assert_eq!(bits_to_biguint(&bits), BigUint::from(v));
        }
    }

    #[test]
    fn sentinel_preserves_leading_zeros() {
        let m = sentinel_plaintext("000123");
        assert_eq!(m, BigUint::from(1_000_123u32));
        assert_eq!(strip_sentinel(&m, 6, 0).unwrap(), "000123");
        assert!(matches!(strip_sentinel(&BigUint::from(2_000_123u32), 6, 0), Err(Error::WrongKey { .. })));
        assert!(matches!(strip_sentinel(&BigUint::from(123u32), 6, 0), Err(Error::WrongKey { .. })));
    }

    #[test]
    fn sample_record_round_trip() {
        let keys = test_keys();
        let record = sample_record();
        let enc = encrypt_emr(&record, &keys.public, &config(40), &mut seeded_rng(1)).unwrap();
        // 138 digits in 40-digit chunks
        assert_eq!(enc.envelope.layout.n_chunks, 4);
        assert_eq!(enc.envelope.layout.total_digit_count, 138);
        assert_eq!(enc.payload.len(), enc.envelope.payload_len().unwrap());
        assert_eq!(enc.payload.len(), 4 * 160 + 59 + 26 + 18);
        assert_eq!(decrypt_emr(&enc, &keys.private).unwrap(), record);
    }

    #[test]
    fn single_chunk_has_no_dummies() {
        let keys = test_keys();
        let enc = encrypt_emr(&EmrPayload::new(&b"x"[..], None), &keys.public, &config(40), &mut seeded_rng(2)).unwrap();
        assert_eq!(enc.envelope.layout.n_chunks, 1);
        assert_eq!(enc.payload.len(), 160);
    }

    #[test]
    fn image_only_record() {
        let keys = test_keys();
        let record = EmrPayload::new(Vec::new(), Some(Raster::from_pixels(1, 1, &[[9, 8, 7]]).unwrap()));
        let enc = encrypt_emr(&record, &keys.public, &config(40), &mut seeded_rng(3)).unwrap();
        assert_eq!(decrypt_emr(&enc, &keys.private).unwrap(), record);
    }

    #[test]
    fn configuration_errors() {
        let keys = test_keys();
        let record = sample_record();
        let too_wide = config(max_chunk_width(keys.public.params()) + 1);
        assert!(matches!(
            encrypt_emr(&record, &keys.public, &too_wide, &mut seeded_rng(0)),
            Err(Error::Parameter { .. })
        ));
        assert!(matches!(
            encrypt_emr(&EmrPayload::default(), &keys.public, &config(40), &mut seeded_rng(0)),
            Err(Error::Domain { .. })
        ));
        let mut rng = seeded_rng(64);
        let small = keygen(&GroupParams::generate(64, &mut rng).unwrap(), &mut rng);
        assert!(matches!(
            encrypt_emr(&record, &small.public, &config(10), &mut rng),
            Err(Error::Parameter { .. })
        ));
    }

    #[test]
    fn wrong_key_is_detected_by_fingerprint_and_by_sentinel() {
        let keys = test_keys();
        let enc = encrypt_emr(&sample_record(), &keys.public, &config(40), &mut seeded_rng(4)).unwrap();
        let mut rng = seeded_rng(99);
        for _ in 0..5 {
            let other = keygen(keys.public.params(), &mut rng);
            assert!(matches!(decrypt_emr(&enc, &other.private), Err(Error::WrongKey { .. })));
            assert!(matches!(decrypt_unchecked_key(&enc, &other.private, 1), Err(Error::WrongKey { .. })));
        }
    }

    #[test]
    fn encryption_is_randomized() {
        let keys = test_keys();
        let record = sample_record();
        let a = encrypt_emr(&record, &keys.public, &config(40), &mut seeded_rng(5)).unwrap();
        let b = encrypt_emr(&record, &keys.public, &config(40), &mut seeded_rng(6)).unwrap();
        assert_ne!(a.payload, b.payload);
        assert_eq!(a.envelope, b.envelope);
        assert_eq!(decrypt_emr(&b, &keys.private).unwrap(), record);
        let again = encrypt_emr(&record, &keys.public, &config(40), &mut seeded_rng(5)).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let keys = test_keys();
        let record = EmrPayload::new(vec![42u8; 300], None);
        let one = encrypt_emr(&record, &keys.public, &config(30), &mut seeded_rng(7)).unwrap();
        let four = encrypt_emr(&record, &keys.public, &PipelineConfig { threads: 4, ..config(30) }, &mut seeded_rng(7)).unwrap();
        assert_eq!(one, four);
        assert_eq!(decrypt_emr_with_threads(&one, &keys.private, 4).unwrap(), record);
    }

    #[test]
    fn single_base_corruption_never_passes_silently() {
        let keys = test_keys();
        let record = EmrPayload::new(&b"corrupt me, one base at a time"[..], None);
        let enc = encrypt_emr(&record, &keys.public, &config(40), &mut seeded_rng(8)).unwrap();
        let width = enc.envelope.cipher_component_bits as usize;
        let gaps = dna::schedule(&enc.envelope.dna, enc.envelope.layout.n_chunks - 1).unwrap();
        let mut dummy_positions = Vec::new();
        let mut pos = 0;
        for i in 0..enc.envelope.layout.n_chunks {
            pos += width;
            if let Some(g) = gaps.get(i) {
                dummy_positions.extend(pos..pos + g.count as usize);
                pos += g.count as usize;
            }
        }
        for i in 0..enc.payload.len() {
            let mut bytes = enc.payload.as_bytes().to_vec();
            bytes[i] = if bytes[i] == b'A' { b'C' } else { b'A' };
            let tampered = EncryptedEmr { envelope: enc.envelope.clone(), payload: DnaSeq::from_ascii(bytes).unwrap() };
            let result = decrypt_emr(&tampered, &keys.private);
            if dummy_positions.contains(&i) {
                // Dummy bases carry no data.
                assert_eq!(result.unwrap(), record);
            } else {
                assert!(result.is_err(), "flip at {i} decrypted silently");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn round_trip(payload in arb_payload(300, 6).prop_filter("nonempty", |p| !p.is_empty()), seed in any::<u64>(), width in 1usize..=46) {
            let keys = test_keys();
            let enc = encrypt_emr(&payload, &keys.public, &config(width), &mut seeded_rng(seed)).unwrap();
            prop_assert_eq!(enc.payload.len(), enc.envelope.payload_len().unwrap());
            prop_assert_eq!(decrypt_emr(&enc, &keys.private).unwrap(), payload);
        }
    }
}
