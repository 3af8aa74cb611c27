//! Size and timing measurements for the encrypt, decrypt and block-create
//! paths over synthetic records.
//!
//! Absolute times depend on the machine; the ratios are what carry over.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::RngCore;

use crate::chain::Chain;
use crate::container;
use crate::elgamal::KeyPair;
use crate::emr::{EmrPayload, Raster};
use crate::pipeline::{self, PipelineConfig};
use crate::{seeded_rng, Error, Result, Stage};

pub const CSV_HEADER: &str = "label,plain_bytes,cipher_bytes,expansion_ratio,encrypt_ms,decrypt_ms,enc_dec_ratio,block_create_ms";

/// Largest plaintext accepted by default (text plus image bytes).
pub const DEFAULT_CAP_BYTES: usize = 8 << 20;

/// A synthetic record size such as `100K+200x200`: text bytes (`K` = 1024,
/// `M` = 1024²) and/or an image `WxH`, joined by `+`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SizeSpec {
    pub label: String,
    pub text_bytes: usize,
    pub image: Option<(u32, u32)>,
}

impl SizeSpec {
    pub fn plain_bytes(&self) -> usize {
        self.text_bytes + self.image.map_or(0, |(w, h)| 3 * w as usize * h as usize)
    }
}

fn bad_spec(detail: String) -> Error {
    Error::parameter(Stage::Bench, detail)
}

impl FromStr for SizeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut text = None;
        let mut image = None;
        for term in s.split('+') {
            if let Some((w, h)) = term.split_once(['x', 'X']) {
                let parse = |v: &str| v.parse::<u32>().map_err(|_| bad_spec(format!("bad image size {term:?} in {s:?}")));
                if image.replace((parse(w)?, parse(h)?)).is_some() {
                    return Err(bad_spec(format!("more than one image in {s:?}")));
                }
            } else {
                let (digits, scale) = match term.as_bytes().last() {
                    Some(b'K' | b'k') => (&term[..term.len() - 1], 1024),
                    Some(b'M' | b'm') => (&term[..term.len() - 1], 1024 * 1024),
                    _ => (term, 1),
                };
                let n: usize = digits.parse().map_err(|_| bad_spec(format!("bad text size {term:?} in {s:?}")))?;
                let n = n.checked_mul(scale).ok_or_else(|| bad_spec(format!("{term:?} overflows")))?;
                if text.replace(n).is_some() {
                    return Err(bad_spec(format!("more than one text size in {s:?}")));
                }
            }
        }
        Ok(SizeSpec { label: s.to_string(), text_bytes: text.unwrap_or(0), image })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub label: String,
    pub plain_bytes: usize,
    pub cipher_bytes: usize,
    pub expansion_ratio: f64,
    pub encrypt_ms: f64,
    pub decrypt_ms: f64,
    pub enc_dec_ratio: f64,
    pub block_create_ms: f64,
}

impl BenchRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.4},{:.3},{:.3},{:.4},{:.3}",
            self.label,
            self.plain_bytes,
            self.cipher_bytes,
            self.expansion_ratio,
            self.encrypt_ms,
            self.decrypt_ms,
            self.enc_dec_ratio,
            self.block_create_ms
        )
    }
}

impl fmt::Display for BenchRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.csv_row())
    }
}

pub fn to_csv(records: &[BenchRecord]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Timed repetitions per size; the median is reported. At least 3.
    pub runs: usize,
    pub cap_bytes: usize,
    pub pipeline: PipelineConfig,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { runs: 3, cap_bytes: DEFAULT_CAP_BYTES, pipeline: PipelineConfig::default(), seed: 0 }
    }
}

/// Random text bytes and random RGB pixels of the requested sizes.
pub fn synthetic_payload<R: RngCore + ?Sized>(spec: &SizeSpec, rng: &mut R) -> EmrPayload {
    let mut text = vec![0u8; spec.text_bytes];
    rng.fill_bytes(&mut text);
    let image = spec.image.map(|(w, h)| {
        let mut rgb = vec![0u8; 3 * w as usize * h as usize];
        rng.fill_bytes(&mut rgb);
        Raster::new(w, h, rgb).expect("dimensions match")
    });
    EmrPayload::new(text, image)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn millis(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1000.0
}

/// Measures one size. Each run encrypts, decrypts (checking the result) and
/// appends the container to `chain`; block creation is timed separately from
/// encryption.
pub fn run_one(spec: &SizeSpec, keys: &KeyPair, config: &BenchConfig, chain: &mut Chain) -> Result<BenchRecord> {
    let plain_bytes = spec.plain_bytes();
    if plain_bytes == 0 {
        return Err(Error::Refused { stage: Stage::Bench, detail: format!("{}: zero-size record", spec.label) });
    }
    if plain_bytes > config.cap_bytes {
        return Err(Error::Refused {
            stage: Stage::Bench,
            detail: format!("{}: {plain_bytes} bytes exceeds the cap of {} bytes", spec.label, config.cap_bytes),
        });
    }
    if config.runs < 3 {
        return Err(Error::parameter(Stage::Bench, "at least 3 runs are needed for a median"));
    }
    let mut rng = seeded_rng(config.seed);
    let payload = synthetic_payload(spec, &mut rng);

    let (mut enc_ms, mut dec_ms, mut block_ms) = (Vec::new(), Vec::new(), Vec::new());
    let mut cipher_bytes = 0;
    for _ in 0..config.runs {
        let start = Instant::now();
        let enc = pipeline::encrypt_emr(&payload, &keys.public, &config.pipeline, &mut rng)?;
        enc_ms.push(millis(start));

        let start = Instant::now();
        let decrypted = pipeline::decrypt_emr_with_threads(&enc, &keys.private, config.pipeline.threads)?;
        dec_ms.push(millis(start));
        if decrypted != payload {
            return Err(Error::corruption(Stage::Bench, format!("{}: round trip mismatch", spec.label)));
        }

        cipher_bytes = container::serialize_container(&enc)?.len();
        let start = Instant::now();
        let txs = container::to_transactions(&enc)?;
        chain.append_block(txs, crate::protocol::EPOCH + chain.len())?;
        block_ms.push(millis(start));
    }

    let encrypt_ms = median(&mut enc_ms);
    let decrypt_ms = median(&mut dec_ms);
    Ok(BenchRecord {
        label: spec.label.clone(),
        plain_bytes,
        cipher_bytes,
        expansion_ratio: cipher_bytes as f64 / plain_bytes as f64,
        encrypt_ms,
        decrypt_ms,
        enc_dec_ratio: encrypt_ms / decrypt_ms,
        block_create_ms: median(&mut block_ms),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elgamal::{keygen, GroupParams};

    #[test]
    fn parses_size_specs() {
        let s: SizeSpec = "100K+200x200".parse().unwrap();
        assert_eq!((s.text_bytes, s.image), (102_400, Some((200, 200))));
        assert_eq!(s.plain_bytes(), 102_400 + 120_000);
        assert_eq!(s.label, "100K+200x200");
        let s: SizeSpec = "64x32".parse().unwrap();
        assert_eq!((s.text_bytes, s.image), (0, Some((64, 32))));
        let s: SizeSpec = "2M".parse().unwrap();
        assert_eq!(s.text_bytes, 2 << 20);
        let s: SizeSpec = "10+1x1".parse().unwrap();
        assert_eq!(s.plain_bytes(), 13);
        for bad in ["", "K", "1x", "x1", "1K+2K", "1x1+2x2", "-5", "1,2"] {
            assert!(bad.parse::<SizeSpec>().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn records_satisfy_their_identities() {
        let dir = tempfile::tempdir().unwrap();
        let mut chain = Chain::create(dir.path().join("bench.chain")).unwrap();
        let mut rng = seeded_rng(3);
        let keys = keygen(&GroupParams::generate(160, &mut rng).unwrap(), &mut rng);
        let config = BenchConfig { pipeline: PipelineConfig::for_key(&keys.public), ..BenchConfig::default() };
        let spec: SizeSpec = "2K+8x8".parse().unwrap();
        let r = run_one(&spec, &keys, &config, &mut chain).unwrap();
        assert_eq!(r.plain_bytes, 2048 + 192);
        assert_eq!(r.expansion_ratio, r.cipher_bytes as f64 / r.plain_bytes as f64);
        assert_eq!(r.enc_dec_ratio, r.encrypt_ms / r.decrypt_ms);
        assert_eq!(chain.len(), 3);
        let csv = to_csv(&[r]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.next().unwrap().split(',').count(), 8);
    }

    #[test]
    fn refuses_zero_and_oversize() {
        let dir = tempfile::tempdir().unwrap();
        let mut chain = Chain::create(dir.path().join("c")).unwrap();
        let mut rng = seeded_rng(4);
        let keys = keygen(&GroupParams::generate(128, &mut rng).unwrap(), &mut rng);
        let config = BenchConfig { cap_bytes: 1000, ..BenchConfig::default() };
        let zero: SizeSpec = "0".parse().unwrap();
        assert!(matches!(run_one(&zero, &keys, &config, &mut chain), Err(Error::Refused { .. })));
        let big: SizeSpec = "1001".parse().unwrap();
        let err = run_one(&big, &keys, &config, &mut chain).unwrap_err();
        assert!(matches!(err, Error::Refused { .. }) && err.to_string().contains("cap"));
        let few = BenchConfig { runs: 2, ..BenchConfig::default() };
        assert!(run_one(&"10".parse().unwrap(), &keys, &few, &mut chain).is_err());
    }
}
