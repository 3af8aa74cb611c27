//! Self-describing `.emrx` container and its split into chain transactions.
//!
//! ```text
//! version=1
//! chunk_width=300
//! total_digit_count=...
//! text_byte_count=...
//! image_width=0            (0 and 0 mean no image)
//! image_height=0
//! n_chunks=...
//! b=3
//! x0=10
//! cipher_component_bits=1024
//! key_fingerprint=<64 hex>
//!
//! ACGT...                  (one byte per base, no trailing newline)
//! ```

use std::collections::HashMap;

use crate::chain::Transaction;
use crate::dna::{self, DnaParams, DnaSeq};
use crate::pipeline::{EncryptedEmr, Envelope, PayloadLayout, FORMAT_VERSION};
use crate::{Error, Result, Stage};

const FIELDS: [&str; 11] = [
    "version",
    "chunk_width",
    "total_digit_count",
    "text_byte_count",
    "image_width",
    "image_height",
    "n_chunks",
    "b",
    "x0",
    "cipher_component_bits",
    "key_fingerprint",
];

fn corrupt(detail: impl Into<String>) -> Error {
    Error::corruption(Stage::Container, detail)
}

fn render_header(env: &Envelope) -> String {
    let l = &env.layout;
    let (iw, ih) = l.image_dims.unwrap_or((0, 0));
    let values = [
        env.version.to_string(),
        l.chunk_width.to_string(),
        l.total_digit_count.to_string(),
        l.text_byte_count.to_string(),
        iw.to_string(),
        ih.to_string(),
        l.n_chunks.to_string(),
        env.dna.b.to_string(),
        env.dna.x0.to_string(),
        env.cipher_component_bits.to_string(),
        hex::encode(env.key_fingerprint),
    ];
    let mut out = String::new();
    for (name, value) in FIELDS.iter().zip(values) {
        out.push_str(name);
        out.push('=');
        out.push_str(&value);
        out.push('\n');
    }
    out.push('\n');
    out
}

fn check_payload(enc: &EncryptedEmr) -> Result<()> {
    enc.envelope.validate()?;
    let expected = enc.envelope.payload_len()?;
    if enc.payload.len() != expected {
        return Err(corrupt(format!("payload has {} bases, envelope implies {expected}", enc.payload.len())));
    }
    Ok(())
}

/// Canonical container bytes. Fails on an empty or inconsistent record.
pub fn serialize_container(enc: &EncryptedEmr) -> Result<Vec<u8>> {
    if enc.payload.is_empty() {
        return Err(Error::domain(Stage::Container, "refusing to serialize an empty payload"));
    }
    check_payload(enc)?;
    let mut out = render_header(&enc.envelope).into_bytes();
    out.extend_from_slice(enc.payload.as_bytes());
    Ok(out)
}

fn parse_decimal<T: std::str::FromStr>(fields: &HashMap<&str, &str>, name: &str) -> Result<T> {
    let raw = fields.get(name).ok_or_else(|| corrupt(format!("missing field {name}")))?;
    let canonical = !raw.is_empty() && raw.bytes().all(|b| b.is_ascii_digit()) && (raw.len() == 1 || !raw.starts_with('0'));
    if !canonical {
        return Err(corrupt(format!("field {name} is not a decimal integer: {raw:?}")));
    }
    raw.parse().map_err(|_| corrupt(format!("field {name} is out of range: {raw}")))
}

/// Strict inverse of [`serialize_container`].
pub fn parse_container(bytes: &[u8]) -> Result<EncryptedEmr> {
    let split = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| corrupt("no blank line after the header"))?;
    let header = std::str::from_utf8(&bytes[..split]).map_err(|_| corrupt("header is not UTF-8"))?;
    let body = &bytes[split + 2..];

    let mut fields = HashMap::new();
    for line in header.split('\n') {
        let (name, value) = line.split_once('=').ok_or_else(|| corrupt(format!("header line without '=': {line:?}")))?;
        if fields.insert(name, value).is_some() {
            return Err(corrupt(format!("duplicate field {name}")));
        }
    }
    let version = fields.get("version").ok_or_else(|| corrupt("missing field version"))?;
    if *version != FORMAT_VERSION.to_string() {
        return Err(Error::Version(version.to_string()));
    }
    if let Some(unknown) = fields.keys().find(|k| !FIELDS.contains(k)) {
        return Err(corrupt(format!("unknown field {unknown}")));
    }

    let image_width: u32 = parse_decimal(&fields, "image_width")?;
    let image_height: u32 = parse_decimal(&fields, "image_height")?;
    let image_dims = match (image_width, image_height) {
        (0, 0) => None,
        (w, h) if w > 0 && h > 0 => Some((w, h)),
        _ => return Err(corrupt("image_width and image_height must both be zero or both positive")),
    };
    let fingerprint = fields.get("key_fingerprint").ok_or_else(|| corrupt("missing field key_fingerprint"))?;
    let key_fingerprint: [u8; 32] = (fingerprint.len() == 64 && fingerprint.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')))
        .then(|| hex::decode(fingerprint).ok())
        .flatten()
        .and_then(|v| v.try_into().ok())
        .ok_or_else(|| corrupt("field key_fingerprint is not 64 lowercase hex digits"))?;

    let envelope = Envelope {
        version: FORMAT_VERSION,
        layout: PayloadLayout {
            chunk_width: parse_decimal(&fields, "chunk_width")?,
            total_digit_count: parse_decimal(&fields, "total_digit_count")?,
            text_byte_count: parse_decimal(&fields, "text_byte_count")?,
            image_dims,
            n_chunks: parse_decimal(&fields, "n_chunks")?,
        },
        dna: DnaParams { b: parse_decimal(&fields, "b")?, x0: parse_decimal(&fields, "x0")? },
        cipher_component_bits: parse_decimal(&fields, "cipher_component_bits")?,
        key_fingerprint,
    };
    envelope.validate()?;
    let expected = envelope.payload_len()?;
    if body.len() != expected {
        return Err(corrupt(format!("payload length {} violates the length law (expected {expected})", body.len())));
    }
    let payload = DnaSeq::from_ascii(body.to_vec()).map_err(|e| corrupt(format!("payload: {e}")))?;
    Ok(EncryptedEmr { envelope, payload })
}

/// Splits a container into chain transactions: the header (with its blank
/// line) first, then one per chunk carrying the chunk's bases and the dummy
/// run that follows it. Concatenated in order they give the container bytes.
pub fn to_transactions(enc: &EncryptedEmr) -> Result<Vec<Transaction>> {
    let bytes = serialize_container(enc)?;
    let header_len = bytes.len() - enc.payload.len();
    let env = &enc.envelope;
    let chunk_len = env.cipher_component_bits as usize;
    let gaps = dna::schedule(&env.dna, env.layout.n_chunks - 1)?;

    let mut txs = Vec::with_capacity(env.layout.n_chunks + 1);
    txs.push(Transaction::new(&bytes[..header_len])?);
    let mut pos = header_len;
    for i in 0..env.layout.n_chunks {
        let len = chunk_len + gaps.get(i).map_or(0, |g| g.count as usize);
        txs.push(Transaction::new(&bytes[pos..pos + len])?);
        pos += len;
    }
    debug_assert_eq!(pos, bytes.len());
    Ok(txs)
}

/// Reassembles and parses a container from its transactions.
pub fn from_transactions(txs: &[Transaction]) -> Result<EncryptedEmr> {
    let bytes: Vec<u8> = txs.iter().flat_map(|tx| tx.data().iter().copied()).collect();
    let enc = parse_container(&bytes)?;
    if txs.len() != enc.envelope.layout.n_chunks + 1 {
        return Err(corrupt(format!(
            "expected {} transactions, found {}",
            enc.envelope.layout.n_chunks + 1,
            txs.len()
        )));
    }
    Ok(enc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elgamal::{keygen, GroupParams, KeyPair};
    use crate::emr::{sample_record, tests::arb_payload, EmrPayload};
    use crate::pipeline::{decrypt_emr, encrypt_emr, PipelineConfig};
    use crate::seeded_rng;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn keys() -> &'static KeyPair {
        static KEYS: OnceLock<KeyPair> = OnceLock::new();
        KEYS.get_or_init(|| {
            let mut rng = seeded_rng(128);
            let params = GroupParams::generate(128, &mut rng).unwrap();
            keygen(&params, &mut rng)
        })
    }

    fn encrypt(payload: &EmrPayload, seed: u64) -> EncryptedEmr {
        let config = PipelineConfig { chunk_width: 30, ..PipelineConfig::default() };
        encrypt_emr(payload, &keys().public, &config, &mut seeded_rng(seed)).unwrap()
    }

    #[test]
    fn header_is_canonical() {
        let enc = encrypt(&sample_record(), 1);
        let bytes = serialize_container(&enc).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        let (header, body) = text.split_once("\n\n").unwrap();
        let names: Vec<&str> = header.lines().map(|l| l.split_once('=').unwrap().0).collect();
        assert_eq!(names, FIELDS);
        assert!(header.contains("\nb=3\n") && header.contains("\nx0=10\n"));
        assert!(header.contains("\nimage_width=3\nimage_height=3\n"));
        assert!(header.contains("\ncipher_component_bits=128\n"));
        assert_eq!(body.as_bytes(), enc.payload.as_bytes());
        assert_eq!(serialize_container(&enc).unwrap(), bytes);
    }

    #[test]
    fn text_only_records_use_zero_dimensions() {
        let enc = encrypt(&EmrPayload::new("note", None), 2);
        let text = String::from_utf8(serialize_container(&enc).unwrap()).unwrap();
        assert!(text.contains("image_width=0\nimage_height=0\n"));
        assert_eq!(parse_container(text.as_bytes()).unwrap(), enc);
    }

    #[test]
    fn rejects_empty_payload() {
        let mut enc = encrypt(&sample_record(), 3);
        enc.payload = DnaSeq::from_ascii(Vec::new()).unwrap();
        assert!(serialize_container(&enc).is_err());
    }

    #[test]
    fn truncated_payload_violates_length_law() {
        let bytes = serialize_container(&encrypt(&sample_record(), 4)).unwrap();
        let err = parse_container(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(&err, Error::Corruption { detail, .. } if detail.contains("length law")), "{err}");
    }

    #[test]
    fn unknown_version() {
        let bytes = serialize_container(&encrypt(&sample_record(), 5)).unwrap();
        let text = String::from_utf8(bytes).unwrap().replacen("version=1", "version=2", 1);
        assert!(matches!(parse_container(text.as_bytes()), Err(Error::Version(v)) if v == "2"));
    }

    #[test]
    fn field_errors_name_the_field() {
        let text = String::from_utf8(serialize_container(&encrypt(&sample_record(), 6)).unwrap()).unwrap();
        for field in &FIELDS[1..] {
            let without: String = text
                .split_inclusive('\n')
                .filter(|l| !l.starts_with(&format!("{field}=")))
                .collect();
            let err = parse_container(without.as_bytes()).unwrap_err();
            assert!(err.to_string().contains(field), "{field}: {err}");
        }
        let bad = text.replacen("n_chunks=", "n_chunks=+", 1);
        assert!(parse_container(bad.as_bytes()).unwrap_err().to_string().contains("n_chunks"));
        let extra = text.replacen("version=1\n", "version=1\ncolour=red\n", 1);
        assert!(parse_container(extra.as_bytes()).unwrap_err().to_string().contains("colour"));
        let dup = text.replacen("b=3\n", "b=3\nb=3\n", 1);
        assert!(parse_container(dup.as_bytes()).is_err());
    }

    #[test]
    fn invalid_base_is_rejected() {
        let mut bytes = serialize_container(&encrypt(&sample_record(), 7)).unwrap();
        let last = bytes.len() - 1;
        bytes[last] = b'N';
        assert!(matches!(parse_container(&bytes), Err(Error::Corruption { stage: Stage::Container, .. })));
    }

    #[test]
    fn transactions_concatenate_to_the_container() {
        let enc = encrypt(&sample_record(), 8);
        let bytes = serialize_container(&enc).unwrap();
        let txs = to_transactions(&enc).unwrap();
        assert_eq!(txs.len(), enc.envelope.layout.n_chunks + 1);
        assert!(txs[0].data().ends_with(b"\n\n"));
        let joined: Vec<u8> = txs.iter().flat_map(|t| t.data().to_vec()).collect();
        assert_eq!(joined, bytes);
        assert_eq!(from_transactions(&txs).unwrap(), enc);
        assert!(from_transactions(&txs[..1]).is_err());
        let last = txs.last().unwrap().data().len();
        assert_eq!(last, 128, "the final chunk has no dummy run after it");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn parse_inverts_serialize(payload in arb_payload(200, 6), seed in any::<u64>()) {
            prop_assume!(!payload.is_empty());
            let enc = encrypt(&payload, seed);
            let bytes = serialize_container(&enc).unwrap();
            let parsed = parse_container(&bytes).unwrap();
            prop_assert_eq!(&parsed, &enc);
            prop_assert_eq!(decrypt_emr(&parsed, &keys().private).unwrap(), payload);
        }
    }
}
