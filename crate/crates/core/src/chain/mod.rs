//! Append-only, hash-chained block store.
//!
//! Blocks live in one file of length-prefixed records:
//!
//! ```text
//! record   := u32 BE record_len || header (92 bytes) || tx*
//! header   := index u64 || prev_hash [32] || merkle_root [32] || timestamp u64 || tx_count u32 || nonce u64
//! tx       := u32 BE len || data
//! ```
//!
//! `record_len` counts everything after itself. Two sidecar files sit next to
//! the block file:
//!
//! - `<path>.head`: `blocks=<n>` and `tip=<hex>`, replaced atomically after
//!   each record is synced. It is the commit point of an append: record bytes
//!   past the committed count are an interrupted append and are discarded by
//!   the next one. It also pins the tip's hash, which no successor covers.
//! - `<path>.access`: one `<unix-ts> <index> <pseudonym>` line per access.
//!
//! There is a single writer (`&mut self` on [`Chain::append_block`]); readers
//! only ever see committed blocks.

mod merkle;

use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

pub use merkle::{merkle_root, sha256, Hash32};

use crate::{Error, Result, Stage};

pub const HEADER_LEN: usize = 8 + 32 + 32 + 8 + 4 + 8;
const ZERO_HASH: Hash32 = [0; 32];

/// One transaction `D_i`; never empty.
#[derive(Clone, PartialEq, Eq)]
pub struct Transaction(Vec<u8>);

impl fmt::Debug for Transaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Transaction({} bytes)", self.0.len())
    }
}

impl Transaction {
    pub fn new(data: impl Into<Vec<u8>>) -> Result<Self> {
        let data = data.into();
        if data.is_empty() {
            return Err(Error::domain(Stage::Chain, "transactions must not be empty"));
        }
        Ok(Transaction(data))
    }

    pub fn data(&self) -> &[u8] {
        &self.0
    }
}

impl AsRef<[u8]> for Transaction {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockHeader {
    pub index: u64,
    pub prev_hash: Hash32,
    pub merkle_root: Hash32,
    pub timestamp: u64,
    pub tx_count: u32,
    pub nonce: u64,
}

impl BlockHeader {
    /// Canonical fixed-width big-endian serialization.
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..8].copy_from_slice(&self.index.to_be_bytes());
        out[8..40].copy_from_slice(&self.prev_hash);
        out[40..72].copy_from_slice(&self.merkle_root);
        out[72..80].copy_from_slice(&self.timestamp.to_be_bytes());
        out[80..84].copy_from_slice(&self.tx_count.to_be_bytes());
        out[84..92].copy_from_slice(&self.nonce.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8; HEADER_LEN]) -> Self {
        let u64_at = |i: usize| u64::from_be_bytes(bytes[i..i + 8].try_into().unwrap());
        BlockHeader {
            index: u64_at(0),
            prev_hash: bytes[8..40].try_into().unwrap(),
            merkle_root: bytes[40..72].try_into().unwrap(),
            timestamp: u64_at(72),
            tx_count: u32::from_be_bytes(bytes[80..84].try_into().unwrap()),
            nonce: u64_at(84),
        }
    }

    pub fn hash(&self) -> Hash32 {
        sha256(&self.to_bytes())
    }
}

/// SHA-256 over the canonical header bytes.
pub fn block_hash(header: &BlockHeader) -> Hash32 {
    header.hash()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    pub body: Vec<Transaction>,
}

impl Block {
    fn encode_record(&self) -> Vec<u8> {
        let body_len: usize = self.body.iter().map(|tx| 4 + tx.0.len()).sum();
        let record_len = HEADER_LEN + body_len;
        let mut out = Vec::with_capacity(4 + record_len);
        out.extend_from_slice(&(record_len as u32).to_be_bytes());
        out.extend_from_slice(&self.header.to_bytes());
        for tx in &self.body {
            out.extend_from_slice(&(tx.0.len() as u32).to_be_bytes());
            out.extend_from_slice(&tx.0);
        }
        out
    }

    /// Parses the record starting at `data[0]`; returns the block and the
    /// number of bytes consumed.
    fn decode_record(data: &[u8]) -> std::result::Result<(Block, usize), String> {
        let len_bytes: [u8; 4] = data.get(..4).ok_or("truncated record length")?.try_into().unwrap();
        let record_len = u32::from_be_bytes(len_bytes) as usize;
        let record = data.get(4..4 + record_len).ok_or("record runs past end of file")?;
        let header_bytes: &[u8; HEADER_LEN] = record
            .get(..HEADER_LEN)
            .ok_or("record shorter than a header")?
            .try_into()
            .unwrap();
        let header = BlockHeader::from_bytes(header_bytes);
        let mut body = Vec::with_capacity(header.tx_count.min(1 << 16) as usize);
        let mut pos = HEADER_LEN;
        for i in 0..header.tx_count {
            let len_bytes: [u8; 4] = record
                .get(pos..pos + 4)
                .ok_or_else(|| format!("transaction {i} length runs past the record"))?
                .try_into()
                .unwrap();
            let len = u32::from_be_bytes(len_bytes) as usize;
            let tx = record
                .get(pos + 4..pos + 4 + len)
                .ok_or_else(|| format!("transaction {i} runs past the record"))?;
            if tx.is_empty() {
                return Err(format!("transaction {i} is empty"));
            }
            body.push(Transaction(tx.to_vec()));
            pos += 4 + len;
        }
        if pos != record.len() {
            return Err("record length disagrees with its transactions".into());
        }
        if body.is_empty() {
            return Err("block has no transactions".into());
        }
        Ok((Block { header, body }, 4 + record_len))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    /// The record could not be parsed.
    Malformed(String),
    IndexMismatch { found: u64 },
    PrevHashMismatch,
    MerkleMismatch,
    NonceNotZero,
    /// The committed tip hash in the head file disagrees with the last block.
    TipMismatch,
    /// The block differs from the one this handle appended or loaded.
    Rewritten,
    /// The head file is missing or unreadable.
    BadHead(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub index: u64,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "block {}: ", self.index)?;
        match &self.kind {
            ViolationKind::Malformed(detail) => write!(f, "malformed record ({detail})"),
            ViolationKind::IndexMismatch { found } => write!(f, "stored index is {found}"),
            ViolationKind::PrevHashMismatch => f.write_str("prev_hash does not match the previous block"),
            ViolationKind::MerkleMismatch => f.write_str("merkle root does not match the body"),
            ViolationKind::NonceNotZero => f.write_str("nonce is not zero"),
            ViolationKind::TipMismatch => f.write_str("block hash does not match the committed tip"),
            ViolationKind::Rewritten => f.write_str("block changed since it was loaded"),
            ViolationKind::BadHead(detail) => write!(f, "head file: {detail}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Valid { blocks: u64 },
    Invalid(Violation),
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid { .. })
    }

    /// Index of the first bad block, if any.
    pub fn first_bad_index(&self) -> Option<u64> {
        match self {
            Verdict::Valid { .. } => None,
            Verdict::Invalid(v) => Some(v.index),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessRecord {
    pub timestamp: u64,
    pub index: u64,
    pub pseudonym: String,
}

#[derive(Debug, Clone, Copy)]
struct BlockRef {
    offset: u64,
    record_len: u64,
    hash: Hash32,
}

struct Head {
    blocks: u64,
    tip: Hash32,
}

impl Head {
    fn render(&self) -> String {
        format!("blocks={}\ntip={}\n", self.blocks, hex::encode(self.tip))
    }

    fn parse(text: &str) -> std::result::Result<Head, String> {
        let mut lines = text.strip_suffix('\n').ok_or("missing final newline")?.split('\n');
        let blocks = lines
            .next()
            .and_then(|l| l.strip_prefix("blocks="))
            .ok_or("missing blocks=")?;
        if blocks.is_empty() || !blocks.bytes().all(|b| b.is_ascii_digit()) {
            return Err("blocks= is not a decimal count".into());
        }
        let blocks: u64 = blocks.parse().map_err(|_| "block count out of range")?;
        let tip = lines.next().and_then(|l| l.strip_prefix("tip=")).ok_or("missing tip=")?;
        if tip.len() != 64 || !tip.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err("tip= is not 64 lowercase hex digits".into());
        }
        let tip: Hash32 = hex::decode(tip).unwrap().try_into().unwrap();
        if lines.next().is_some() {
            return Err("unexpected extra lines".into());
        }
        Ok(Head { blocks, tip })
    }
}

struct Scan {
    refs: Vec<BlockRef>,
    violation: Option<Violation>,
    committed_len: u64,
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

/// Walks the committed records and checks every link.
fn scan(path: &Path) -> Result<Scan> {
    let data = fs::read(path)?;
    let head_path = sidecar(path, ".head");
    let head_text = match fs::read(&head_path) {
        Ok(bytes) => String::from_utf8(bytes).map_err(|_| "head file is not UTF-8".to_string()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err("head file is missing".to_string()),
        Err(e) => return Err(e.into()),
    };
    let head = match head_text.and_then(|t| Head::parse(&t)) {
        Ok(head) => head,
        Err(detail) => {
            return Ok(Scan {
                refs: Vec::new(),
                violation: Some(Violation { index: 0, kind: ViolationKind::BadHead(detail) }),
                committed_len: 0,
            })
        }
    };

    let mut refs = Vec::new();
    let mut pos = 0usize;
    let mut prev = ZERO_HASH;
    let fail = |refs: Vec<BlockRef>, pos: usize, index: u64, kind| {
        Ok(Scan { refs, violation: Some(Violation { index, kind }), committed_len: pos as u64 })
    };
    for index in 0..head.blocks {
        let (block, consumed) = match Block::decode_record(&data[pos..]) {
            Ok(parsed) => parsed,
            Err(detail) => return fail(refs, pos, index, ViolationKind::Malformed(detail)),
        };
        let h = &block.header;
        let kind = if h.index != index {
            Some(ViolationKind::IndexMismatch { found: h.index })
        } else if h.prev_hash != prev {
            Some(ViolationKind::PrevHashMismatch)
        } else if h.nonce != 0 {
            Some(ViolationKind::NonceNotZero)
        } else if merkle_root(&block.body)? != h.merkle_root {
            Some(ViolationKind::MerkleMismatch)
        } else {
            None
        };
        if let Some(kind) = kind {
            return fail(refs, pos, index, kind);
        }
        prev = h.hash();
        refs.push(BlockRef { offset: pos as u64, record_len: consumed as u64, hash: prev });
        pos += consumed;
    }
    if head.tip != prev {
        return fail(refs, pos, head.blocks.saturating_sub(1), ViolationKind::TipMismatch);
    }
    Ok(Scan { refs, violation: None, committed_len: pos as u64 })
}

pub struct Chain {
    path: PathBuf,
    blocks: Vec<BlockRef>,
    committed_len: u64,
    /// First violation found when the chain was opened; blocks up to it are usable.
    fault: Option<Violation>,
}

impl fmt::Debug for Chain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Chain")
            .field("path", &self.path)
            .field("blocks", &self.blocks.len())
            .field("fault", &self.fault)
            .finish()
    }
}

impl Chain {
    /// Creates an empty chain at `path`. Fails if the file already exists.
    pub fn create(path: impl AsRef<Path>) -> Result<Chain> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new().write(true).create_new(true).open(&path)?;
        file.sync_all()?;
        write_head(&path, &Head { blocks: 0, tip: ZERO_HASH })?;
        Ok(Chain { path, blocks: Vec::new(), committed_len: 0, fault: None })
    }

    /// Opens an existing chain and rebuilds the in-memory index.
    ///
    /// Damage does not make this fail: blocks before the first violation are
    /// indexed and the violation is kept for [`Chain::fault`],
    /// [`Chain::verify_chain`] and to refuse further appends.
    pub fn open(path: impl AsRef<Path>) -> Result<Chain> {
        let path = path.as_ref().to_path_buf();
        let scan = scan(&path)?;
        Ok(Chain { path, blocks: scan.refs, committed_len: scan.committed_len, fault: scan.violation })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn fault(&self) -> Option<&Violation> {
        self.fault.as_ref()
    }

    /// Hash of the last block, or all zeros for an empty chain.
    pub fn tip_hash(&self) -> Hash32 {
        self.blocks.last().map_or(ZERO_HASH, |b| b.hash)
    }

    /// Appends one block and returns its index.
    ///
    /// The record is written and synced before the head file is replaced, so
    /// an interruption leaves the previous chain intact.
    pub fn append_block(&mut self, txs: Vec<Transaction>, timestamp: u64) -> Result<u64> {
        if let Some(fault) = &self.fault {
            return Err(Error::Tamper { index: fault.index, detail: format!("refusing to append: {fault}") });
        }
        if txs.is_empty() {
            return Err(Error::domain(Stage::Chain, "a block needs at least one transaction"));
        }
        let tx_count = u32::try_from(txs.len())
            .map_err(|_| Error::domain(Stage::Chain, "too many transactions for one block"))?;
        let index = self.len();
        let header = BlockHeader {
            index,
            prev_hash: self.tip_hash(),
            merkle_root: merkle_root(&txs)?,
            timestamp,
            tx_count,
            nonce: 0,
        };
        let block = Block { header, body: txs };
        let record = block.encode_record();
        if record.len() - 4 > u32::MAX as usize {
            return Err(Error::domain(Stage::Chain, "block record exceeds 4 GiB"));
        }

        let mut file = OpenOptions::new().write(true).open(&self.path)?;
        file.set_len(self.committed_len)?;
        file.seek(SeekFrom::Start(self.committed_len))?;
        file.write_all(&record)?;
        file.sync_data()?;

        let hash = block.header.hash();
        write_head(&self.path, &Head { blocks: index + 1, tip: hash })?;
        self.blocks.push(BlockRef { offset: self.committed_len, record_len: record.len() as u64, hash });
        self.committed_len += record.len() as u64;
        Ok(index)
    }

    /// Reads block `index` from disk, re-checking its Merkle root and hash.
    pub fn get_block(&self, index: u64) -> Result<Block> {
        let r = *self
            .blocks
            .get(index as usize)
            .ok_or(Error::OutOfRange { index, len: self.len() })?;
        let mut file = File::open(&self.path)?;
        file.seek(SeekFrom::Start(r.offset))?;
        let mut record = Vec::with_capacity(r.record_len as usize);
        file.take(r.record_len).read_to_end(&mut record)?;
        let tamper = |detail: String| Error::Tamper { index, detail };
        let (block, consumed) = Block::decode_record(&record).map_err(tamper)?;
        if consumed as u64 != r.record_len {
            return Err(tamper("record length changed".into()));
        }
        if merkle_root(&block.body)? != block.header.merkle_root {
            return Err(tamper("merkle root does not match the body".into()));
        }
        if block.header.hash() != r.hash {
            return Err(tamper("header hash differs from the indexed block".into()));
        }
        Ok(block)
    }

    /// Re-reads the whole file and checks every block.
    pub fn verify_chain(&self) -> Result<Verdict> {
        let scan = scan(&self.path)?;
        for (i, (on_disk, known)) in scan.refs.iter().zip(&self.blocks).enumerate() {
            if on_disk.hash != known.hash {
                return Ok(Verdict::Invalid(Violation { index: i as u64, kind: ViolationKind::Rewritten }));
            }
        }
        if let Some(v) = scan.violation {
            return Ok(Verdict::Invalid(v));
        }
        if scan.refs.len() < self.blocks.len() {
            let index = scan.refs.len() as u64;
            return Ok(Verdict::Invalid(Violation {
                index,
                kind: ViolationKind::Malformed("committed block count shrank".into()),
            }));
        }
        Ok(Verdict::Valid { blocks: scan.refs.len() as u64 })
    }

    /// Records that `pseudonym` accessed block `index`.
    pub fn log_access(&self, index: u64, pseudonym: &str, timestamp: u64) -> Result<()> {
        if index >= self.len() {
            return Err(Error::OutOfRange { index, len: self.len() });
        }
        if pseudonym.is_empty() || pseudonym.chars().any(char::is_whitespace) {
            return Err(Error::domain(Stage::Chain, "pseudonyms must be non-empty and contain no whitespace"));
        }
        let mut log = OpenOptions::new().create(true).append(true).open(sidecar(&self.path, ".access"))?;
        log.write_all(format!("{timestamp} {index} {pseudonym}\n").as_bytes())?;
        log.sync_data()?;
        Ok(())
    }

    /// All access records, ordered by timestamp (ties keep log order).
    pub fn access_log(&self) -> Result<Vec<AccessRecord>> {
        let text = match fs::read_to_string(sidecar(&self.path, ".access")) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let bad = || Error::corruption(Stage::Chain, format!("access log line {} is malformed", n + 1));
            let mut parts = line.splitn(3, ' ');
            let timestamp = parts.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
            let index = parts.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
            let pseudonym = parts.next().filter(|p| !p.is_empty()).ok_or_else(bad)?.to_string();
            records.push(AccessRecord { timestamp, index, pseudonym });
        }
        records.sort_by_key(|r| r.timestamp);
        Ok(records)
    }

    pub fn accesses_for(&self, index: u64) -> Result<Vec<AccessRecord>> {
        Ok(self.access_log()?.into_iter().filter(|r| r.index == index).collect())
    }
}

fn write_head(path: &Path, head: &Head) -> Result<()> {
    let head_path = sidecar(path, ".head");
    let tmp = sidecar(path, ".head.tmp");
    let mut file = File::create(&tmp)?;
    file.write_all(head.render().as_bytes())?;
    file.sync_all()?;
    fs::rename(&tmp, &head_path)?;
    Ok(())
}
