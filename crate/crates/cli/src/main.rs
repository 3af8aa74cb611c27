use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use medchain::bench::{self, BenchConfig, SizeSpec};
use medchain::chain::{Chain, Transaction, Verdict};
use medchain::container;
use medchain::dna::DnaParams;
use medchain::elgamal::{keygen, GroupParams, PrivateKey, PublicKey, DEFAULT_KEY_BITS};
use medchain::emr::EmrPayload;
use medchain::pipeline::{self, max_chunk_width, PipelineConfig, DEFAULT_CHUNK_WIDTH};
use medchain::ppm::{self, PpmFormat};
use medchain::protocol;
use medchain::{entropy_rng, entropy_seed, seeded_rng, Rng};

#[derive(Parser)]
#[command(name = "medchain", version, about = "Two-fold (ElGamal + DNA) e-MR encryption and a hash-chained block store")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a fresh safe-prime group and key pair.
    Keygen {
        #[arg(long, default_value_t = DEFAULT_KEY_BITS)]
        bits: u64,
        /// Private key file; the public key goes to `<out>.pub`.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Encrypt a text file and/or a PPM image into a container.
    Encrypt {
        /// Public (or private) key file of the recipient.
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        text: Option<PathBuf>,
        /// P3 or P6 image, maxval 255.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Digits per chunk [default: 300, or the largest the key allows].
        #[arg(long)]
        chunk_width: Option<usize>,
        #[arg(long, default_value_t = 3)]
        b: u64,
        #[arg(long, default_value_t = 10)]
        x0: u64,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Decrypt a container back into its text and image.
    Decrypt {
        #[arg(long)]
        key: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_text: Option<PathBuf>,
        /// Written as binary PPM (P6).
        #[arg(long)]
        out_image: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Block store operations.
    Chain {
        #[command(subcommand)]
        op: ChainOp,
    },
    /// Run the five-actor sharing flow and print its transcript.
    Demo {
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, default_value_t = DEFAULT_KEY_BITS)]
        bits: u64,
        /// Keep the demo chain here instead of a temporary directory.
        #[arg(long)]
        chain: Option<PathBuf>,
    },
    /// Measure expansion and timings over synthetic records.
    Bench {
        /// Comma-separated sizes, e.g. `100K+200x200,10K`.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<SizeSpec>,
        #[arg(long)]
        out_csv: Option<PathBuf>,
        /// Use this key instead of generating one.
        #[arg(long)]
        key: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_KEY_BITS)]
        bits: u64,
        #[arg(long, default_value_t = 3)]
        runs: usize,
        #[arg(long, default_value_t = bench::DEFAULT_CAP_BYTES)]
        cap_bytes: usize,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[command(flatten)]
        seed: SeedArg,
    },
}

#[derive(Subcommand)]
enum ChainOp {
    /// Create an empty chain.
    Init {
        #[arg(long)]
        path: PathBuf,
    },
    /// Store a container as a new block and print its index.
    Append {
        #[arg(long)]
        path: PathBuf,
        #[arg(long)]
        container: PathBuf,
        /// Unix seconds [default: now].
        #[arg(long)]
        timestamp: Option<u64>,
    },
    /// Fetch a block and write its container.
    Get {
        #[arg(long)]
        path: PathBuf,
        #[arg(long)]
        index: u64,
        #[arg(long)]
        out: PathBuf,
        /// Record the access under this pseudonym.
        #[arg(long = "as")]
        pseudonym: Option<String>,
    },
    /// Check every block; exits nonzero at the first bad one.
    Verify {
        #[arg(long)]
        path: PathBuf,
    },
    /// List access records, optionally for one block.
    Log {
        #[arg(long)]
        path: PathBuf,
        #[arg(long)]
        index: Option<u64>,
    },
}

#[derive(Args)]
struct SeedArg {
    /// Seed for all randomness; omit for OS entropy.
    #[arg(long, env = "MEDCHAIN_SEED")]
    seed: Option<u64>,
}

impl SeedArg {
    fn rng(&self) -> Rng {
        self.seed.map_or_else(entropy_rng, seeded_rng)
    }

    fn value(&self) -> u64 {
        self.seed.unwrap_or_else(entropy_seed)
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, data: &[u8]) -> Result<()> {
    fs::write(path, data).with_context(|| format!("writing {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read(path)?).with_context(|| format!("{} is not UTF-8", path.display()))
}

fn now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn open_chain(path: &Path) -> Result<Chain> {
    Chain::open(path).with_context(|| format!("opening chain {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Keygen { bits, out, seed } => {
            let mut rng = seed.rng();
            let params = GroupParams::generate(bits, &mut rng)?;
            let keys = keygen(&params, &mut rng);
            write(&out, keys.private.to_key_file().as_bytes())?;
            let mut public = out.into_os_string();
            public.push(".pub");
            write(Path::new(&public), keys.public.to_key_file().as_bytes())?;
            println!("wrote {bits}-bit key pair");
        }
        Command::Encrypt { key, text, image, out, chunk_width, b, x0, seed, threads } => {
            let key = PublicKey::from_key_file(&read_text(&key)?)?;
            let text = text.as_deref().map(read).transpose()?.unwrap_or_default();
            let image = match image {
                Some(path) => Some(ppm::decode(&read(&path)?)?.0),
                None => None,
            };
            let config = PipelineConfig {
                chunk_width: chunk_width.unwrap_or_else(|| DEFAULT_CHUNK_WIDTH.min(max_chunk_width(key.params()))),
                dna: DnaParams::new(b, x0)?,
                threads,
            };
            let enc = pipeline::encrypt_emr(&EmrPayload::new(text, image), &key, &config, &mut seed.rng())?;
            write(&out, &container::serialize_container(&enc)?)?;
            println!(
                "{} chunks, {} bases -> {}",
                enc.envelope.layout.n_chunks,
                enc.payload.len(),
                out.display()
            );
        }
        Command::Decrypt { key, input, out_text, out_image, threads } => {
            let key = PrivateKey::from_key_file(&read_text(&key)?)?;
            let enc = container::parse_container(&read(&input)?)?;
            let payload = pipeline::decrypt_emr_with_threads(&enc, &key, threads)?;
            match out_text {
                Some(path) => write(&path, &payload.text)?,
                None if !payload.text.is_empty() => println!("{}", String::from_utf8_lossy(&payload.text)),
                None => {}
            }
            if let Some(path) = out_image {
                let Some(image) = &payload.image else { bail!("pipeline: the record has no image") };
                write(&path, &ppm::encode(image, PpmFormat::Binary))?;
            }
        }
        Command::Chain { op } => chain(op)?,
        Command::Demo { seed, bits, chain } => {
            let tmp;
            let path = match chain {
                Some(path) => path,
                None => {
                    tmp = tempfile::tempdir().context("creating a temporary directory")?;
                    tmp.path().join("demo.chain")
                }
            };
            let chain = Chain::create(&path).with_context(|| format!("creating chain {}", path.display()))?;
            let report = protocol::run_demo(chain, seed.value(), bits)?;
            for line in &report.transcript {
                println!("{line}");
            }
            if !report.matched() {
                bail!("protocol: recovered record differs from the original");
            }
        }
        Command::Bench { sizes, out_csv, key, bits, runs, cap_bytes, threads, seed } => {
            let keys = match key {
                Some(path) => {
                    let private = PrivateKey::from_key_file(&read_text(&path)?)?;
                    medchain::elgamal::KeyPair { public: private.public_key().clone(), private }
                }
                None => {
                    let mut rng = seed.rng();
                    keygen(&GroupParams::generate(bits, &mut rng)?, &mut rng)
                }
            };
            let pipeline = PipelineConfig { threads, ..PipelineConfig::for_key(&keys.public) };
            let config = BenchConfig { runs, cap_bytes, pipeline, seed: seed.value() };
            let dir = tempfile::tempdir().context("creating a temporary directory")?;
            let mut chain = Chain::create(dir.path().join("bench.chain"))?;
            let mut records = Vec::new();
            for spec in &sizes {
                let record = bench::run_one(spec, &keys, &config, &mut chain)?;
                eprintln!("{record}");
                records.push(record);
            }
            let csv = bench::to_csv(&records);
            match out_csv {
                Some(path) => write(&path, csv.as_bytes())?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn chain(op: ChainOp) -> Result<()> {
    match op {
        ChainOp::Init { path } => {
            Chain::create(&path).with_context(|| format!("creating chain {}", path.display()))?;
            println!("created {}", path.display());
        }
        ChainOp::Append { path, container: file, timestamp } => {
            let enc = container::parse_container(&read(&file)?)?;
            let txs: Vec<Transaction> = container::to_transactions(&enc)?;
            let index = open_chain(&path)?.append_block(txs, timestamp.unwrap_or_else(now))?;
            println!("{index}");
        }
        ChainOp::Get { path, index, out, pseudonym } => {
            let chain = open_chain(&path)?;
            if let Some(pseudonym) = pseudonym {
                chain.log_access(index, &pseudonym, now())?;
            }
            let block = chain.get_block(index)?;
            let enc = container::from_transactions(&block.body)?;
            write(&out, &container::serialize_container(&enc)?)?;
            println!("block {index}: {} transactions, timestamp {}", block.header.tx_count, block.header.timestamp);
        }
        ChainOp::Verify { path } => match open_chain(&path)?.verify_chain()? {
            Verdict::Valid { blocks } => println!("ok: {blocks} blocks verified"),
            Verdict::Invalid(violation) => bail!("chainstore: verification failed at {violation}"),
        },
        ChainOp::Log { path, index } => {
            let chain = open_chain(&path)?;
            let records = match index {
                Some(i) => chain.accesses_for(i)?,
                None => chain.access_log()?,
            };
            for r in records {
                println!("{} {} {}", r.timestamp, r.index, r.pseudonym);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
