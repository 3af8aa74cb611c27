use std::fmt;

/// Pipeline stage an error originated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    ElGamal,
    EmrCodec,
    DnaCodec,
    Pipeline,
    Container,
    Chain,
    Image,
    Protocol,
    Bench,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::ElGamal => "elgamal",
            Stage::EmrCodec => "emr-codec",
            Stage::DnaCodec => "dna-codec",
            Stage::Pipeline => "pipeline",
            Stage::Container => "container",
            Stage::Chain => "chainstore",
            Stage::Image => "image",
            Stage::Protocol => "protocol",
            Stage::Bench => "bench",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid parameters or configuration (bit lengths, chunk widths, groups).
    #[error("{stage}: invalid parameter: {detail}")]
    Parameter { stage: Stage, detail: String },

    /// An input outside the domain an operation accepts.
    #[error("{stage}: domain error: {detail}")]
    Domain { stage: Stage, detail: String },

    /// Data that cannot have been produced by the matching encoder.
    #[error("{stage}: corrupt data: {detail}")]
    Corruption { stage: Stage, detail: String },

    /// Decryption under a key that does not match the ciphertext.
    #[error("{stage}: wrong key or corrupted ciphertext: {detail}")]
    WrongKey { stage: Stage, detail: String },

    #[error("container: unsupported version {0:?}")]
    Version(String),

    /// A stored block failed verification.
    #[error("chainstore: block {index} failed verification: {detail}")]
    Tamper { index: u64, detail: String },

    #[error("chainstore: block index {index} out of range (chain has {len} blocks)")]
    OutOfRange { index: u64, len: u64 },

    #[error("{stage}: {detail}")]
    Refused { stage: Stage, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parameter(stage: Stage, detail: impl Into<String>) -> Self {
        Error::Parameter { stage, detail: detail.into() }
    }

    pub(crate) fn domain(stage: Stage, detail: impl Into<String>) -> Self {
        Error::Domain { stage, detail: detail.into() }
    }

    pub(crate) fn corruption(stage: Stage, detail: impl Into<String>) -> Self {
        Error::Corruption { stage, detail: detail.into() }
    }

    pub(crate) fn wrong_key(stage: Stage, detail: impl Into<String>) -> Self {
        Error::WrongKey { stage, detail: detail.into() }
    }

    /// The stage this error is attributed to, when it has one.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Parameter { stage, .. }
            | Error::Domain { stage, .. }
            | Error::Corruption { stage, .. }
            | Error::WrongKey { stage, .. }
            | Error::Refused { stage, .. } => Some(*stage),
            Error::Version(_) => Some(Stage::Container),
            Error::Tamper { .. } | Error::OutOfRange { .. } => Some(Stage::Chain),
            Error::Io(_) => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
