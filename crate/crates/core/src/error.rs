use thiserror::Error;

/// Errors raised anywhere in the emulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent user data (shapes, non-finite values, duplicates).
    #[error("invalid data: {0}")]
    Data(String),

    /// A coordinate outside the simulator's or model's parameter space.
    #[error("point outside domain: {0}")]
    Domain(String),

    /// Invalid configuration of an operation (bad parameter ranges, too few points).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A numerical routine failed (singular system, non-convergence, indefinite matrix).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Artifact written by an incompatible format version.
    #[error("format version mismatch: file has version {found}, this library reads version {supported}")]
    Version { found: u32, supported: u32 },

    /// Artifact payload does not hash to the recorded checksum.
    #[error("checksum mismatch: expected {expected}, computed {computed}")]
    Checksum { expected: String, computed: String },

    /// Artifact of the wrong kind was loaded.
    #[error("artifact kind mismatch: expected `{expected}`, found `{found}`")]
    Kind { expected: String, found: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// Attaches context in front of the message while keeping the variant.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Data(m) => Error::Data(format!("{ctx}: {m}")),
            Error::Domain(m) => Error::Domain(format!("{ctx}: {m}")),
            Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
            Error::Numerical(m) => Error::Numerical(format!("{ctx}: {m}")),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
