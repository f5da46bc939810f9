use std::path::PathBuf;

use serde::Serialize;

/// Error for everything above the pure engines: files, HTTP, configuration.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("credential: {0}")]
    Credential(String),
    #[error("{path}: line {line}: {message}")]
    Input { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Core(#[from] promptshap_core::Error),
    #[error("transport: {message}")]
    Transport { message: String, status: Option<u16> },
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit codes, one per error class.
pub mod exit {
    pub const USAGE: u8 = 2;
    pub const CONFIG: u8 = 3;
    pub const CREDENTIAL: u8 = 4;
    pub const INPUT: u8 = 5;
    pub const COMPUTATION: u8 = 6;
    pub const TRANSPORT: u8 = 7;
    pub const IO: u8 = 8;
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn input(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Input { path: path.into(), line, message: message.into() }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Usage(_) => "usage",
            Error::Config(_) => "config",
            Error::Credential(_) => "credential",
            Error::Input { .. } => "input",
            Error::Core(_) => "computation",
            Error::Transport { .. } => "transport",
            Error::Protocol(_) => "protocol",
            Error::Io { .. } => "io",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Usage(_) => exit::USAGE,
            Error::Config(_) => exit::CONFIG,
            Error::Credential(_) => exit::CREDENTIAL,
            Error::Input { .. } => exit::INPUT,
            Error::Core(_) => exit::COMPUTATION,
            Error::Transport { .. } | Error::Protocol(_) => exit::TRANSPORT,
            Error::Io { .. } => exit::IO,
        }
    }

    /// Machine-readable form written to stderr by the CLI.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            error: &'a str,
            exit_code: u8,
            message: String,
            #[serde(skip_serializing_if = "Option::is_none")]
            status: Option<u16>,
        }
        let status = match self {
            Error::Transport { status, .. } => *status,
            _ => None,
        };
        serde_json::to_string(&Doc { error: self.kind(), exit_code: self.exit_code(), message: self.to_string(), status })
            .expect("error document serializes")
    }
}
