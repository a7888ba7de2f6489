use thiserror::Error;

/// Everything a command can fail with. Each variant family maps to one exit
/// code; see [`CliError::exit_code`].
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error(transparent)]
    Core(#[from] mstat_core::Error),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("{0}")]
    Usage(String),
}

pub mod exit {
    pub const OK: i32 = 0;
    pub const INPUT: i32 = 2;
    pub const DEGENERATE: i32 = 3;
    pub const DOMAIN: i32 = 4;
    pub const IO: i32 = 5;
    pub const USAGE: i32 = 64;
}

impl CliError {
    pub fn io(path: impl std::fmt::Display, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Row { .. } => exit::INPUT,
            CliError::Core(e) => match e.code() {
                "degenerate" | "ill_conditioned" => exit::DEGENERATE,
                "domain" | "cut_locus" | "hemisphere" => exit::DOMAIN,
                _ => exit::INPUT,
            },
            CliError::Io { .. } => exit::IO,
            CliError::Usage(_) => exit::USAGE,
        }
    }

    /// Machine-readable reason, the second field of the error line.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Input(_) | CliError::Row { .. } => "input",
            CliError::Core(e) => e.code(),
            CliError::Io { .. } => "io",
            CliError::Usage(_) => "usage",
        }
    }

    /// `error: <code>: <message>` on a single line.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error: {}: {}", self.code(), msg.trim())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
