use chrono::{DateTime, Utc};
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("window starting {start} is not aligned to a {resolution_minutes}-minute boundary")]
    Alignment {
        start: DateTime<Utc>,
        resolution_minutes: u32,
    },

    #[error("invalid market resolution: {0}")]
    Resolution(String),

    #[error("expected {expected} values, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("{0}")]
    Domain(String),

    #[error("{0}")]
    Data(String),

    #[error("{file}:{line}:{column}: {message}")]
    Parse {
        file: String,
        line: u64,
        column: usize,
        message: String,
    },

    #[error("duplicate timestamp {timestamp} in {file}")]
    DuplicateTimestamp { file: String, timestamp: DateTime<Utc> },

    #[error("timestamps in {file} are not aligned to {resolution_minutes} minutes: {}", format_timestamps(.timestamps))]
    MisalignedSeries {
        file: String,
        resolution_minutes: u32,
        timestamps: Vec<DateTime<Utc>>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors caused by user input rather than the environment.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}

fn format_timestamps(ts: &[DateTime<Utc>]) -> String {
    const SHOWN: usize = 8;
    let mut out: Vec<String> = ts.iter().take(SHOWN).map(|t| t.to_rfc3339()).collect();
    if ts.len() > SHOWN {
        out.push(format!("... ({} more)", ts.len() - SHOWN));
    }
    out.join(", ")
}
